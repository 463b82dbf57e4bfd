#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rcas {

class BrakingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Physical constants of the tram plus wheel-rail adhesion coefficients.
struct BrakingParams {
    double M = 21200.0;      // total mass [kg]
    double m_w = 195.0;      // wheel mass [kg]
    double r = 0.35;         // wheel radius [m]
    double K_t = 2352.0;     // traction constant [N*m per notch]
    double P_max = 360000.0; // total motor power [W]
    double a_a = 0.54;       // adhesion curve coefficients
    double b_a = 1.2;
    double c_a = 0.2;
    double d_a = 0.2;
    double g = 9.81;

    void validate() const;
    static BrakingParams from_json_text(const std::string& text);
    static BrakingParams load(const std::string& file);
    std::string to_json_text() const;

    /// Mutable access to a parameter by its field name (for identification).
    double& by_name(const std::string& name);
};

/// Instantaneous state of the longitudinal dynamics.
struct DynState {
    double T_mot = 0.0;     // motor torque [N*m]
    double omega_wh = 0.0;  // wheel angular speed [rad/s]
    double v_t = 0.0;       // vehicle speed [m/s]
    double s = 0.0;         // distance traveled [m]
    double t = 0.0;
};

struct TrajectorySample {
    double t;
    double s;
    double v;
};

struct BrakingTrajectory {
    std::vector<TrajectorySample> samples;  // 0.1 s grid plus the stop point
    double total_distance = 0.0;
    double total_time = 0.0;
    int mu_clamp_events = 0;

    /// Distance traveled at time t since braking start (clamps to the ends).
    double distance_at(double t) const;
};

/// Wheel-rail adhesion coefficient as a function of slip speed (unclamped).
double adhesion_mu(double v_s, const BrakingParams& p);

/// Running resistance [N] for forward speed v_t >= 0.
double running_resistance(double v_t, const BrakingParams& p);

/// Torque target for a notch command. The power limit engages when the
/// current |T_mot * omega_wh| reaches P_max; the limited target keeps the
/// notch's sign. At standstill (omega ~ 0) the limit is inactive.
double motor_torque_target(int notch, double T_mot, double omega_wh, const BrakingParams& p);

struct IntegrationOptions {
    double dt_int = 1e-3;        // RK4 step [s]
    double t_max = 120.0;        // divergence cutoff [s]
    double v_standstill = 0.2;   // terminal speed threshold [m/s]
    double mu_clamp = 0.5;       // physical adhesion ceiling
    double sample_dt = 0.1;      // trajectory sampling grid [s]
};

/// One fixed-step RK4 step of the full dynamics. The wheel is held at
/// omega = 0 while the torque balance pins it (no spin reversal). When
/// `s_quadrature` is given, the step's speed quadrature is accumulated into
/// it, so callers can verify that s integrates exactly ds/dt = v.
DynState plant_step(const DynState& st, int notch, double theta, double dt,
                    const BrakingParams& p, double mu_clamp = 0.5,
                    int* mu_clamp_events = nullptr, double* s_quadrature = nullptr);

/// Predicted maximal-service-braking trajectory (notch -7) from initial
/// speed v0 with the commanded brake torque already developed. Integrates
/// until the speed falls below the standstill threshold; the final sample is
/// the interpolated stop point. Throws BrakingError on divergence
/// ("diverged") or non-finite state ("numerical-failure").
BrakingTrajectory simulate_braking(double v0, const std::function<double(double)>& theta_of_s,
                                   const BrakingParams& p, const IntegrationOptions& opt = {});

/// d = v0^2 / (2 |a_br|). Throws std::invalid_argument when a_br == 0.
double braking_distance_naive(double v0, double a_br);

/// Measured deceleration run: (t, v) samples, v monotone decreasing to ~0.
struct BrakingRun {
    std::vector<std::pair<double, double>> tv;
};

BrakingRun load_braking_run_csv(const std::string& file);

struct IdentifyOptions {
    int sweeps = 3;               // coordinate-descent passes
    int golden_iters = 40;        // line-search iterations per parameter
    double mse_threshold = 0.25;  // [m^2/s^2]; above this -> "no-fit"
    IntegrationOptions integ;
};

struct IdentifyResult {
    BrakingParams params;
    double mse = 0.0;
    std::map<std::string, double> fitted;  // free parameters and their values
};

/// Fits the free parameters (named keys of `bounds`) to the measured runs by
/// minimizing the mean squared speed error between simulation and data.
/// Cyclic coordinate descent with a golden-section line search per parameter.
IdentifyResult identify_params(const std::vector<BrakingRun>& runs, const BrakingParams& fixed,
                               const std::map<std::string, std::pair<double, double>>& bounds,
                               const IdentifyOptions& opt = {});

/// Memoized speed -> braking-distance lookup on a 1 km/h grid with linear
/// interpolation, so the per-tick warning check stays cheap.
class BrakingTable {
  public:
    BrakingTable(const BrakingParams& p, double v_max_kmh = 80.0,
                 const IntegrationOptions& opt = {});
    double distance(double v) const;
    double max_speed() const { return v_max_; }

  private:
    std::vector<double> dist_;  // index i -> distance at i km/h
    double v_max_;
};

}  // namespace rcas
