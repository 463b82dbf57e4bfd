#pragma once

#include <Eigen/Dense>
#include <deque>
#include <optional>
#include <span>
#include <string>

#include "rcas/track_map.hpp"

namespace rcas {

struct KfParams {
    double dt = 0.1;
    double q = 1.0;             // process-noise intensity
    double sigma_pos = 25.0;    // variance of the projected s measurement [m^2]
    double sigma_speed = 0.25;  // GNSS speed variance [(m/s)^2]
    double sigma_accel = 0.1;   // IMU acceleration variance [(m/s^2)^2]
    double tacho_factor = 4.0;  // tachograph variance = tacho_factor * sigma_speed
    double sigma_standstill = 1e-4;  // tacho variance when it reports exact zero
    double p0 = 1.0;            // initial covariance scale (P0 = p0 * I)
    double gate_threshold = 3.0;
    int reset_window = 5;
    double path_lookahead = 400.0;  // path kept extended this far ahead of s [m]
    double max_offset = 25.0;       // off-track rejection for the position channel [m]

    Eigen::Matrix3d transition() const;
    Eigen::Matrix3d process_noise() const;
};

// status flags of the latest filter step
enum KfFlag : unsigned {
    kFlagAllRejected = 1u << 0,
    kFlagBlindSwitch = 1u << 1,
    kFlagPosOffTrack = 1u << 2,
    kFlagPosGated = 1u << 3,
    kFlagSpeedGated = 1u << 4,
    kFlagTachoGated = 1u << 5,
    kFlagAccelGated = 1u << 6,
    kFlagReset = 1u << 7,
};

struct KfState {
    Eigen::Vector3d x = Eigen::Vector3d::Zero();  // [s, v, a]
    Eigen::Matrix3d P = Eigen::Matrix3d::Identity();
    double t = 0.0;
    Path path;
    int mismatch_count = 0;
    unsigned flags = 0;

    TrackPosition track_position() const { return {x(0), path, 0.0}; }
};

struct MeasurementSet {
    std::optional<GeoPoint> gnss_pos;
    std::optional<double> gnss_speed;
    std::optional<double> tacho_speed;
    std::optional<double> imu_accel;
    double t = 0.0;

    bool empty() const { return !gnss_pos && !gnss_speed && !tacho_speed && !imu_accel; }
};

/// Constant-acceleration time update.
KfState kf_predict(const KfState& state, const KfParams& params);

/// Measurement update with row-wise H/R assembly over the available channels.
/// The position channel is the GNSS fix projected onto the state's path.
/// Channels failing the innovation gate are dropped for this update; if all
/// channels drop, the prediction is returned with kFlagAllRejected set.
KfState kf_update(const KfState& predicted, const MeasurementSet& meas, const TrackMap& map,
                  const KfParams& params);

/// Re-evaluates the branch hypothesis against recent GNSS fixes: picks the
/// candidate path (current, siblings at the last switch, or successor options
/// at the path end) with the smallest summed lateral offsets. Ties keep the
/// current hypothesis; empty history sets kFlagBlindSwitch.
KfState select_branch(const KfState& state, std::span<const GeoPoint> recent_gnss,
                      const TrackMap& map);

struct ResetCheck {
    KfState state;
    bool reset = false;
};

/// Mismatch bookkeeping: a GNSS fix closer to a sibling branch than to the
/// hypothesized one increments mismatch_count (agreement clears it). Reaching
/// reset_window re-initializes the filter on the measured branch with P = P0.
ResetCheck check_reset(const KfState& state, const MeasurementSet& meas, const TrackMap& map,
                       const KfParams& params);

std::string kf_csv_header();
std::string kf_csv_row(const KfState& state);

/// Per-agent estimation pipeline: initialization from the first usable GNSS
/// fix, predict/update cadence, branch selection at switches and reset
/// handling. One instance per tram; instances are independent.
class Estimator {
  public:
    Estimator(const TrackMap& map, KfParams params, Path initial_path = {});

    /// Advances the filter by one tick. Measurements may be partially or
    /// fully absent; before initialization, ticks without a GNSS fix are
    /// no-ops.
    void step(const MeasurementSet& meas);

    bool initialized() const { return initialized_; }
    const KfState& state() const { return state_; }
    int reset_count() const { return reset_count_; }

  private:
    void initialize(const MeasurementSet& meas);
    void maintain_path();

    const TrackMap& map_;
    KfParams params_;
    KfState state_;
    bool initialized_ = false;
    int reset_count_ = 0;
    Path initial_path_;
    std::deque<GeoPoint> gnss_history_;
};

}  // namespace rcas
