#include "rcas/braking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace rcas {

void BrakingParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw BrakingError(std::string("parameter ") + name + " must be > 0");
    };
    positive(M, "M");
    positive(m_w, "m_w");
    positive(r, "r");
    positive(K_t, "K_t");
    positive(P_max, "P_max");
    positive(a_a, "a_a");
    positive(b_a, "b_a");
    positive(g, "g");
    if (c_a < 0.0 || d_a < 0.0) throw BrakingError("adhesion parameters c_a, d_a must be >= 0");
}

BrakingParams BrakingParams::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw BrakingError(std::string("malformed parameter file: ") + e.what());
    }
    BrakingParams p;
    auto get = [&](const char* key, double& out) {
        if (j.contains(key)) out = j.at(key).get<double>();
    };
    get("M", p.M);
    get("m_w", p.m_w);
    get("r", p.r);
    get("K_t", p.K_t);
    get("P_max", p.P_max);
    get("a_a", p.a_a);
    get("b_a", p.b_a);
    get("c_a", p.c_a);
    get("d_a", p.d_a);
    get("g", p.g);
    p.validate();
    return p;
}

BrakingParams BrakingParams::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw BrakingError("cannot open parameter file: " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string BrakingParams::to_json_text() const {
    nlohmann::ordered_json j;
    j["M"] = M;
    j["m_w"] = m_w;
    j["r"] = r;
    j["K_t"] = K_t;
    j["P_max"] = P_max;
    j["a_a"] = a_a;
    j["b_a"] = b_a;
    j["c_a"] = c_a;
    j["d_a"] = d_a;
    j["g"] = g;
    return j.dump(2) + "\n";
}

double& BrakingParams::by_name(const std::string& name) {
    if (name == "M") return M;
    if (name == "m_w") return m_w;
    if (name == "r") return r;
    if (name == "K_t") return K_t;
    if (name == "P_max") return P_max;
    if (name == "a_a") return a_a;
    if (name == "b_a") return b_a;
    if (name == "c_a") return c_a;
    if (name == "d_a") return d_a;
    throw BrakingError("unknown parameter name: " + name);
}

double adhesion_mu(double v_s, const BrakingParams& p) {
    return p.c_a * std::exp(-p.a_a * v_s) - p.d_a * std::exp(-p.b_a * v_s);
}

double running_resistance(double v_t, const BrakingParams& p) {
    return 0.0147 * p.M + 125.83 * v_t;
}

double motor_torque_target(int notch, double T_mot, double omega_wh, const BrakingParams& p) {
    const double full = p.K_t * notch;
    if (omega_wh <= 1e-9) return full;
    if (std::abs(T_mot * omega_wh) >= p.P_max) {
        if (notch == 0) return 0.0;
        return std::copysign(p.P_max / omega_wh, static_cast<double>(notch));
    }
    return full;
}

namespace {

struct Deriv {
    double dT, dom, dv, ds;
};

Deriv dynamics(const DynState& st, int notch, double theta, const BrakingParams& p,
               double mu_clamp, int* clamp_events) {
    // validity envelope: a wheel speed integrated far below zero or an absurd
    // vehicle speed means the step size cannot resolve the wheel dynamics
    if (st.omega_wh * p.r < -50.0 || std::abs(st.v_t) > 150.0)
        throw BrakingError("numerical-failure: integration step too coarse for wheel dynamics");
    const double om = std::max(st.omega_wh, 0.0);
    const double target = motor_torque_target(notch, st.T_mot, om, p);
    const double dT = 3.0 * (target - st.T_mot);

    const double v_s = p.r * om - st.v_t;
    double mu = adhesion_mu(v_s, p);
    if (std::abs(mu) > mu_clamp) {
        mu = std::copysign(mu_clamp, mu);
        if (clamp_events) ++(*clamp_events);
    }

    double dom = 2.0 / (p.m_w * p.r * p.r) * (st.T_mot - p.r * mu * p.M * p.g);
    if (st.omega_wh <= 0.0 && dom < 0.0) dom = 0.0;  // wheel pinned, no spin reversal

    const double sign_v = (st.v_t > 0.0) ? 1.0 : (st.v_t < 0.0 ? -1.0 : 0.0);
    const double Fr = running_resistance(std::abs(st.v_t), p) * sign_v;
    const double dv = mu * p.g - Fr / p.M - p.g * std::sin(theta);
    return {dT, dom, dv, st.v_t};
}

DynState advanced(const DynState& st, const Deriv& d, double f) {
    DynState out = st;
    out.T_mot += f * d.dT;
    out.omega_wh += f * d.dom;
    out.v_t += f * d.dv;
    out.s += f * d.ds;
    return out;
}

}  // namespace

DynState plant_step(const DynState& st, int notch, double theta, double dt,
                    const BrakingParams& p, double mu_clamp, int* mu_clamp_events,
                    double* s_quadrature) {
    const Deriv k1 = dynamics(st, notch, theta, p, mu_clamp, mu_clamp_events);
    const Deriv k2 = dynamics(advanced(st, k1, dt / 2), notch, theta, p, mu_clamp, nullptr);
    const Deriv k3 = dynamics(advanced(st, k2, dt / 2), notch, theta, p, mu_clamp, nullptr);
    const Deriv k4 = dynamics(advanced(st, k3, dt), notch, theta, p, mu_clamp, nullptr);
    DynState out = st;
    out.T_mot += dt / 6.0 * (k1.dT + 2 * k2.dT + 2 * k3.dT + k4.dT);
    out.omega_wh += dt / 6.0 * (k1.dom + 2 * k2.dom + 2 * k3.dom + k4.dom);
    out.v_t += dt / 6.0 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
    out.s += dt / 6.0 * (k1.ds + 2 * k2.ds + 2 * k3.ds + k4.ds);
    out.t += dt;
    if (out.omega_wh < 0.0) out.omega_wh = 0.0;
    if (s_quadrature) *s_quadrature += dt / 6.0 * (k1.ds + 2 * k2.ds + 2 * k3.ds + k4.ds);
    return out;
}

BrakingTrajectory simulate_braking(double v0, const std::function<double(double)>& theta_of_s,
                                   const BrakingParams& p, const IntegrationOptions& opt) {
    if (!(v0 > 0.0)) throw std::invalid_argument("simulate_braking: v0 must be > 0");
    if (!(opt.dt_int > 0.0)) throw std::invalid_argument("simulate_braking: dt_int must be > 0");
    p.validate();

    constexpr int kBrakeNotch = -7;
    BrakingTrajectory traj;
    DynState st;
    st.v_t = v0;
    st.omega_wh = v0 / p.r;
    st.T_mot = p.K_t * kBrakeNotch;  // commanded brake torque already developed
    traj.samples.push_back({0.0, 0.0, v0});

    double next_sample = opt.sample_dt;
    DynState prev = st;
    while (st.t < opt.t_max) {
        prev = st;
        st = plant_step(st, kBrakeNotch, theta_of_s(st.s), opt.dt_int, p, opt.mu_clamp,
                        &traj.mu_clamp_events);
        if (!std::isfinite(st.v_t) || !std::isfinite(st.omega_wh) || !std::isfinite(st.T_mot) ||
            !std::isfinite(st.s))
            throw BrakingError("numerical-failure: non-finite state in braking simulation");
        if (st.v_t <= opt.v_standstill) break;
        if (st.t >= next_sample - opt.dt_int / 2) {
            traj.samples.push_back({st.t, st.s, st.v_t});
            next_sample += opt.sample_dt;
        }
    }
    if (st.v_t > opt.v_standstill)
        throw BrakingError("diverged: speed did not reach standstill within " +
                           std::to_string(opt.t_max) + " s");

    // interpolate the crossing of the standstill threshold and close at v = 0
    double t_stop = st.t, s_stop = st.s;
    const double dv = prev.v_t - st.v_t;
    if (dv > 1e-12) {
        const double f = std::clamp((prev.v_t - opt.v_standstill) / dv, 0.0, 1.0);
        t_stop = prev.t + f * (st.t - prev.t);
        s_stop = prev.s + f * (st.s - prev.s);
    }
    if (!traj.samples.empty() && traj.samples.back().t >= t_stop)
        traj.samples.pop_back();
    traj.samples.push_back({t_stop, s_stop, 0.0});
    traj.total_distance = s_stop;
    traj.total_time = t_stop;
    return traj;
}

double BrakingTrajectory::distance_at(double t) const {
    if (samples.empty()) return 0.0;
    if (t <= samples.front().t) return samples.front().s;
    if (t >= samples.back().t) return samples.back().s;
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double tv, const TrajectorySample& s) { return tv < s.t; });
    const TrajectorySample& b = *it;
    const TrajectorySample& a = *(it - 1);
    const double f = (t - a.t) / (b.t - a.t);
    return a.s + f * (b.s - a.s);
}

double braking_distance_naive(double v0, double a_br) {
    if (a_br == 0.0) throw std::invalid_argument("braking_distance_naive: a_br must be nonzero");
    if (v0 < 0.0) throw std::invalid_argument("braking_distance_naive: v0 must be >= 0");
    return 0.5 * v0 * v0 / std::abs(a_br);
}

BrakingRun load_braking_run_csv(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw BrakingError("cannot open run log: " + file);
    BrakingRun run;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("t,", 0) == 0 || line.rfind("#", 0) == 0) continue;  // header/comment
        std::istringstream ls(line);
        double t, v;
        char comma;
        if (ls >> t >> comma >> v) run.tv.emplace_back(t, v);
    }
    if (run.tv.empty()) throw BrakingError("run log has no samples: " + file);
    return run;
}

namespace {

double run_mse(const std::vector<BrakingRun>& runs, const BrakingParams& p,
               const IntegrationOptions& integ) {
    double se = 0.0;
    std::size_t n = 0;
    for (const auto& run : runs) {
        const double v0 = run.tv.front().second;
        BrakingTrajectory traj;
        try {
            traj = simulate_braking(v0, [](double) { return 0.0; }, p, integ);
        } catch (const BrakingError&) {
            return std::numeric_limits<double>::infinity();
        }
        const double t0 = run.tv.front().first;
        for (const auto& [t, v] : run.tv) {
            // piecewise-linear speed lookup on the simulated trajectory
            const double tq = t - t0;
            double vsim = 0.0;
            const auto& ss = traj.samples;
            if (tq <= ss.front().t) {
                vsim = ss.front().v;
            } else if (tq < ss.back().t) {
                auto it = std::upper_bound(
                    ss.begin(), ss.end(), tq,
                    [](double tv, const TrajectorySample& s) { return tv < s.t; });
                const auto& b = *it;
                const auto& a = *(it - 1);
                vsim = a.v + (tq - a.t) / (b.t - a.t) * (b.v - a.v);
            }
            se += (vsim - v) * (vsim - v);
            ++n;
        }
    }
    return n ? se / static_cast<double>(n) : std::numeric_limits<double>::infinity();
}

}  // namespace

IdentifyResult identify_params(const std::vector<BrakingRun>& runs, const BrakingParams& fixed,
                               const std::map<std::string, std::pair<double, double>>& bounds,
                               const IdentifyOptions& opt) {
    if (runs.empty()) throw std::invalid_argument("identify_params: no runs");
    for (const auto& run : runs)
        if (run.tv.size() < 2) throw std::invalid_argument("identify_params: run too short");

    BrakingParams p = fixed;
    IdentifyResult result;
    if (bounds.empty()) {
        result.params = p;
        result.mse = run_mse(runs, p, opt.integ);
        return result;
    }

    constexpr double kGolden = 0.6180339887498949;
    for (const auto& [name, range] : bounds) p.by_name(name) = 0.5 * (range.first + range.second);

    for (int sweep = 0; sweep < opt.sweeps; ++sweep) {
        for (const auto& [name, range] : bounds) {
            double lo = range.first, hi = range.second;
            double x1 = hi - kGolden * (hi - lo);
            double x2 = lo + kGolden * (hi - lo);
            auto eval = [&](double x) {
                p.by_name(name) = x;
                return run_mse(runs, p, opt.integ);
            };
            double f1 = eval(x1), f2 = eval(x2);
            for (int it = 0; it < opt.golden_iters && (hi - lo) > 1e-10 * (1.0 + std::abs(hi));
                 ++it) {
                if (f1 < f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - kGolden * (hi - lo);
                    f1 = eval(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + kGolden * (hi - lo);
                    f2 = eval(x2);
                }
            }
            p.by_name(name) = (f1 < f2) ? x1 : x2;
        }
    }

    result.params = p;
    result.mse = run_mse(runs, p, opt.integ);
    for (const auto& [name, range] : bounds) result.fitted[name] = p.by_name(name);
    if (result.mse > opt.mse_threshold)
        throw BrakingError("no-fit: best MSE " + std::to_string(result.mse) +
                           " exceeds threshold " + std::to_string(opt.mse_threshold));
    return result;
}

BrakingTable::BrakingTable(const BrakingParams& p, double v_max_kmh,
                           const IntegrationOptions& opt) {
    const int n = static_cast<int>(std::ceil(v_max_kmh)) + 1;
    dist_.resize(static_cast<std::size_t>(n));
    dist_[0] = 0.0;
    for (int i = 1; i < n; ++i) {
        const double v = i / 3.6;
        dist_[static_cast<std::size_t>(i)] =
            simulate_braking(v, [](double) { return 0.0; }, p, opt).total_distance;
    }
    v_max_ = (n - 1) / 3.6;
}

double BrakingTable::distance(double v) const {
    if (v <= 0.0) return 0.0;
    const double kmh = v * 3.6;
    const auto i = static_cast<std::size_t>(kmh);
    if (i + 1 >= dist_.size()) return dist_.back();
    const double f = kmh - static_cast<double>(i);
    return dist_[i] + f * (dist_[i + 1] - dist_[i]);
}

}  // namespace rcas
