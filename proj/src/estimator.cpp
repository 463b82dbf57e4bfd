#include "rcas/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

namespace rcas {

Eigen::Matrix3d KfParams::transition() const {
    Eigen::Matrix3d F;
    F << 1, dt, 0.5 * dt * dt,  //
        0, 1, dt,               //
        0, 0, 1;
    return F;
}

Eigen::Matrix3d KfParams::process_noise() const {
    const double t2 = dt * dt, t3 = t2 * dt, t4 = t3 * dt, t5 = t4 * dt;
    Eigen::Matrix3d Q;
    Q << t5 / 20, t4 / 8, t3 / 6,  //
        t4 / 8, t3 / 3, t2 / 2,    //
        t3 / 6, t2 / 2, dt;
    return q * Q;
}

KfState kf_predict(const KfState& state, const KfParams& params) {
    const Eigen::Matrix3d F = params.transition();
    KfState out = state;
    out.x = F * state.x;
    out.P = F * state.P * F.transpose() + params.process_noise();
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    out.t = state.t + params.dt;
    out.flags = 0;
    return out;
}

namespace {

struct Row {
    Eigen::RowVector3d h;
    double r;
    double z;
    unsigned gate_flag;
};

}  // namespace

KfState kf_update(const KfState& predicted, const MeasurementSet& meas, const TrackMap& map,
                  const KfParams& params) {
    KfState out = predicted;
    std::vector<Row> rows;
    std::size_t present = 0;

    if (meas.gnss_pos) {
        ++present;
        ProjectOptions opt;
        opt.max_offset = params.max_offset;
        const auto proj = map.project(*meas.gnss_pos, predicted.track_position(), opt);
        if (proj)
            rows.push_back({{1, 0, 0}, params.sigma_pos, proj->s, kFlagPosGated});
        else
            out.flags |= kFlagPosOffTrack;
    }
    if (meas.gnss_speed)
        rows.push_back({{0, 1, 0}, params.sigma_speed, *meas.gnss_speed, kFlagSpeedGated}),
            ++present;
    if (meas.tacho_speed) {
        // an exact zero is a wheel-standstill report, far more trustworthy
        // than a regular (slip-prone) reading
        const double r = *meas.tacho_speed <= 1e-9 ? params.sigma_standstill
                                                   : params.tacho_factor * params.sigma_speed;
        rows.push_back({{0, 1, 0}, r, *meas.tacho_speed, kFlagTachoGated});
        ++present;
    }
    if (meas.imu_accel)
        rows.push_back({{0, 0, 1}, params.sigma_accel, *meas.imu_accel, kFlagAccelGated}),
            ++present;

    if (present == 0) return out;

    // innovation gate per channel, evaluated on the prediction
    std::vector<Row> kept;
    for (const auto& row : rows) {
        const double innov = row.z - row.h * predicted.x;
        const double S = row.h * predicted.P * row.h.transpose() + row.r;
        if (std::abs(innov) > params.gate_threshold * std::sqrt(S))
            out.flags |= row.gate_flag;
        else
            kept.push_back(row);
    }
    if (kept.empty()) {
        out.flags |= kFlagAllRejected;
        return out;
    }

    const auto m = static_cast<Eigen::Index>(kept.size());
    Eigen::MatrixXd H(m, 3);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        H.row(i) = kept[static_cast<std::size_t>(i)].h;
        R(i, i) = kept[static_cast<std::size_t>(i)].r;
        z(i) = kept[static_cast<std::size_t>(i)].z;
    }

    const Eigen::MatrixXd S = H * predicted.P * H.transpose() + R;
    const Eigen::MatrixXd K = predicted.P * H.transpose() * S.inverse();
    out.x = predicted.x + K * (z - H * predicted.x);
    const Eigen::Matrix3d IKH = Eigen::Matrix3d::Identity() - K * H;
    out.P = IKH * predicted.P * IKH.transpose() + K * R * K.transpose();
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    if (out.x(0) < 0.0) out.x(0) = 0.0;
    return out;
}

namespace {

// summed |lateral offset| of the fixes over one candidate path; fixes that do
// not project within `cap` contribute the cap as penalty
double offset_sum(std::span<const GeoPoint> fixes, const Path& path, const TrackMap& map,
                  double cap = 100.0) {
    double sum = 0.0;
    for (const auto& p : fixes) {
        const auto proj = map.project_to_path(p, path, cap);
        sum += proj ? std::abs(proj->lateral_offset) : cap;
    }
    return sum;
}

}  // namespace

KfState select_branch(const KfState& state, std::span<const GeoPoint> recent_gnss,
                      const TrackMap& map) {
    KfState out = state;
    if (recent_gnss.empty()) {
        out.flags |= kFlagBlindSwitch;
        return out;
    }

    const double need = state.x(0) + 100.0;
    std::vector<Path> candidates{state.path};
    for (auto& sib : map.sibling_paths(state.path, need)) candidates.push_back(std::move(sib));
    const auto ext = map.extend_path(state.path, need);
    if (ext.hit_switch) {
        for (SegmentId opt : ext.options) {
            Path cand = ext.path;
            cand.push_back(opt);
            candidates.push_back(std::move(cand));
        }
    }

    std::size_t best = 0;
    double best_sum = offset_sum(recent_gnss, candidates[0], map);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double sum = offset_sum(recent_gnss, candidates[i], map);
        if (sum < best_sum - 1e-9) {  // strict improvement; ties keep current
            best_sum = sum;
            best = i;
        }
    }
    if (best != 0) {
        out.path = candidates[best];
        out.mismatch_count = 0;
    }
    return out;
}

ResetCheck check_reset(const KfState& state, const MeasurementSet& meas, const TrackMap& map,
                       const KfParams& params) {
    ResetCheck rc{state, false};
    if (!meas.gnss_pos) return rc;

    const double inf = std::numeric_limits<double>::infinity();
    const auto own = map.project_to_path(*meas.gnss_pos, state.path, params.max_offset);
    const double off_own = own ? std::abs(own->lateral_offset) : inf;

    double off_other = inf;
    Path other;
    for (const auto& sib : map.sibling_paths(state.path, state.x(0) + 100.0)) {
        const auto proj = map.project_to_path(*meas.gnss_pos, sib, params.max_offset);
        if (proj && std::abs(proj->lateral_offset) < off_other) {
            off_other = std::abs(proj->lateral_offset);
            other = sib;
        }
    }

    if (off_other < off_own) {
        rc.state.mismatch_count = state.mismatch_count + 1;
        if (rc.state.mismatch_count >= params.reset_window) {
            const auto proj = map.project_to_path(*meas.gnss_pos, other, params.max_offset);
            rc.reset = true;
            rc.state.path = other;
            rc.state.x(0) = proj ? proj->s : state.x(0);
            rc.state.x(2) = 0.0;
            rc.state.P = params.p0 * Eigen::Matrix3d::Identity();
            rc.state.mismatch_count = 0;
            rc.state.flags |= kFlagReset;
        }
    } else if (off_own < inf) {
        rc.state.mismatch_count = 0;
    }
    return rc;
}

std::string kf_csv_header() { return "t,s,v,a,P00,P11,P22,path_head,flags"; }

std::string kf_csv_row(const KfState& state) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%.3f,%.6f,%.6f,%.6f,%.8f,%.8f,%.8f,%u,%u", state.t,
                  state.x(0), state.x(1), state.x(2), state.P(0, 0), state.P(1, 1), state.P(2, 2),
                  state.path.empty() ? 0u : state.path.front(), state.flags);
    return buf;
}

Estimator::Estimator(const TrackMap& map, KfParams params, Path initial_path)
    : map_(map), params_(params), initial_path_(std::move(initial_path)) {}

void Estimator::initialize(const MeasurementSet& meas) {
    std::optional<TrackPosition> pos;
    if (!initial_path_.empty()) {
        pos = map_.project_to_path(*meas.gnss_pos, initial_path_, params_.max_offset);
        if (pos) pos->path = initial_path_;
    }
    if (!pos) pos = map_.project(*meas.gnss_pos);
    if (!pos) return;  // wait for a usable fix

    state_ = KfState{};
    state_.x(0) = pos->s;
    state_.x(1) = meas.gnss_speed ? *meas.gnss_speed : (meas.tacho_speed ? *meas.tacho_speed : 0.0);
    state_.x(2) = 0.0;
    state_.P = params_.p0 * Eigen::Matrix3d::Identity();
    state_.t = meas.t;
    state_.path = pos->path;
    initialized_ = true;
    gnss_history_.push_back(*meas.gnss_pos);
    maintain_path();
}

void Estimator::maintain_path() {
    for (int guard = 0; guard < 16; ++guard) {
        auto ext = map_.extend_path(state_.path, state_.x(0) + params_.path_lookahead);
        state_.path = ext.path;
        if (!ext.hit_switch) break;
        // choose a branch with whatever GNSS history exists; blind picks keep
        // the lowest successor id until fixes past the switch correct it
        std::vector<GeoPoint> fixes(gnss_history_.begin(), gnss_history_.end());
        KfState probe = state_;
        KfState sel = select_branch(probe, fixes, map_);
        if (sel.path.size() > state_.path.size()) {
            state_.path = sel.path;
            state_.flags |= sel.flags & kFlagBlindSwitch;
        } else {
            SegmentId pick = *std::min_element(ext.options.begin(), ext.options.end());
            state_.path.push_back(pick);
            state_.flags |= kFlagBlindSwitch;
        }
    }
}

void Estimator::step(const MeasurementSet& meas) {
    if (!initialized_) {
        if (meas.gnss_pos) initialize(meas);
        return;
    }

    state_ = kf_predict(state_, params_);

    if (meas.gnss_pos) {
        gnss_history_.push_back(*meas.gnss_pos);
        while (gnss_history_.size() > 10) gnss_history_.pop_front();
    }

    ResetCheck rc = check_reset(state_, meas, map_, params_);
    state_ = rc.state;
    if (rc.reset) {
        ++reset_count_;
        gnss_history_.clear();
        gnss_history_.push_back(*meas.gnss_pos);
    } else if (!meas.empty()) {
        state_ = kf_update(state_, meas, map_, params_);
    }

    maintain_path();
    const double len = map_.path_length(state_.path);
    if (state_.x(0) > len) state_.x(0) = len;
    if (state_.x(0) < 0.0) state_.x(0) = 0.0;
}

}  // namespace rcas
