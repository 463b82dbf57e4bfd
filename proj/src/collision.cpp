#include "rcas/collision.hpp"

#include <algorithm>
#include <cmath>

namespace rcas {

void RcasConfig::validate() const {
    if (t_r < 0.0 || d_s < 0.0) throw std::invalid_argument("rcas: t_r and d_s must be >= 0");
    if (!(horizon > 0.0) || !(step > 0.0))
        throw std::invalid_argument("rcas: horizon and step must be > 0");
}

std::optional<NeighborTrack> screen_neighbor(const CamMessage& cam, const KfState& own,
                                             const TrackMap& map, double horizon_m, double now) {
    const auto pos = map.project(cam.position());
    if (!pos) return std::nullopt;  // off-track, e.g. a road vehicle
    if (own.path.empty()) return std::nullopt;

    const auto gap = map.path_gap(own.track_position(), *pos, horizon_m);
    if (!gap) return std::nullopt;

    NeighborTrack nb;
    nb.station_id = cam.station_id;
    nb.track_pos = *pos;
    nb.speed = cam.speed();
    nb.length = cam.vehicle_length();
    nb.last_update = now;
    nb.gap_at_update = *gap;
    return nb;
}

std::optional<GapToNeighbor> gap_to_neighbor(const KfState& own, const NeighborTrack& nb,
                                             const TrackMap& map, double now) {
    const auto raw = map.path_gap(own.track_position(), nb.track_pos);
    if (!raw) return std::nullopt;
    // constant-speed propagation of the received state since the last CAM
    const double propagated = *raw + nb.speed * (now - nb.last_update);
    const double gap = propagated - nb.length;
    if (gap < 0.0) return GapToNeighbor{0.0, true};
    return GapToNeighbor{gap, false};
}

bool check_warning(double d_br, double own_v, double d_g, const RcasConfig& cfg) {
    return d_br + cfg.d_s + own_v * cfg.t_r >= d_g;
}

std::optional<double> predict_conflict(const BrakingTrajectory& own_traj, double initial_gap,
                                       double neighbor_speed, const RcasConfig& cfg) {
    for (double t = 0.0; t <= cfg.horizon + 1e-9; t += cfg.step) {
        const double own_advance = own_traj.distance_at(t);
        const double nb_rear = initial_gap + neighbor_speed * t;
        if (own_advance >= nb_rear) return t;
    }
    return std::nullopt;
}

std::optional<double> predict_conflict(const BrakingTrajectory& own_traj, const KfState& own,
                                       const NeighborTrack& nb, const TrackMap& map,
                                       const RcasConfig& cfg, double now) {
    const auto gap = gap_to_neighbor(own, nb, map, now);
    if (!gap) return std::nullopt;
    if (gap->overlap) return 0.0;
    return predict_conflict(own_traj, gap->gap, nb.speed, cfg);
}

RcasAgent::RcasAgent(std::uint32_t station_id, const TrackMap& map, const BrakingParams& params,
                     const RcasConfig& cfg, const IntegrationOptions& integ)
    : station_id_(station_id), map_(map), cfg_(cfg), table_(params, 80.0, integ) {
    cfg_.validate();
}

void RcasAgent::ingest_cam(const CamMessage& cam, const KfState& own, double now) {
    if (cam.station_id == station_id_) return;
    const double v = std::max(0.0, own.x(1));
    const double horizon_m = table_.distance(v) + cfg_.screen_extra;
    auto nb = screen_neighbor(cam, own, map_, horizon_m, now);
    if (nb)
        neighbors_[nb->station_id] = *nb;
    else
        neighbors_.erase(cam.station_id);  // moved off our path or off-track
}

RcasAgent::TickResult RcasAgent::tick(const KfState& own, const GeoPoint& own_geo, double now) {
    TickResult result;

    for (auto it = neighbors_.begin(); it != neighbors_.end();) {
        if (now - it->second.last_update > cfg_.stale_after)
            it = neighbors_.erase(it);
        else
            ++it;
    }

    const double v = std::max(0.0, own.x(1));
    result.d_br = table_.distance(v);

    const NeighborTrack* worst = nullptr;
    double worst_gap = 0.0;
    for (const auto& [id, nb] : neighbors_) {
        const auto gap = gap_to_neighbor(own, nb, map_, now);
        if (!gap) continue;
        if (result.min_gap < 0.0 || gap->gap < result.min_gap) result.min_gap = gap->gap;
        if (check_warning(result.d_br, v, gap->gap, cfg_)) {
            if (!worst || gap->gap < worst_gap) {
                worst = &nb;
                worst_gap = gap->gap;
            }
        }
    }

    result.condition = worst != nullptr;
    if (result.condition) {
        clear_since_ = -1.0;
        if (!latched_) {
            latched_ = true;
            result.warning = Warning{worst->station_id, now, worst_gap, result.d_br, v};
            result.denm = DenmMessage::make(station_id_,
                                            static_cast<std::uint64_t>(std::llround(now * 1000.0)),
                                            own_geo);
        }
    } else if (latched_) {
        if (clear_since_ < 0.0) clear_since_ = now;
        if (now - clear_since_ >= cfg_.debounce) {
            latched_ = false;
            clear_since_ = -1.0;
        }
    }
    return result;
}

}  // namespace rcas
