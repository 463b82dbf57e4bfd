#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "rcas/braking.hpp"
#include "rcas/estimator.hpp"
#include "rcas/track_map.hpp"
#include "rcas/v2x.hpp"

namespace rcas {

struct RcasConfig {
    double t_r = 1.0;      // driver reaction time [s]
    double d_s = 0.0;      // safety margin [m]
    double horizon = 30.0; // prediction horizon [s]
    double step = 0.1;     // trajectory comparison step [s]
    double stale_after = 2.0;   // neighbor eviction age [s]
    double debounce = 1.0;      // warning latch release after this long clear [s]
    double screen_extra = 200.0;  // same-track search = braking distance + this [m]

    void validate() const;
};

/// A neighbor known from CAM reception, projected onto the track network.
struct NeighborTrack {
    std::uint32_t station_id = 0;
    TrackPosition track_pos;
    double speed = 0.0;
    double length = 0.0;
    double last_update = 0.0;
    double gap_at_update = 0.0;  // along-track gap from own front at reception
};

struct Warning {
    std::uint32_t target_station = 0;
    double triggered_at = 0.0;
    double est_gap = 0.0;
    double braking_distance = 0.0;
    double own_speed = 0.0;
};

/// Same-track screening of a received CAM: projects the reported position to
/// the map and keeps the neighbor when it lies ahead of us on a reachable
/// path within `horizon_m`. Off-track positions (e.g. road vehicles) yield
/// an empty result.
std::optional<NeighborTrack> screen_neighbor(const CamMessage& cam, const KfState& own,
                                             const TrackMap& map, double horizon_m, double now);

struct GapToNeighbor {
    double gap = 0.0;  // own front to neighbor rear [m]
    bool overlap = false;
};

/// Along-track front-to-rear distance; the CAM reference point is the vehicle
/// front, so the rear sits vehicle_length behind it. Negative results clamp
/// to zero with the overlap flag. Empty when the neighbor is no longer ahead
/// on a reachable path.
std::optional<GapToNeighbor> gap_to_neighbor(const KfState& own, const NeighborTrack& nb,
                                             const TrackMap& map, double now);

/// Warning trigger for the rear-end case: d_br + d_s + v * t_r >= d_g.
bool check_warning(double d_br, double own_v, double d_g, const RcasConfig& cfg);

/// Walks both predicted trajectories (own braking, neighbor constant speed)
/// over the horizon; returns the earliest grid time where the own front
/// reaches the neighbor rear (touching counts), empty when they never meet.
std::optional<double> predict_conflict(const BrakingTrajectory& own_traj, double initial_gap,
                                       double neighbor_speed, const RcasConfig& cfg);

std::optional<double> predict_conflict(const BrakingTrajectory& own_traj, const KfState& own,
                                       const NeighborTrack& nb, const TrackMap& map,
                                       const RcasConfig& cfg, double now);

/// Per-tram warning logic: neighbor table fed from decoded CAMs, braking
/// distance from the memoized table, the warning trigger with latching, and
/// DENM emission on the rising edge.
class RcasAgent {
  public:
    RcasAgent(std::uint32_t station_id, const TrackMap& map, const BrakingParams& params,
              const RcasConfig& cfg, const IntegrationOptions& integ = {});

    /// Screens and stores/refreshes a neighbor from a received CAM.
    void ingest_cam(const CamMessage& cam, const KfState& own, double now);

    struct TickResult {
        std::optional<Warning> warning;  // set on the rising edge only
        std::optional<DenmMessage> denm;
        bool condition = false;  // raw trigger condition this tick
        double min_gap = -1.0;   // smallest neighbor gap considered (-1: none)
        double d_br = 0.0;
    };

    /// One decision step: evicts stale neighbors, recomputes the braking
    /// distance from the current speed estimate and evaluates the trigger
    /// against every neighbor.
    TickResult tick(const KfState& own, const GeoPoint& own_geo, double now);

    const BrakingTable& table() const { return table_; }
    const std::map<std::uint32_t, NeighborTrack>& neighbors() const { return neighbors_; }
    bool latched() const { return latched_; }

  private:
    std::uint32_t station_id_;
    const TrackMap& map_;
    RcasConfig cfg_;
    BrakingTable table_;
    std::map<std::uint32_t, NeighborTrack> neighbors_;
    bool latched_ = false;
    double clear_since_ = -1.0;
};

}  // namespace rcas
