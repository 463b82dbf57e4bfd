#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcas/geo.hpp"

namespace rcas {

using SegmentId = std::uint32_t;

/// Ordered chain of segment ids; each element must be a successor of the
/// previous one. Identifies the branch choice at switches.
using Path = std::vector<SegmentId>;

class MapError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class BeyondTrackEnd : public MapError {
  public:
    using MapError::MapError;
};

/// Position on the track network: arc length `s` in meters measured from the
/// start of the first segment of `path`, plus the signed perpendicular
/// distance of the original point from the centerline (positive to the right
/// of the travel direction).
struct TrackPosition {
    double s = 0.0;
    Path path;
    double lateral_offset = 0.0;
};

struct Segment {
    SegmentId id = 0;
    std::vector<GeoPoint> points;
    std::vector<LocalXY> pts;                        // projected polyline
    std::vector<double> cum;                         // cumulative arc length per vertex
    std::vector<std::pair<double, double>> slope;    // (s within segment, theta rad)
    std::vector<SegmentId> next;

    double length() const { return cum.back(); }
};

struct ProjectOptions {
    double max_offset = 25.0;       // reject projections farther than this [m]
    double bbox_inflation = 100.0;  // bounding-box pre-check margin [m]
    double hint_window = 500.0;     // max |s - hint.s| when a hint is given [m]
};

/// Immutable digital map of the track network. Build once, read from any
/// number of agents concurrently.
class TrackMap {
  public:
    static TrackMap from_json_text(const std::string& text);
    static TrackMap load(const std::filesystem::path& file);

    const GeoPoint& reference_point() const { return reference_; }
    const LocalFrame& frame() const { return frame_; }

    bool has_segment(SegmentId id) const;
    const Segment& segment(SegmentId id) const;
    std::size_t segment_count() const { return segments_.size(); }
    const std::vector<SegmentId>& segment_ids() const { return ids_; }

    /// Number of nodes where the track divides (segments with >= 2 successors).
    std::size_t switch_count() const;

    double total_length() const;

    /// Length of a successor-consistent chain; throws MapError if the chain
    /// is broken or references unknown segments.
    double path_length(const Path& path) const;

    /// Orthogonal projection of a geographic point onto the track network.
    /// With a hint, candidates are restricted to the hint's path (position is
    /// returned in the hint's s-frame). Returns nullopt when the point is
    /// off-track (farther than max_offset from every candidate) or outside
    /// the inflated bounding box.
    std::optional<TrackPosition> project(const GeoPoint& p,
                                         const std::optional<TrackPosition>& hint = {},
                                         const ProjectOptions& opt = {}) const;

    /// Projection restricted to one specific path, in that path's s-frame.
    std::optional<TrackPosition> project_to_path(const GeoPoint& p, const Path& path,
                                                 double max_offset) const;

    /// Centerline point at a track position. Throws BeyondTrackEnd when s is
    /// negative or past the end of the path.
    GeoPoint track_to_geo(const TrackPosition& tp) const;

    /// Track slope [rad] at a position: linear interpolation of the segment's
    /// samples, clamped to the first/last sample; 0 when no samples exist.
    double slope_at(const TrackPosition& tp) const;

    /// Travel direction at a position, degrees clockwise from north.
    double bearing_at(const TrackPosition& tp) const;

    /// Along-track distance from `rear` to `front` when `front` lies ahead of
    /// `rear` on the successor graph within `max_search` meters; empty when
    /// the positions are on non-conflicting branches or front is behind rear.
    std::optional<double> path_gap(const TrackPosition& rear, const TrackPosition& front,
                                   double max_search = 5000.0) const;

    struct Extension {
        Path path;
        bool hit_switch = false;            // stopped at a node with >= 2 successors
        std::vector<SegmentId> options;     // the successor choices at that node
    };

    /// Extends a path by following successors until its length reaches
    /// `target_len` or a dead end; stops at switches and reports the options.
    Extension extend_path(Path path, double target_len) const;

    /// Alternative paths that share this path's prefix up to its last interior
    /// switch but take a different branch there, greedily extended (first
    /// successor at further switches) to at least `min_len` meters.
    std::vector<Path> sibling_paths(const Path& path, double min_len) const;

  private:
    struct Located {
        const Segment* seg;
        double u;  // arc length within the segment
    };
    Located locate(const TrackPosition& tp) const;
    const Segment* seg_ptr(SegmentId id) const;

    GeoPoint reference_;
    LocalFrame frame_;
    std::vector<Segment> segments_;       // sorted by id
    std::vector<SegmentId> ids_;          // parallel index for binary search
    LocalXY bbox_min_, bbox_max_;
};

}  // namespace rcas
