#include "rcas/track_map.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rcas {

namespace {

// Projection of point q onto one polyline; returns arc length within the
// polyline, signed lateral offset (positive right of travel direction) and
// absolute distance.
struct PolyProjection {
    double s = 0.0;
    double offset = 0.0;
    double dist = std::numeric_limits<double>::infinity();
};

PolyProjection project_on_segment(const LocalXY& q, const Segment& seg) {
    PolyProjection best;
    for (std::size_t i = 0; i + 1 < seg.pts.size(); ++i) {
        const LocalXY& a = seg.pts[i];
        const LocalXY& b = seg.pts[i + 1];
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        double t = ((q.x - a.x) * dx + (q.y - a.y) * dy) / len2;
        t = std::clamp(t, 0.0, 1.0);
        const LocalXY c{a.x + t * dx, a.y + t * dy};
        const double d = distance(q, c);
        if (d < best.dist) {
            // right-of-direction unit normal is (dy, -dx)/|ab|
            const double seglen = std::sqrt(len2);
            const double side = ((q.x - c.x) * dy - (q.y - c.y) * dx) / seglen;
            best.dist = d;
            best.offset = side;
            best.s = seg.cum[i] + t * seglen;
        }
    }
    return best;
}

}  // namespace

TrackMap TrackMap::from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw MapError(std::string("malformed map document: ") + e.what());
    }

    TrackMap map;
    try {
        const auto& ref = doc.at("reference");
        map.reference_ = {ref.at(0).get<double>(), ref.at(1).get<double>()};
        map.frame_ = LocalFrame(map.reference_);

        std::set<SegmentId> seen;
        for (const auto& js : doc.at("segments")) {
            Segment seg;
            seg.id = js.at("id").get<SegmentId>();
            if (!seen.insert(seg.id).second)
                throw MapError("duplicate segment id " + std::to_string(seg.id));
            for (const auto& jp : js.at("points")) {
                GeoPoint p{jp.at(0).get<double>(), jp.at(1).get<double>()};
                if (p.lon < -180.0 || p.lon > 180.0 || p.lat < -90.0 || p.lat > 90.0)
                    throw MapError("coordinate out of range in segment " + std::to_string(seg.id));
                seg.points.push_back(p);
            }
            if (seg.points.size() < 2)
                throw MapError("segment " + std::to_string(seg.id) + " has fewer than 2 points");
            if (js.contains("slope")) {
                for (const auto& sl : js.at("slope"))
                    seg.slope.emplace_back(sl.at(0).get<double>(), sl.at(1).get<double>());
                for (std::size_t i = 1; i < seg.slope.size(); ++i)
                    if (seg.slope[i].first <= seg.slope[i - 1].first)
                        throw MapError("slope samples not increasing in segment " +
                                       std::to_string(seg.id));
            }
            if (js.contains("next"))
                for (const auto& jn : js.at("next")) seg.next.push_back(jn.get<SegmentId>());
            map.segments_.push_back(std::move(seg));
        }
    } catch (const nlohmann::json::exception& e) {
        throw MapError(std::string("malformed map document: ") + e.what());
    }
    if (map.segments_.empty()) throw MapError("map has no segments");

    std::sort(map.segments_.begin(), map.segments_.end(),
              [](const Segment& a, const Segment& b) { return a.id < b.id; });
    for (const auto& s : map.segments_) map.ids_.push_back(s.id);

    map.bbox_min_ = {std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
    map.bbox_max_ = {-std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()};

    for (auto& seg : map.segments_) {
        seg.cum.resize(seg.points.size());
        seg.cum[0] = 0.0;
        for (std::size_t i = 0; i < seg.points.size(); ++i) {
            seg.pts.push_back(map.frame_.to_local(seg.points[i]));
            map.bbox_min_.x = std::min(map.bbox_min_.x, seg.pts[i].x);
            map.bbox_min_.y = std::min(map.bbox_min_.y, seg.pts[i].y);
            map.bbox_max_.x = std::max(map.bbox_max_.x, seg.pts[i].x);
            map.bbox_max_.y = std::max(map.bbox_max_.y, seg.pts[i].y);
            if (i > 0) {
                const double d = distance(seg.pts[i - 1], seg.pts[i]);
                if (d < 1e-6)
                    throw MapError("degenerate segment " + std::to_string(seg.id) +
                                   ": consecutive identical points");
                seg.cum[i] = seg.cum[i - 1] + d;
            }
        }
        for (SegmentId nid : seg.next)
            if (!map.has_segment(nid))
                throw MapError("dangling successor " + std::to_string(nid) + " in segment " +
                               std::to_string(seg.id));
    }
    return map;
}

TrackMap TrackMap::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw MapError("cannot open map file: " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

bool TrackMap::has_segment(SegmentId id) const { return seg_ptr(id) != nullptr; }

const Segment* TrackMap::seg_ptr(SegmentId id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return nullptr;
    return &segments_[static_cast<std::size_t>(it - ids_.begin())];
}

const Segment& TrackMap::segment(SegmentId id) const {
    const Segment* s = seg_ptr(id);
    if (!s) throw MapError("unknown segment id " + std::to_string(id));
    return *s;
}

std::size_t TrackMap::switch_count() const {
    std::size_t n = 0;
    for (const auto& s : segments_)
        if (s.next.size() >= 2) ++n;
    return n;
}

double TrackMap::total_length() const {
    double sum = 0.0;
    for (const auto& s : segments_) sum += s.length();
    return sum;
}

double TrackMap::path_length(const Path& path) const {
    if (path.empty()) throw MapError("empty path");
    double sum = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Segment& seg = segment(path[i]);
        if (i > 0) {
            const Segment& prev = segment(path[i - 1]);
            if (std::find(prev.next.begin(), prev.next.end(), path[i]) == prev.next.end())
                throw MapError("path is not a successor chain at segment " +
                               std::to_string(path[i]));
        }
        sum += seg.length();
    }
    return sum;
}

std::optional<TrackPosition> TrackMap::project(const GeoPoint& p,
                                               const std::optional<TrackPosition>& hint,
                                               const ProjectOptions& opt) const {
    const LocalXY q = frame_.to_local(p);
    if (q.x < bbox_min_.x - opt.bbox_inflation || q.x > bbox_max_.x + opt.bbox_inflation ||
        q.y < bbox_min_.y - opt.bbox_inflation || q.y > bbox_max_.y + opt.bbox_inflation)
        return std::nullopt;

    if (hint) {
        auto r = project_to_path(p, hint->path, opt.max_offset);
        if (r && std::abs(r->s - hint->s) > opt.hint_window) return std::nullopt;
        return r;
    }

    TrackPosition best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& seg : segments_) {
        PolyProjection pr = project_on_segment(q, seg);
        if (pr.dist < best_dist) {
            best_dist = pr.dist;
            best = TrackPosition{pr.s, Path{seg.id}, pr.offset};
        }
    }
    if (best_dist > opt.max_offset) return std::nullopt;
    return best;
}

std::optional<TrackPosition> TrackMap::project_to_path(const GeoPoint& p, const Path& path,
                                                       double max_offset) const {
    if (path.empty()) return std::nullopt;
    const LocalXY q = frame_.to_local(p);
    TrackPosition best;
    double best_dist = std::numeric_limits<double>::infinity();
    double base = 0.0;
    for (SegmentId id : path) {
        const Segment& seg = segment(id);
        PolyProjection pr = project_on_segment(q, seg);
        if (pr.dist < best_dist) {
            best_dist = pr.dist;
            best = TrackPosition{base + pr.s, path, pr.offset};
        }
        base += seg.length();
    }
    if (best_dist > max_offset) return std::nullopt;
    return best;
}

TrackMap::Located TrackMap::locate(const TrackPosition& tp) const {
    if (tp.path.empty()) throw MapError("empty path");
    if (tp.s < -1e-9) throw BeyondTrackEnd("beyond-track-end: s < 0");
    double base = 0.0;
    for (std::size_t i = 0; i < tp.path.size(); ++i) {
        const Segment& seg = segment(tp.path[i]);
        const bool last = (i + 1 == tp.path.size());
        if (tp.s < base + seg.length() || (last && tp.s <= base + seg.length() + 1e-9))
            return {&seg, std::clamp(tp.s - base, 0.0, seg.length())};
        base += seg.length();
    }
    throw BeyondTrackEnd("beyond-track-end: s=" + std::to_string(tp.s) + " exceeds path length " +
                         std::to_string(base));
}

GeoPoint TrackMap::track_to_geo(const TrackPosition& tp) const {
    const Located loc = locate(tp);
    const Segment& seg = *loc.seg;
    auto it = std::upper_bound(seg.cum.begin(), seg.cum.end(), loc.u);
    std::size_t i = (it == seg.cum.begin()) ? 0 : static_cast<std::size_t>(it - seg.cum.begin()) - 1;
    if (i + 1 >= seg.pts.size()) i = seg.pts.size() - 2;
    const double piece = seg.cum[i + 1] - seg.cum[i];
    const double t = std::clamp((loc.u - seg.cum[i]) / piece, 0.0, 1.0);
    const LocalXY a = seg.pts[i], b = seg.pts[i + 1];
    return frame_.to_geo({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
}

double TrackMap::slope_at(const TrackPosition& tp) const {
    const Located loc = locate(tp);
    const auto& table = loc.seg->slope;
    if (table.empty()) return 0.0;
    if (loc.u <= table.front().first) return table.front().second;
    if (loc.u >= table.back().first) return table.back().second;
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (loc.u <= table[i].first) {
            const double t = (loc.u - table[i - 1].first) / (table[i].first - table[i - 1].first);
            return table[i - 1].second + t * (table[i].second - table[i - 1].second);
        }
    }
    return table.back().second;
}

double TrackMap::bearing_at(const TrackPosition& tp) const {
    const Located loc = locate(tp);
    const Segment& seg = *loc.seg;
    auto it = std::upper_bound(seg.cum.begin(), seg.cum.end(), loc.u);
    std::size_t i = (it == seg.cum.begin()) ? 0 : static_cast<std::size_t>(it - seg.cum.begin()) - 1;
    if (i + 1 >= seg.pts.size()) i = seg.pts.size() - 2;
    const LocalXY a = seg.pts[i], b = seg.pts[i + 1];
    return bearing_deg(b.x - a.x, b.y - a.y);
}

std::optional<double> TrackMap::path_gap(const TrackPosition& rear, const TrackPosition& front,
                                         double max_search) const {
    const Located lr = locate(rear);
    const Located lf = locate(front);
    if (lr.seg->id == lf.seg->id) {
        const double gap = lf.u - lr.u;
        if (gap >= 0.0 && gap <= max_search) return gap;
        return std::nullopt;
    }
    // distance-ordered search over the successor graph, from the rear position
    struct Node {
        double dist;  // from rear position to the START of segment `id`
        SegmentId id;
    };
    auto cmp = [](const Node& a, const Node& b) { return a.dist > b.dist; };
    std::vector<Node> heap;
    std::set<SegmentId> done;
    const double first_hop = lr.seg->length() - lr.u;
    for (SegmentId nid : lr.seg->next) heap.push_back({first_hop, nid});
    std::make_heap(heap.begin(), heap.end(), cmp);
    while (!heap.empty()) {
        std::pop_heap(heap.begin(), heap.end(), cmp);
        Node n = heap.back();
        heap.pop_back();
        if (n.dist > max_search) break;
        if (!done.insert(n.id).second) continue;
        if (n.id == lf.seg->id) {
            const double gap = n.dist + lf.u;
            if (gap > max_search) return std::nullopt;
            return gap;
        }
        const Segment& seg = segment(n.id);
        for (SegmentId nid : seg.next) {
            if (!done.count(nid)) {
                heap.push_back({n.dist + seg.length(), nid});
                std::push_heap(heap.begin(), heap.end(), cmp);
            }
        }
    }
    return std::nullopt;
}

TrackMap::Extension TrackMap::extend_path(Path path, double target_len) const {
    if (path.empty()) throw MapError("empty path");
    double len = path_length(path);
    while (len < target_len) {
        const Segment& last = segment(path.back());
        if (last.next.empty()) return {std::move(path), false, {}};
        if (last.next.size() >= 2) return {std::move(path), true, last.next};
        path.push_back(last.next.front());
        len += segment(path.back()).length();
    }
    return {std::move(path), false, {}};
}

std::vector<Path> TrackMap::sibling_paths(const Path& path, double min_len) const {
    std::vector<Path> out;
    if (path.size() < 2) return out;
    std::size_t sw = path.size();  // index of the last interior switch segment
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
        if (segment(path[i]).next.size() >= 2) sw = i;
    if (sw == path.size()) return out;

    for (SegmentId alt : segment(path[sw]).next) {
        if (alt == path[sw + 1]) continue;
        Path cand(path.begin(), path.begin() + static_cast<long>(sw) + 1);
        cand.push_back(alt);
        // greedy extension: first successor until long enough
        while (path_length(cand) < min_len) {
            const Segment& last = segment(cand.back());
            if (last.next.empty()) break;
            if (std::find(cand.begin(), cand.end(), last.next.front()) != cand.end()) break;
            cand.push_back(last.next.front());
        }
        out.push_back(std::move(cand));
    }
    return out;
}

}  // namespace rcas
