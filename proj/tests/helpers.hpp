#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rcas/geo.hpp"
#include "rcas/track_map.hpp"

namespace testutil {

inline const rcas::GeoPoint kRef{18.2900000, 49.8200000};

inline nlohmann::json segment_json(std::uint32_t id, const std::vector<rcas::LocalXY>& pts,
                                   std::vector<std::uint32_t> next = {},
                                   std::vector<std::pair<double, double>> slope = {}) {
    const rcas::LocalFrame frame(kRef);
    nlohmann::json seg;
    seg["id"] = id;
    seg["points"] = nlohmann::json::array();
    for (const auto& p : pts) {
        const rcas::GeoPoint g = frame.to_geo(p);
        seg["points"].push_back({g.lon, g.lat});
    }
    if (!slope.empty()) {
        seg["slope"] = nlohmann::json::array();
        for (const auto& [s, th] : slope) seg["slope"].push_back({s, th});
    }
    seg["next"] = next;
    return seg;
}

inline std::string map_json(const std::vector<nlohmann::json>& segments) {
    nlohmann::json doc;
    doc["reference"] = {kRef.lon, kRef.lat};
    doc["segments"] = segments;
    return doc.dump();
}

/// Straight track running north from the reference point.
inline std::vector<rcas::LocalXY> north_line(double length, int n_points, double x0 = 0.0,
                                             double y0 = 0.0) {
    std::vector<rcas::LocalXY> pts;
    for (int i = 0; i < n_points; ++i)
        pts.push_back({x0, y0 + length * i / (n_points - 1)});
    return pts;
}

inline rcas::TrackMap straight_map(double length = 1000.0, int n_points = 21,
                                   std::vector<std::pair<double, double>> slope = {}) {
    return rcas::TrackMap::from_json_text(
        map_json({segment_json(0, north_line(length, n_points), {}, std::move(slope))}));
}

/// Trunk (id 0, 300 m north) splitting into branch A (id 1, straight on) and
/// branch B (id 2, veering east at `angle_deg`).
inline rcas::TrackMap junction_map(double angle_deg = 20.0, double trunk_len = 300.0,
                                   double branch_len = 500.0) {
    const double rad = angle_deg * rcas::kDegToRad;
    std::vector<rcas::LocalXY> trunk = north_line(trunk_len, 7);
    std::vector<rcas::LocalXY> a, b;
    for (int i = 0; i < 11; ++i) {
        const double d = branch_len * i / 10.0;
        a.push_back({0.0, trunk_len + d});
        b.push_back({d * std::sin(rad), trunk_len + d * std::cos(rad)});
    }
    return rcas::TrackMap::from_json_text(map_json({
        segment_json(0, trunk, {1, 2}),
        segment_json(1, a),
        segment_json(2, b),
    }));
}

inline rcas::GeoPoint east_of(const rcas::TrackMap& map, const rcas::LocalXY& base,
                              double meters) {
    return map.frame().to_geo({base.x + meters, base.y});
}

}  // namespace testutil
