#pragma once

#include <cmath>

namespace rcas {

inline constexpr double kEarthRadiusM = 6378137.0;  // WGS84 semi-major axis
inline constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

/// Geographic point in decimal degrees (WGS84).
struct GeoPoint {
    double lon = 0.0;
    double lat = 0.0;
};

/// Point in a local tangent plane, meters east (x) / north (y).
struct LocalXY {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const LocalXY& a, const LocalXY& b) {
    return std::hypot(b.x - a.x, b.y - a.y);
}

/// Equirectangular projection centered on a reference point. Adequate for
/// city-scale extents where the error is far below GNSS noise.
class LocalFrame {
  public:
    LocalFrame() : LocalFrame(GeoPoint{}) {}
    explicit LocalFrame(GeoPoint origin)
        : origin_(origin),
          m_per_deg_lat_(kEarthRadiusM * kDegToRad),
          m_per_deg_lon_(kEarthRadiusM * kDegToRad * std::cos(origin.lat * kDegToRad)) {}

    const GeoPoint& origin() const { return origin_; }

    LocalXY to_local(const GeoPoint& p) const {
        return {(p.lon - origin_.lon) * m_per_deg_lon_, (p.lat - origin_.lat) * m_per_deg_lat_};
    }

    GeoPoint to_geo(const LocalXY& p) const {
        return {origin_.lon + p.x / m_per_deg_lon_, origin_.lat + p.y / m_per_deg_lat_};
    }

  private:
    GeoPoint origin_;
    double m_per_deg_lat_;
    double m_per_deg_lon_;
};

/// Great-circle-free small-scale distance between two geographic points,
/// using an equirectangular plane anchored at `a`.
inline double geo_distance(const GeoPoint& a, const GeoPoint& b) {
    LocalFrame f(a);
    return distance(f.to_local(a), f.to_local(b));
}

/// Compass bearing of the direction vector (dx east, dy north), degrees
/// clockwise from north in [0, 360).
inline double bearing_deg(double dx, double dy) {
    double b = std::atan2(dx, dy) / kDegToRad;
    if (b < 0.0) b += 360.0;
    return b;
}

}  // namespace rcas
