#pragma once

#include <cmath>

namespace meshflow {

inline constexpr double kEarthRadiusKm = 6371.0;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

inline double deg2rad(double d) { return d * M_PI / 180.0; }

/// Great-circle distance in km (haversine).
inline double haversine_km(const LatLon& a, const LatLon& b) {
    double dlat = deg2rad(b.lat - a.lat);
    double dlon = deg2rad(b.lon - a.lon);
    double sa = std::sin(dlat / 2.0);
    double sb = std::sin(dlon / 2.0);
    double h = sa * sa +
               std::cos(deg2rad(a.lat)) * std::cos(deg2rad(b.lat)) * sb * sb;
    h = std::min(1.0, h);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

}  // namespace meshflow
