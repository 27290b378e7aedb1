#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "spxt/errors.hpp"
#include "spxt/phantom.hpp"

namespace spxt {

struct SourceSet {
    std::vector<Vec3> positions;
    double radius = 0.0;

    std::size_t size() const { return positions.size(); }
};

/**
 * Flat square single-pixel detector. It sits perpendicular to the
 * source-to-center axis, `distance` beyond the source, and is sampled as an
 * m x m cell-centered grid of points.
 */
struct DetectorSpec {
    double distance = 6.0;
    double side = 4.0;
    int rays_per_axis = 10;

    int ray_count() const { return rays_per_axis * rays_per_axis; }

    /// Covering radius of the sample points over the detector square.
    double fill_distance() const { return side / rays_per_axis * std::numbers::sqrt2 / 2.0; }
};

struct RayBundle {
    Vec3 origin;
    std::vector<Vec3> directions;
};

struct Geometry {
    SourceSet sources;
    DetectorSpec detector;
};

/// Fibonacci spherical lattice of `count` points scaled to `radius`.
inline SourceSet generate_sources(int count, double radius) {
    if (count < 1) throw ConfigError("source count must be >= 1");
    if (!(radius > 1.0)) throw ConfigError("source radius must be > 1 (outside the object support)");
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    SourceSet set;
    set.radius = radius;
    set.positions.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / count;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * i;
        Vec3 p(rho * std::cos(phi), rho * std::sin(phi), z);
        set.positions.push_back(radius * p.normalized());
    }
    return set;
}

// The cone spanned by the source and the detector corners must contain the unit ball.
inline void check_detector(const Vec3& source, const DetectorSpec& det) {
    if (!(det.distance > 0.0) || !(det.side > 0.0) || det.rays_per_axis < 1)
        throw ConfigError("detector distance, side and rays_per_axis must be positive");
    const double r = source.norm();
    if (!(r > 1.0)) throw ConfigError("source must lie outside the unit ball");
    const double corner_half_angle = std::atan(det.side / std::numbers::sqrt2 / det.distance);
    const double ball_half_angle = std::asin(1.0 / r);
    if (corner_half_angle < ball_half_angle)
        throw ConfigError("detector cone does not contain the unit ball");
}

/// Orthonormal detector frame (u, v) perpendicular to `axis`; deterministic in `axis`.
inline std::pair<Vec3, Vec3> detector_frame(const Vec3& axis) {
    const Vec3 helper = std::abs(axis.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 u = axis.cross(helper).normalized();
    const Vec3 v = axis.cross(u).normalized();
    return {u, v};
}

/// Sample points on the detector square for a given source, row-major in (u, v).
inline std::vector<Vec3> detector_samples(const Vec3& source, const DetectorSpec& det) {
    const Vec3 axis = (-source).normalized();
    const auto [u, v] = detector_frame(axis);
    const Vec3 center = source + det.distance * axis;
    const int m = det.rays_per_axis;
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(m) * m);
    for (int a = 0; a < m; ++a) {
        const double su = ((a + 0.5) / m - 0.5) * det.side;
        for (int b = 0; b < m; ++b) {
            const double sv = ((b + 0.5) / m - 0.5) * det.side;
            pts.push_back(center + su * u + sv * v);
        }
    }
    return pts;
}

inline RayBundle generate_rays(const Vec3& source, const DetectorSpec& det) {
    check_detector(source, det);
    RayBundle bundle;
    bundle.origin = source;
    for (const Vec3& p : detector_samples(source, det)) bundle.directions.push_back((p - source).normalized());
    return bundle;
}

/// Solid angle of the detector square seen from the on-axis source, over 4*pi.
inline double solid_angle_fraction(const DetectorSpec& det) {
    const double s2 = det.side * det.side;
    const double omega = 4.0 * std::asin(s2 / (s2 + 4.0 * det.distance * det.distance));
    return omega / (4.0 * std::numbers::pi);
}

inline double solid_angle_fraction(const Vec3& source, const DetectorSpec& det) {
    check_detector(source, det);
    return solid_angle_fraction(det);
}

}  // namespace spxt
