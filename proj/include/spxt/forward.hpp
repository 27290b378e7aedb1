#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "spxt/errors.hpp"
#include "spxt/geometry.hpp"
#include "spxt/phantom.hpp"

namespace spxt {

struct PathEntry {
    int cls;
    double length;
};

/// Path lengths of one ray through the grid, aggregated per radial class (sorted by class).
using SparseRow = std::vector<PathEntry>;

/**
 * Exact radiological path of a ray through the n^3 voxel grid on [-1,1]^3.
 *
 * Siddon-style: the parametric crossings with the x, y and z voxel planes are
 * merged in increasing order; every consecutive pair of crossings bounds a
 * segment that lies in a single voxel, identified from its midpoint.
 */
inline SparseRow trace_ray(const Vec3& origin, const Vec3& direction, const RadialMap& map) {
    const double dnorm = direction.norm();
    if (!(dnorm > 0.0)) throw std::invalid_argument("trace_ray: zero direction vector");
    if (std::abs(dnorm - 1.0) > 1e-9) throw std::invalid_argument("trace_ray: direction must be unit length");

    const int n = map.n;
    const double h = 2.0 / n;

    // Slab clipping against the cube, restricted to t >= 0.
    double t_in = 0.0;
    double t_out = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = origin[a], d = direction[a];
        if (d == 0.0) {
            if (o < -1.0 || o > 1.0) return {};
            continue;
        }
        double ta = (-1.0 - o) / d, tb = (1.0 - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t_in = std::max(t_in, ta);
        t_out = std::min(t_out, tb);
    }
    if (!(t_out > t_in)) return {};

    // Per-axis sorted plane crossings strictly inside (t_in, t_out).
    std::vector<double> crossings;
    crossings.reserve(3 * static_cast<std::size_t>(n + 1) + 2);
    crossings.push_back(t_in);
    for (int a = 0; a < 3; ++a) {
        const double o = origin[a], d = direction[a];
        if (d == 0.0) continue;
        for (int p = 0; p <= n; ++p) {
            const double t = (-1.0 + p * h - o) / d;
            if (t > t_in && t < t_out) crossings.push_back(t);
        }
    }
    crossings.push_back(t_out);
    std::sort(crossings.begin(), crossings.end());

    std::vector<PathEntry> segs;
    segs.reserve(crossings.size());
    for (std::size_t s = 0; s + 1 < crossings.size(); ++s) {
        const double len = crossings[s + 1] - crossings[s];
        if (!(len > 0.0)) continue;
        const Vec3 mid = origin + 0.5 * (crossings[s] + crossings[s + 1]) * direction;
        int idx[3];
        for (int a = 0; a < 3; ++a) idx[a] = std::clamp(static_cast<int>(std::floor((mid[a] + 1.0) / h)), 0, n - 1);
        const std::size_t voxel = (static_cast<std::size_t>(idx[2]) * n + idx[1]) * n + idx[0];
        segs.push_back({map.class_of_voxel[voxel], len});
    }

    std::stable_sort(segs.begin(), segs.end(), [](const PathEntry& a, const PathEntry& b) { return a.cls < b.cls; });
    SparseRow row;
    for (const auto& e : segs) {
        if (!row.empty() && row.back().cls == e.cls)
            row.back().length += e.length;
        else
            row.push_back(e);
    }
    return row;
}

inline double line_integral(const Profile& profile, const SparseRow& row) {
    double sum = 0.0;
    for (const auto& e : row) {
        if (e.cls < 0 || e.cls >= profile.size()) throw std::out_of_range("line_integral: class index out of range");
        sum += e.length * profile[e.cls];
    }
    return sum;
}

/// Per-source ray path lengths through the radial classes, stored in CSR form.
struct PathMatrix {
    int source_id = 0;
    int ray_count = 0;
    std::vector<std::size_t> row_start{0};
    std::vector<int> cls;
    std::vector<double> length;

    void append_row(const SparseRow& row) {
        for (const auto& e : row) {
            cls.push_back(e.cls);
            length.push_back(e.length);
        }
        row_start.push_back(cls.size());
        ++ray_count;
    }

    SparseRow row(int r) const {
        SparseRow out;
        for (std::size_t p = row_start[r]; p < row_start[r + 1]; ++p) out.push_back({cls[p], length[p]});
        return out;
    }

    double ray_integral(const Profile& profile, int r) const {
        double sum = 0.0;
        for (std::size_t p = row_start[r]; p < row_start[r + 1]; ++p) sum += length[p] * profile[cls[p]];
        return sum;
    }
};

inline PathMatrix build_path_matrix(int source_id, const Vec3& source, const DetectorSpec& det,
                                    const RadialMap& map) {
    const RayBundle bundle = generate_rays(source, det);
    PathMatrix pm;
    pm.source_id = source_id;
    for (const Vec3& d : bundle.directions) pm.append_row(trace_ray(bundle.origin, d, map));
    return pm;
}

inline std::vector<PathMatrix> build_path_matrices(const Geometry& geom, const RadialMap& map) {
    const auto count = static_cast<long>(geom.sources.size());
    std::vector<PathMatrix> paths(static_cast<std::size_t>(count));
    for (const auto& p : geom.sources.positions) check_detector(p, geom.detector);
#pragma omp parallel for schedule(dynamic)
    for (long s = 0; s < count; ++s)
        paths[s] = build_path_matrix(static_cast<int>(s), geom.sources.positions[s], geom.detector, map);
    return paths;
}

/// Discrete Single Pixel X-Ray Transform: mean transmitted fraction over the ray bundle.
inline double k_transform(const Profile& profile, const PathMatrix& paths) {
    if (paths.ray_count == 0) return 1.0;
    double sum = 0.0;
    for (int r = 0; r < paths.ray_count; ++r) sum += std::exp(-paths.ray_integral(profile, r));
    return sum / paths.ray_count;
}

/// Exact gradient of k_transform with respect to the profile.
inline Profile k_gradient(const Profile& profile, const PathMatrix& paths) {
    Profile grad = Profile::Zero(profile.size());
    if (paths.ray_count == 0) return grad;
    const double inv = 1.0 / paths.ray_count;
    for (int r = 0; r < paths.ray_count; ++r) {
        const double w = -std::exp(-paths.ray_integral(profile, r)) * inv;
        for (std::size_t p = paths.row_start[r]; p < paths.row_start[r + 1]; ++p)
            grad[paths.cls[p]] += w * paths.length[p];
    }
    return grad;
}

/// K and dK/df in one pass; `transmitted` is scratch space reused across calls.
inline double k_value_and_gradient(const Profile& profile, const PathMatrix& paths,
                                   std::vector<double>& transmitted, Profile& dk) {
    dk.setZero(profile.size());
    if (paths.ray_count == 0) return 1.0;
    transmitted.resize(static_cast<std::size_t>(paths.ray_count));
    double sum = 0.0;
    for (int r = 0; r < paths.ray_count; ++r) {
        transmitted[r] = std::exp(-paths.ray_integral(profile, r));
        sum += transmitted[r];
    }
    const double inv = 1.0 / paths.ray_count;
    for (int r = 0; r < paths.ray_count; ++r) {
        const double w = -transmitted[r] * inv;
        for (std::size_t p = paths.row_start[r]; p < paths.row_start[r + 1]; ++p) dk[paths.cls[p]] += w * paths.length[p];
    }
    return sum * inv;
}

struct MeasurementSet {
    std::vector<Vec3> positions;
    std::vector<double> clean;
    std::vector<double> noisy;
    double noise_level = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const { return positions.size(); }
};

/// Relative Gaussian noise: noisy = clean * (1 + level * z), z drawn in source order.
inline std::vector<double> add_noise(const std::vector<double>& clean, double level, std::uint64_t seed) {
    if (!(level >= 0.0) || !std::isfinite(level)) throw ConfigError("noise level must be finite and >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> noisy(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) noisy[i] = clean[i] * (1.0 + level * normal(rng));
    return noisy;
}

/// Clean measurements of a profile for every source.
inline std::vector<double> forward_all(const Profile& profile, const std::vector<PathMatrix>& paths) {
    std::vector<double> out(paths.size());
    const auto count = static_cast<long>(paths.size());
#pragma omp parallel for schedule(static)
    for (long s = 0; s < count; ++s) out[s] = k_transform(profile, paths[s]);
    return out;
}

/// Measurements of a known profile through precomputed path matrices.
inline MeasurementSet measure(const Profile& truth, const std::vector<PathMatrix>& paths,
                              const std::vector<Vec3>& positions, double noise_level, std::uint64_t seed) {
    if (positions.size() != paths.size()) throw InputMismatch("measure: positions do not match path matrices");
    MeasurementSet ms;
    ms.positions = positions;
    ms.clean = forward_all(truth, paths);
    ms.noisy = add_noise(ms.clean, noise_level, seed);
    ms.noise_level = noise_level;
    ms.seed = seed;
    return ms;
}

/**
 * Synthesizes measurements of a phantom. Clean values are computed on the
 * voxelized phantom at resolution n_sim (n_sim == n is the inverse-crime setting).
 */
inline MeasurementSet simulate(const ShellPhantom& phantom, const Geometry& geom, int n_sim, double noise_level,
                               std::uint64_t seed) {
    const RadialMap map = build_radial_map(n_sim);
    const auto paths = build_path_matrices(geom, map);
    return measure(phantom_profile(phantom, map), paths, geom.sources.positions, noise_level, seed);
}

}  // namespace spxt
