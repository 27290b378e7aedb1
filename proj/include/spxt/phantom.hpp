#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "spxt/errors.hpp"

namespace spxt {

using Vec3 = Eigen::Vector3d;

/// Radial density profile, one value per radial class (ordered by distance).
using Profile = Eigen::VectorXd;

struct Shell {
    double outer_radius;
    double density;
};

/**
 * Rotationally symmetric object made of nested constant-density shells,
 * supported in the unit ball. Shells are ordered from the innermost outwards.
 */
class ShellPhantom {
public:
    ShellPhantom() = default;

    explicit ShellPhantom(std::vector<Shell> shells) : shells_(std::move(shells)) {
        if (shells_.empty()) throw ConfigError("phantom needs at least one shell");
        double prev = 0.0;
        for (const auto& s : shells_) {
            if (!std::isfinite(s.outer_radius) || !std::isfinite(s.density))
                throw ConfigError("phantom shell values must be finite");
            if (s.outer_radius <= prev)
                throw ConfigError("shell radii must be strictly increasing and positive");
            if (s.density < 0.0) throw ConfigError("shell densities must be non-negative");
            prev = s.outer_radius;
        }
        if (prev > 1.0) throw ConfigError("outermost shell radius must be <= 1");
    }

    const std::vector<Shell>& shells() const { return shells_; }
    double outer_radius() const { return shells_.empty() ? 0.0 : shells_.back().outer_radius; }

    // Boundary points belong to the inner shell.
    double density_at_radius(double r) const {
        for (const auto& s : shells_)
            if (r <= s.outer_radius) return s.density;
        return 0.0;
    }

private:
    std::vector<Shell> shells_;
};

inline double eval_density(const ShellPhantom& phantom, const Vec3& point) {
    return phantom.density_at_radius(point.norm());
}

/// Presets: "sphere", "two-shell", "three-shell".
inline ShellPhantom phantom_preset(const std::string& name) {
    if (name == "sphere") return ShellPhantom({{0.8, 0.8}});
    if (name == "two-shell") return ShellPhantom({{0.4, 0.8}, {0.8, 0.4}});
    if (name == "three-shell") return ShellPhantom({{0.4, 0.8}, {0.6, 0.4}, {0.8, 0.2}});
    throw ConfigError("unknown phantom preset '" + name + "'");
}

/// Cubic grid on [-1,1]^3, index i fastest, then j, then k.
struct VoxelGrid {
    int n = 0;
    std::vector<double> values;

    VoxelGrid() = default;
    VoxelGrid(int n_, double fill = 0.0) : n(n_), values(checked_size(n_), fill) {}

    std::size_t size() const { return values.size(); }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * n + j) * n + i;
    }
    double& at(int i, int j, int k) { return values[index(i, j, k)]; }
    double at(int i, int j, int k) const { return values[index(i, j, k)]; }

    double spacing() const { return 2.0 / n; }
    double center_coord(int i) const { return (i + 0.5) * spacing() - 1.0; }
    Vec3 center(int i, int j, int k) const {
        return {center_coord(i), center_coord(j), center_coord(k)};
    }

    static std::size_t checked_size(int n_) {
        if (n_ < 1) throw ConfigError("grid size must be >= 1");
        return static_cast<std::size_t>(n_) * n_ * n_;
    }
};

/**
 * Partition of the voxels of an n^3 grid into classes of equal center distance.
 *
 * Voxel (i,j,k) has its center at (2i+1-n, 2j+1-n, 2k+1-n)/n, so the integer
 * (2i+1-n)^2 + (2j+1-n)^2 + (2k+1-n)^2 identifies the distance exactly.
 */
struct RadialMap {
    int n = 0;
    std::vector<int> class_of_voxel;
    std::vector<std::int64_t> class_key;
    std::vector<int> class_count;

    std::size_t num_classes() const { return class_key.size(); }

    static std::int64_t voxel_key(int n, int i, int j, int k) {
        const std::int64_t a = 2 * i + 1 - n, b = 2 * j + 1 - n, c = 2 * k + 1 - n;
        return a * a + b * b + c * c;
    }

    /// Distance of the class's voxel centers from the grid center.
    double class_radius(std::size_t c) const {
        return std::sqrt(static_cast<double>(class_key[c])) / n;
    }
};

/// Samples the phantom at every voxel center. The center distance is taken from
/// the integer key so that voxels of one radial class always get the same value.
inline VoxelGrid voxelize(const ShellPhantom& phantom, int n) {
    VoxelGrid grid(n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double r = std::sqrt(static_cast<double>(RadialMap::voxel_key(n, i, j, k))) / n;
                grid.at(i, j, k) = phantom.density_at_radius(r);
            }
    return grid;
}

inline RadialMap build_radial_map(int n) {
    RadialMap map;
    map.n = n;
    const std::size_t total = VoxelGrid::checked_size(n);

    std::map<std::int64_t, int> key_to_class;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) key_to_class.emplace(RadialMap::voxel_key(n, i, j, k), 0);

    int next = 0;
    for (auto& [key, cls] : key_to_class) {
        cls = next++;
        map.class_key.push_back(key);
    }
    map.class_count.assign(map.class_key.size(), 0);
    map.class_of_voxel.resize(total);

    std::size_t v = 0;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i, ++v) {
                const int cls = key_to_class.at(RadialMap::voxel_key(n, i, j, k));
                map.class_of_voxel[v] = cls;
                ++map.class_count[cls];
            }
    return map;
}

inline Profile reduce_to_profile(const VoxelGrid& grid, const RadialMap& map) {
    if (grid.n != map.n) throw InputMismatch("grid size does not match radial map");
    // Averages deviations from the first member so that constant classes reduce exactly.
    const auto classes = static_cast<Eigen::Index>(map.num_classes());
    Profile first = Profile::Constant(classes, std::numeric_limits<double>::quiet_NaN());
    Profile dev = Profile::Zero(classes);
    for (std::size_t v = 0; v < grid.size(); ++v) {
        const auto c = static_cast<Eigen::Index>(map.class_of_voxel[v]);
        if (std::isnan(first[c])) first[c] = grid.values[v];
        dev[c] += grid.values[v] - first[c];
    }
    for (Eigen::Index c = 0; c < classes; ++c) first[c] += dev[c] / map.class_count[c];
    return first;
}

inline VoxelGrid embed_profile(const Profile& profile, const RadialMap& map) {
    if (static_cast<std::size_t>(profile.size()) != map.num_classes())
        throw InputMismatch("profile length does not match number of radial classes");
    VoxelGrid grid(map.n);
    for (std::size_t v = 0; v < grid.size(); ++v) grid.values[v] = profile[map.class_of_voxel[v]];
    return grid;
}

/// Radial profile of the voxelized phantom (the discretized ground truth).
inline Profile phantom_profile(const ShellPhantom& phantom, const RadialMap& map) {
    Profile p(static_cast<Eigen::Index>(map.num_classes()));
    for (Eigen::Index c = 0; c < p.size(); ++c) p[c] = phantom.density_at_radius(map.class_radius(static_cast<std::size_t>(c)));
    return p;
}

}  // namespace spxt
