#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "spxt/errors.hpp"
#include "spxt/forward.hpp"
#include "spxt/phantom.hpp"

namespace spxt {

struct SsimParams {
    double k1 = 0.01;
    double k2 = 0.03;
    std::optional<double> data_range;  // default: max of the reference grid
    int window = 7;
    double sigma = 1.5;
};

namespace detail {

// Symmetric ("half-sample") reflection: ... c b a | a b c ... | c b a ...
inline int reflect_index(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

inline std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(window));
    const int half = window / 2;
    double sum = 0.0;
    for (int t = -half; t <= half; ++t) {
        w[t + half] = std::exp(-0.5 * t * t / (sigma * sigma));
        sum += w[t + half];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable 3D filter with symmetric boundary handling.
inline std::vector<double> filter3d(const std::vector<double>& in, int n, const std::vector<double>& w) {
    const int half = static_cast<int>(w.size()) / 2;
    std::vector<double> a(in.size()), b(in.size());
    auto idx = [n](int i, int j, int k) { return (static_cast<std::size_t>(k) * n + j) * n + i; };
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int t = -half; t <= half; ++t) s += w[t + half] * in[idx(reflect_index(i + t, n), j, k)];
                a[idx(i, j, k)] = s;
            }
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int t = -half; t <= half; ++t) s += w[t + half] * a[idx(i, reflect_index(j + t, n), k)];
                b[idx(i, j, k)] = s;
            }
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int t = -half; t <= half; ++t) s += w[t + half] * b[idx(i, j, reflect_index(k + t, n))];
                a[idx(i, j, k)] = s;
            }
    return a;
}

}  // namespace detail

inline double resolved_data_range(const VoxelGrid& reference, const SsimParams& params) {
    if (params.data_range) return *params.data_range;
    return reference.values.empty() ? 0.0 : *std::max_element(reference.values.begin(), reference.values.end());
}

/**
 * Mean structural similarity of two equally sized voxel grids, with
 * Gaussian-weighted local statistics over a cubic window.
 */
inline double ssim(const VoxelGrid& reference, const VoxelGrid& candidate, const SsimParams& params = {}) {
    if (reference.n != candidate.n) throw InputMismatch("ssim: grid dimensions differ");
    if (!(params.k1 > 0.0) || !(params.k2 > 0.0)) throw std::invalid_argument("ssim: k1 and k2 must be positive");
    if (params.window < 1 || params.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
    const double range = resolved_data_range(reference, params);
    if (!(range > 0.0)) throw std::invalid_argument("ssim: data range must be positive");

    const int n = reference.n;
    const auto w = detail::gaussian_kernel(params.window, params.sigma);
    const auto& x = reference.values;
    const auto& y = candidate.values;
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t v = 0; v < x.size(); ++v) {
        xx[v] = x[v] * x[v];
        yy[v] = y[v] * y[v];
        xy[v] = x[v] * y[v];
    }
    const auto mx = detail::filter3d(x, n, w);
    const auto my = detail::filter3d(y, n, w);
    const auto sxx = detail::filter3d(xx, n, w);
    const auto syy = detail::filter3d(yy, n, w);
    const auto sxy = detail::filter3d(xy, n, w);

    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);
    double total = 0.0;
    for (std::size_t v = 0; v < x.size(); ++v) {
        const double vx = sxx[v] - mx[v] * mx[v];
        const double vy = syy[v] - my[v] * my[v];
        const double cov = sxy[v] - mx[v] * my[v];
        const double num = (2.0 * mx[v] * my[v] + c1) * (2.0 * cov + c2);
        const double den = (mx[v] * mx[v] + my[v] * my[v] + c1) * (vx + vy + c2);
        total += num / den;
    }
    return total / static_cast<double>(x.size());
}

inline double rmse(const VoxelGrid& reference, const VoxelGrid& candidate) {
    if (reference.n != candidate.n) throw InputMismatch("rmse: grid dimensions differ");
    double acc = 0.0;
    for (std::size_t v = 0; v < reference.size(); ++v) {
        const double d = reference.values[v] - candidate.values[v];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(reference.size()));
}

struct Verdict {
    bool accept = true;
    double max_deviation = 0.0;
    long worst_source = -1;
};

/// Accepts iff every source's noisy values agree within `tol`.
inline Verdict compare_measurements(const MeasurementSet& a, const MeasurementSet& b, double tol,
                                    double position_tol = 1e-9) {
    if (a.size() != b.size()) throw InputMismatch("compare_measurements: source counts differ");
    Verdict v;
    for (std::size_t s = 0; s < a.size(); ++s) {
        if ((a.positions[s] - b.positions[s]).norm() > position_tol)
            throw InputMismatch("compare_measurements: source positions differ");
        const double d = std::abs(a.noisy[s] - b.noisy[s]);
        if (d > v.max_deviation || v.worst_source < 0) {
            v.max_deviation = d;
            v.worst_source = static_cast<long>(s);
        }
    }
    v.accept = v.max_deviation <= tol;
    return v;
}

}  // namespace spxt
