#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace spxt {

/**
 * Exact minimizer of  1/2 ||y - x||^2 + lambda * sum_i |x_{i+1} - x_i|.
 *
 * Direct (non-iterative) taut-string sweep after L. Condat, "A direct algorithm
 * for 1D total variation denoising" (2013). Runs in O(N) on typical signals.
 */
inline std::vector<double> tv_denoise_1d(std::span<const double> y, double lambda) {
    const int width = static_cast<int>(y.size());
    if (width < 1) throw std::invalid_argument("tv_denoise_1d: empty signal");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("tv_denoise_1d: lambda must be finite and >= 0");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("tv_denoise_1d: non-finite input");

    std::vector<double> x(y.begin(), y.end());
    if (lambda == 0.0 || width == 1) return x;

    const double two_lambda = 2.0 * lambda;
    const double minus_lambda = -lambda;
    int k = 0, k0 = 0;       // current sample, start of the current segment
    int kplus = 0, kminus = 0;
    double umin = lambda, umax = minus_lambda;
    double vmin = y[0] - lambda, vmax = y[0] + lambda;

    for (;;) {
        while (k == width - 1) {
            if (umin < 0.0) {
                do x[k0++] = vmin; while (k0 <= kminus);
                k = kminus = k0;
                vmin = y[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if (umax > 0.0) {
                do x[k0++] = vmax; while (k0 <= kplus);
                k = kplus = k0;
                vmax = y[k];
                umax = minus_lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1);
                do x[k0++] = vmin; while (k0 <= k);
                return x;
            }
        }
        if ((umin += y[k + 1] - vmin) < minus_lambda) {
            do x[k0++] = vmin; while (k0 <= kminus);
            k = kplus = kminus = k0;
            vmin = y[k];
            vmax = vmin + two_lambda;
            umin = lambda;
            umax = minus_lambda;
        } else if ((umax += y[k + 1] - vmax) > lambda) {
            do x[k0++] = vmax; while (k0 <= kplus);
            k = kplus = kminus = k0;
            vmax = y[k];
            vmin = vmax - two_lambda;
            umin = lambda;
            umax = minus_lambda;
        } else {
            ++k;
            if (umin >= lambda) {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1);
                umin = lambda;
            }
            if (umax <= minus_lambda) {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1);
                umax = minus_lambda;
            }
        }
    }
}

/// Unweighted total variation sum_i |x_{i+1} - x_i|.
inline double total_variation(std::span<const double> x) {
    double tv = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) tv += std::abs(x[i] - x[i - 1]);
    return tv;
}

}  // namespace spxt
