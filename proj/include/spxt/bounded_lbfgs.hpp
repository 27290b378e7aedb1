#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "spxt/errors.hpp"

namespace spxt {

struct BoundedLbfgsSettings {
    int max_iters = 200;
    double pg_tol = 1e-9;   // infinity norm of the projected gradient
    int memory = 10;
    double armijo = 1e-4;   // sufficient-decrease constant
    int max_backtracks = 40;
};

struct BoundedLbfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double pg_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Curvature-side constant of the approximate Armijo test used near the rounding floor.
inline constexpr double kApproxArmijoDelta = 0.1;

/**
 * Limited-memory BFGS with gradient projection onto the box [lo, hi]^N.
 *
 * Variables sitting on a bound whose gradient pushes outward are frozen for
 * the step; the two-loop recursion runs on the remaining ones, and the trial
 * point x + t*d is projected back onto the box before the Armijo test.
 *
 * `fg(x, grad)` returns the objective at x and writes its gradient.
 */
template <class ValueAndGradient>
BoundedLbfgsResult minimize_bounded(ValueAndGradient&& fg, Eigen::VectorXd x0, double lo, double hi,
                                    const BoundedLbfgsSettings& settings = {}) {
    using Vec = Eigen::VectorXd;
    const Eigen::Index dim = x0.size();
    auto project = [lo, hi](const Vec& v) -> Vec { return v.cwiseMax(lo).cwiseMin(hi); };
    auto check_finite = [](double f, const Vec& g) {
        if (!std::isfinite(f) || !g.allFinite()) throw SolverFailure("bounded L-BFGS: non-finite objective or gradient");
    };

    BoundedLbfgsResult res;
    res.x = project(x0);
    Vec g(dim);
    double f = fg(res.x, g);
    check_finite(f, g);

    std::deque<Vec> s_hist, y_hist;
    std::deque<double> rho_hist;
    Vec g_new(dim), x_new(dim), d(dim), q(dim);
    std::vector<double> alpha_buf;

    for (;;) {
        res.pg_norm = dim == 0 ? 0.0 : (res.x - project(res.x - g)).cwiseAbs().maxCoeff();
        if (res.pg_norm <= settings.pg_tol) {
            res.converged = true;
            break;
        }
        if (res.iterations >= settings.max_iters) break;

        // Free-variable mask.
        Eigen::ArrayXd mask(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            const bool pinned = (res.x[i] <= lo && g[i] > 0.0) || (res.x[i] >= hi && g[i] < 0.0);
            mask[i] = pinned ? 0.0 : 1.0;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            const bool steepest = attempt == 1 || s_hist.empty();
            q = (g.array() * mask).matrix();
            if (!steepest) {
                // Two-loop recursion on the masked gradient.
                const std::size_t mem = s_hist.size();
                alpha_buf.assign(mem, 0.0);
                for (std::size_t i = mem; i-- > 0;) {
                    alpha_buf[i] = rho_hist[i] * s_hist[i].dot(q);
                    q -= alpha_buf[i] * y_hist[i];
                }
                q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
                for (std::size_t i = 0; i < mem; ++i) {
                    const double beta = rho_hist[i] * y_hist[i].dot(q);
                    q += (alpha_buf[i] - beta) * s_hist[i];
                }
            }
            d = -(q.array() * mask).matrix();
            // Components that would leave the box through an active bound are dropped.
            for (Eigen::Index i = 0; i < dim; ++i)
                if ((res.x[i] <= lo && d[i] < 0.0) || (res.x[i] >= hi && d[i] > 0.0)) d[i] = 0.0;

            double t = 1.0;
            if (steepest) {
                const double dmax = d.cwiseAbs().maxCoeff();
                if (dmax > 1.0) t = 1.0 / dmax;
            }
            for (int bt = 0; bt < settings.max_backtracks; ++bt, t *= 0.5) {
                x_new = project(res.x + t * d);
                const Vec s = x_new - res.x;
                const double slope = g.dot(s);
                if (!(slope < 0.0)) break;  // null or non-descent projected step
                const double f_new = fg(x_new, g_new);
                if (!std::isfinite(f_new)) continue;
                // Near the optimum the decrease drops below the resolution of f; there the
                // approximate Armijo test on the directional derivative takes over.
                const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(f);
                const bool armijo = f_new <= f + settings.armijo * slope;
                const bool approx_armijo =
                    f_new <= f + slack && g_new.dot(s) <= (2.0 * kApproxArmijoDelta - 1.0) * slope;
                if (armijo || approx_armijo) {
                    check_finite(f_new, g_new);
                    Vec y = g_new - g;
                    const double sy = s.dot(y);
                    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
                        s_hist.push_back(s);
                        y_hist.push_back(std::move(y));
                        rho_hist.push_back(1.0 / sy);
                        if (static_cast<int>(s_hist.size()) > settings.memory) {
                            s_hist.pop_front();
                            y_hist.pop_front();
                            rho_hist.pop_front();
                        }
                    }
                    res.x = x_new;
                    g = g_new;
                    f = f_new;
                    accepted = true;
                    break;
                }
            }
            if (!accepted && steepest) break;
            if (!accepted) {
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
            }
        }
        ++res.iterations;
        // No descent possible from here: we are at numerical precision.
        if (!accepted) break;
    }
    res.value = f;
    return res;
}

}  // namespace spxt
