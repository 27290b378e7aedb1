#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "spxt/bounded_lbfgs.hpp"
#include "spxt/errors.hpp"
#include "spxt/forward.hpp"
#include "spxt/tvprox.hpp"

namespace spxt {

/**
 * Least-squares data term F(f) = 1/2 sum_r (K_r f - g_r)^2 over all sources.
 *
 * Sources are processed in fixed-size chunks whose partial sums are reduced
 * in chunk order, so results do not depend on the number of threads.
 */
class SpxtDataTerm {
public:
    static constexpr long kChunk = 8;

    SpxtDataTerm(std::span<const double> data, std::span<const PathMatrix> paths) : data_(data), paths_(paths) {
        if (data_.size() != paths_.size()) throw InputMismatch("data term: measurement count does not match path matrices");
    }

    std::size_t num_sources() const { return paths_.size(); }

    double value(const Profile& f) const {
        const long chunks = num_chunks();
        std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static)
        for (long c = 0; c < chunks; ++c) {
            double acc = 0.0;
            for (long s = c * kChunk; s < std::min<long>((c + 1) * kChunk, size()); ++s) {
                const double r = k_transform(f, paths_[s]) - data_[s];
                acc += 0.5 * r * r;
            }
            partial[c] = acc;
        }
        double total = 0.0;
        for (double p : partial) total += p;
        return total;
    }

    double value_and_gradient(const Profile& f, Profile& grad) const {
        const long chunks = num_chunks();
        std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
        std::vector<Profile> partial_grad(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
        for (long c = 0; c < chunks; ++c) {
            std::vector<double> transmitted;
            Profile dk;
            Profile acc_grad = Profile::Zero(f.size());
            double acc = 0.0;
            for (long s = c * kChunk; s < std::min<long>((c + 1) * kChunk, size()); ++s) {
                const double r = k_value_and_gradient(f, paths_[s], transmitted, dk) - data_[s];
                acc += 0.5 * r * r;
                acc_grad += r * dk;
            }
            partial[c] = acc;
            partial_grad[c] = std::move(acc_grad);
        }
        grad.setZero(f.size());
        double total = 0.0;
        for (long c = 0; c < chunks; ++c) {
            total += partial[c];
            grad += partial_grad[c];
        }
        return total;
    }

private:
    long size() const { return static_cast<long>(paths_.size()); }
    long num_chunks() const { return (size() + kChunk - 1) / kChunk; }

    std::span<const double> data_;
    std::span<const PathMatrix> paths_;
};

inline double data_term(const Profile& f, const MeasurementSet& ms, std::span<const PathMatrix> paths) {
    return SpxtDataTerm(ms.noisy, paths).value(f);
}

inline Profile data_gradient(const Profile& f, const MeasurementSet& ms, std::span<const PathMatrix> paths) {
    Profile g;
    SpxtDataTerm(ms.noisy, paths).value_and_gradient(f, g);
    return g;
}

/// Box projection onto [0, f_max].
inline Profile clamp_profile(const Profile& v, double f_max) { return v.cwiseMax(0.0).cwiseMin(f_max); }

/**
 * prox_{gamma F}(v) restricted to the box: argmin gamma*F(f) + 1/2 ||f - v||^2
 * over 0 <= f <= f_max, warm-started at the projection of v.
 *
 * `term` is any type with `double value_and_gradient(const Profile&, Profile&) const`.
 */
template <class DataTerm>
Profile prox_data(const Profile& v, double gamma, const DataTerm& term, double f_max,
                  const BoundedLbfgsSettings& inner = {}) {
    if (!(gamma > 0.0)) throw ConfigError("prox_data: gamma must be > 0");
    if (!v.allFinite()) throw SolverFailure("prox_data: non-finite input");
    Profile data_grad;
    auto objective = [&](const Eigen::VectorXd& f, Eigen::VectorXd& grad) {
        const double fv = term.value_and_gradient(f, data_grad);
        grad = gamma * data_grad + (f - v);
        return gamma * fv + 0.5 * (f - v).squaredNorm();
    };
    auto res = minimize_bounded(objective, clamp_profile(v, f_max), 0.0, f_max, inner);
    return clamp_profile(res.x, f_max);
}

struct DRParams {
    double alpha = 0.03;
    double gamma = 1.0;
    int max_iters = 5000;
    BoundedLbfgsSettings inner;
    double f_max = 1.0;
    bool paper_literal_update = false;
    bool early_stop = false;
};

struct DRHistoryEntry {
    int iter;
    double J, F, G, step_norm;
};

struct DRState {
    Profile x, f, y;
    int iteration = 0;
    int quiet_steps = 0;  // consecutive iterations with ||f^{k+1} - f^k||_inf < 1e-9
    std::vector<DRHistoryEntry> history;

    static DRState zeros(Eigen::Index dim) {
        DRState s;
        s.x = s.f = s.y = Profile::Zero(dim);
        return s;
    }
};

/// TV weight for the x-step: gamma * alpha / N with N the profile length.
inline double tv_weight(const DRParams& p, Eigen::Index dim) { return p.gamma * p.alpha / static_cast<double>(dim); }

/// Regularizer G(f) = alpha / N * sum |f_{i+1} - f_i|.
inline double regularizer(const Profile& f, double alpha) {
    return alpha / static_cast<double>(f.size()) * total_variation(std::span<const double>(f.data(), f.size()));
}

/// One Douglas-Rachford step: TV prox, data prox on the reflection, y update.
template <class DataTerm>
void dr_iterate(DRState& st, const DRParams& params, const DataTerm& term) {
    const Eigen::Index dim = st.y.size();
    const auto xv = tv_denoise_1d(std::span<const double>(st.y.data(), dim), tv_weight(params, dim));
    Profile x_next = Eigen::Map<const Profile>(xv.data(), dim);
    Profile f_next = prox_data(Profile(2.0 * x_next - st.y), params.gamma, term, params.f_max, params.inner);

    if (params.paper_literal_update)
        st.y = st.y + f_next - st.x;
    else
        st.y = st.y + f_next - x_next;

    const double step = (f_next - st.f).cwiseAbs().maxCoeff();
    st.x = std::move(x_next);
    st.f = std::move(f_next);
    ++st.iteration;
    st.quiet_steps = step < 1e-9 ? st.quiet_steps + 1 : 0;

    Profile scratch;
    const double F = term.value_and_gradient(st.f, scratch);
    const double G = regularizer(st.f, params.alpha);
    st.history.push_back({st.iteration, F + G, F, G, step});
    if (!std::isfinite(F + G)) throw SolverFailure("dr_iterate: non-finite objective");
}

/// Runs the iteration budget (or until the optional early stop triggers).
template <class DataTerm>
DRState run_douglas_rachford(DRState st, const DRParams& params, const DataTerm& term,
                             const std::function<void(const DRState&)>& on_iter = {}) {
    if (!(params.gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (!(params.alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    while (st.iteration < params.max_iters) {
        dr_iterate(st, params, term);
        if (on_iter) on_iter(st);
        if (params.early_stop && st.quiet_steps >= 20) break;
    }
    return st;
}

struct Reconstruction {
    Profile profile;
    std::vector<DRHistoryEntry> history;
    RadialMap map;
};

/// Full pipeline from measurements: radial map, path matrices, zero start, DR iterations.
inline Reconstruction reconstruct(const MeasurementSet& ms, const Geometry& geom, int n, const DRParams& params,
                                  const std::function<void(const DRState&)>& on_iter = {}) {
    if (ms.size() != geom.sources.size()) throw InputMismatch("measurement count does not match geometry");
    Reconstruction out;
    out.map = build_radial_map(n);
    const auto paths = build_path_matrices(geom, out.map);
    SpxtDataTerm term(ms.noisy, paths);
    DRState st = run_douglas_rachford(DRState::zeros(static_cast<Eigen::Index>(out.map.num_classes())), params,
                                      term, on_iter);
    out.profile = std::move(st.f);
    out.history = std::move(st.history);
    return out;
}

}  // namespace spxt
