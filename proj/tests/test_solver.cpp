#include <cmath>
#include <random>

#include <gtest/gtest.h>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "spxt/solver.hpp"

using namespace spxt;

namespace {

Profile random_profile(std::size_t dim, std::mt19937_64& rng, double hi = 1.0) {
    std::uniform_real_distribution<double> u(0.0, hi);
    Profile p(static_cast<Eigen::Index>(dim));
    for (Eigen::Index c = 0; c < p.size(); ++c) p[c] = u(rng);
    return p;
}

// Independent forward model: per ray, march over every voxel box (slab clip) and
// accumulate length * voxel value from the embedded grid. No class aggregation.
double naive_k(const Profile& profile, const RadialMap& map, const Vec3& src, const DetectorSpec& det) {
    const VoxelGrid grid = embed_profile(profile, map);
    const int n = map.n;
    const double h = 2.0 / n;
    double sum = 0.0;
    const auto bundle = generate_rays(src, det);
    for (const Vec3& d : bundle.directions) {
        double L = 0.0;
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const Vec3 lo(-1 + i * h, -1 + j * h, -1 + k * h);
                    double t0 = 0.0, t1 = 1e300;
                    bool hit = true;
                    for (int a = 0; a < 3 && hit; ++a) {
                        if (d[a] == 0.0) {
                            hit = src[a] >= lo[a] && src[a] <= lo[a] + h;
                            continue;
                        }
                        double ta = (lo[a] - src[a]) / d[a], tb = (lo[a] + h - src[a]) / d[a];
                        if (ta > tb) std::swap(ta, tb);
                        t0 = std::max(t0, ta);
                        t1 = std::min(t1, tb);
                    }
                    if (hit && t1 > t0) L += (t1 - t0) * grid.at(i, j, k);
                }
        sum += std::exp(-L);
    }
    return sum / static_cast<double>(bundle.directions.size());
}

struct Setup {
    RadialMap map;
    Geometry geom;
    std::vector<PathMatrix> paths;
    Profile truth;
    MeasurementSet ms;
};

Setup make_setup(int n, int count, int m, double noise, std::uint64_t seed = 7) {
    Setup s;
    s.map = build_radial_map(n);
    s.geom = Geometry{generate_sources(count, 3.0), DetectorSpec{6.0, 4.0, m}};
    s.paths = build_path_matrices(s.geom, s.map);
    s.truth = phantom_profile(phantom_preset("two-shell"), s.map);
    s.ms = simulate(phantom_preset("two-shell"), s.geom, n, noise, seed);
    return s;
}

// F(f) = 1/2 ||f - a||^2: a test double with a closed-form DR limit.
struct QuadraticTerm {
    Profile a;
    double value_and_gradient(const Profile& f, Profile& g) const {
        g = f - a;
        return 0.5 * (f - a).squaredNorm();
    }
};

}  // namespace

TEST(DataTerm, ZeroAtTruthWithoutNoise) {
    const auto s = make_setup(8, 20, 4, 0.0);
    EXPECT_EQ(data_term(s.truth, s.ms, s.paths), 0.0);
    EXPECT_LT(data_gradient(s.truth, s.ms, s.paths).norm(), 1e-8);
}

TEST(DataTerm, ZeroObjectZeroProfile) {
    const auto map = build_radial_map(6);
    const Geometry g{generate_sources(9, 3.0), DetectorSpec{6.0, 4.0, 3}};
    const auto paths = build_path_matrices(g, map);
    const auto ms = simulate(ShellPhantom({{0.5, 0.0}}), g, 6, 0.0, 1);
    for (double v : ms.clean) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(data_term(Profile::Zero(static_cast<Eigen::Index>(map.num_classes())), ms, paths), 0.0);
}

TEST(DataTerm, MatchesNaivePerVoxelForward) {
    const auto s = make_setup(6, 6, 3, 0.01);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 3; ++t) {
        const Profile p = random_profile(s.map.num_classes(), rng);
        double naive = 0.0;
        for (std::size_t r = 0; r < s.ms.size(); ++r) {
            const double res = naive_k(p, s.map, s.geom.sources.positions[r], s.geom.detector) - s.ms.noisy[r];
            naive += 0.5 * res * res;
        }
        EXPECT_NEAR(data_term(p, s.ms, s.paths), naive, 1e-10);
    }
}

TEST(DataTerm, GradientFiniteDifferences) {
    const auto s = make_setup(10, 16, 6, 0.01);
    std::mt19937_64 rng(4);
    const Profile p = random_profile(s.map.num_classes(), rng);
    const Profile g = data_gradient(p, s.ms, s.paths);
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index c = 0; c < p.size(); ++c) {
        Profile a = p, b = p;
        a[c] += h;
        b[c] -= h;
        const double fd = (data_term(a, s.ms, s.paths) - data_term(b, s.ms, s.paths)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[c]));
    }
    EXPECT_LT(worst / g.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DataTerm, SingleRayClosedForm) {
    const auto map = build_radial_map(10);
    PathMatrix pm;
    const auto row = trace_ray(Vec3(3, 0.05, 0.05), Vec3(-1, 0, 0), map);
    pm.append_row(row);
    std::mt19937_64 rng(5);
    const Profile p = random_profile(map.num_classes(), rng);
    const std::vector<double> data{0.3};
    const std::vector<PathMatrix> paths{pm};
    Profile g;
    SpxtDataTerm(data, paths).value_and_gradient(p, g);
    const double L = line_integral(p, row);
    const double k = std::exp(-L);
    for (const auto& e : row) EXPECT_NEAR(g[e.cls], (k - 0.3) * (-k) * e.length, 1e-14);
}

TEST(DataTerm, CountMismatch) {
    const auto s = make_setup(6, 5, 3, 0.0);
    const std::vector<double> data(4, 0.5);
    EXPECT_THROW(SpxtDataTerm(data, s.paths), InputMismatch);
}

TEST(DataTerm, ThreadCountInvariant) {
#ifdef _OPENMP
    const auto s = make_setup(10, 60, 4, 0.01);
    std::mt19937_64 rng(6);
    const Profile p = random_profile(s.map.num_classes(), rng);
    SpxtDataTerm term(s.ms.noisy, s.paths);
    Profile g1, g4;
    omp_set_num_threads(1);
    const double v1 = term.value_and_gradient(p, g1);
    omp_set_num_threads(4);
    const double v4 = term.value_and_gradient(p, g4);
    EXPECT_EQ(v1, v4);
    EXPECT_EQ(g1, g4);
#else
    GTEST_SKIP() << "built without OpenMP";
#endif
}

TEST(ProxData, SmallGammaIsProjection) {
    const auto s = make_setup(8, 10, 4, 0.01);
    SpxtDataTerm term(s.ms.noisy, s.paths);
    std::mt19937_64 rng(8);
    const Profile v = (random_profile(s.map.num_classes(), rng, 3.0).array() - 1.0).matrix();
    const Profile out = prox_data(v, 1e-12, term, 1.0);
    EXPECT_LE((out - clamp_profile(v, 1.0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ProxData, EmptyMeasurementSetIsProjection) {
    const std::vector<double> data;
    const std::vector<PathMatrix> paths;
    SpxtDataTerm term(data, paths);
    const Profile v = (Profile(4) << -0.5, 0.25, 1.5, 0.75).finished();
    EXPECT_EQ(prox_data(v, 3.0, term, 1.0), clamp_profile(v, 1.0));
}

TEST(ProxData, DominatesRandomFeasiblePoints) {
    const auto s = make_setup(8, 20, 4, 0.01);
    SpxtDataTerm term(s.ms.noisy, s.paths);
    std::mt19937_64 rng(9);
    const Profile v = random_profile(s.map.num_classes(), rng, 1.2);
    const double gamma = 5.0;
    auto obj = [&](const Profile& f) {
        Profile g;
        return gamma * term.value_and_gradient(f, g) + 0.5 * (f - v).squaredNorm();
    };
    const Profile out = prox_data(v, gamma, term, 1.0);
    EXPECT_GE(out.minCoeff(), 0.0);
    EXPECT_LE(out.maxCoeff(), 1.0);
    const double best = obj(out);
    for (int t = 0; t < 100; ++t) EXPECT_LE(best, obj(random_profile(s.map.num_classes(), rng)) + 1e-12);
    EXPECT_THROW(prox_data(v, 0.0, term, 1.0), ConfigError);
}

TEST(DouglasRachford, QuadraticToyConvergesToTvProx) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::Index dim = 30;
    QuadraticTerm term{Profile(dim)};
    for (Eigen::Index i = 0; i < dim; ++i) term.a[i] = 0.5 + (i < 12 ? 0.3 : -0.2) + 0.05 * g(rng);
    DRParams p;
    p.alpha = 1.5;
    p.gamma = 1.0;
    p.max_iters = 200;
    p.inner.pg_tol = 1e-13;
    const DRState st = run_douglas_rachford(DRState::zeros(dim), p, term);
    // argmin 1/2||f - a||^2 + alpha/N TV(f) is the TV prox of a; the box is inactive here.
    const auto expected = tv_denoise_1d(std::span<const double>(term.a.data(), dim), p.alpha / dim);
    for (Eigen::Index i = 0; i < dim; ++i) EXPECT_NEAR(st.f[i], expected[i], 1e-8);
    EXPECT_EQ(st.history.size(), 200u);
}

TEST(DouglasRachford, TruthIsFixedPointWithoutRegularization) {
    const auto s = make_setup(8, 30, 4, 0.0);
    SpxtDataTerm term(s.ms.noisy, s.paths);
    DRParams p;
    p.alpha = 0.0;
    p.max_iters = 3;
    DRState st = DRState::zeros(s.truth.size());
    st.x = st.y = st.f = s.truth;
    st = run_douglas_rachford(st, p, term);
    EXPECT_LT((st.f - s.truth).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((st.y - s.truth).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DouglasRachford, HistoryBookkeeping) {
    const auto s = make_setup(8, 30, 4, 0.01);
    SpxtDataTerm term(s.ms.noisy, s.paths);
    DRParams p;
    p.max_iters = 15;
    int calls = 0;
    const DRState st = run_douglas_rachford(DRState::zeros(s.truth.size()), p, term, [&](const DRState&) { ++calls; });
    EXPECT_EQ(calls, 15);
    ASSERT_EQ(st.history.size(), 15u);
    Profile scratch;
    const double j0 = term.value_and_gradient(Profile::Zero(s.truth.size()), scratch);
    double jmin = 1e300;
    for (std::size_t k = 0; k < st.history.size(); ++k) {
        const auto& h = st.history[k];
        EXPECT_EQ(h.iter, static_cast<int>(k) + 1);
        EXPECT_TRUE(std::isfinite(h.J));
        EXPECT_NEAR(h.J, h.F + h.G, 1e-15);
        jmin = std::min(jmin, h.J);
    }
    EXPECT_LE(jmin, j0);
    EXPECT_GE(st.f.minCoeff(), 0.0);
    EXPECT_LE(st.f.maxCoeff(), 1.0);
}

TEST(DouglasRachford, LiteralUpdateUsesPreviousX) {
    QuadraticTerm term{Profile::Constant(5, 0.4)};
    DRParams p;
    p.alpha = 0.1;
    p.max_iters = 1;
    DRState st = DRState::zeros(5);
    st.x = Profile::Constant(5, 0.9);  // stale x so the two updates differ
    DRState a = st, b = st;
    dr_iterate(a, p, term);
    p.paper_literal_update = true;
    dr_iterate(b, p, term);
    EXPECT_LE((a.y - (st.y + a.f - a.x)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((b.y - (st.y + b.f - st.x)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DouglasRachford, EarlyStopAndValidation) {
    QuadraticTerm term{Profile::Constant(6, 0.3)};
    DRParams p;
    p.alpha = 0.0;
    p.max_iters = 1000;
    p.early_stop = true;
    const DRState st = run_douglas_rachford(DRState::zeros(6), p, term);
    EXPECT_LT(st.iteration, 1000);
    EXPECT_GE(st.quiet_steps, 20);

    p.gamma = 0.0;
    EXPECT_THROW(run_douglas_rachford(DRState::zeros(6), p, term), ConfigError);
    p.gamma = 1.0;
    p.alpha = -1.0;
    EXPECT_THROW(run_douglas_rachford(DRState::zeros(6), p, term), ConfigError);
}

TEST(Reconstruct, DeterministicHistory) {
    const auto s = make_setup(8, 24, 4, 0.01);
    DRParams p;
    p.max_iters = 10;
    const auto a = reconstruct(s.ms, s.geom, 8, p);
    const auto b = reconstruct(s.ms, s.geom, 8, p);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].J, b.history[k].J);
    EXPECT_EQ(a.profile, b.profile);
    MeasurementSet short_ms = s.ms;
    short_ms.positions.pop_back();
    EXPECT_THROW(reconstruct(short_ms, s.geom, 8, p), InputMismatch);
}
