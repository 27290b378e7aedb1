#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "spxt/tvprox.hpp"

using namespace spxt;

namespace {

double objective(const std::vector<double>& x, const std::vector<double>& y, double lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += 0.5 * (x[i] - y[i]) * (x[i] - y[i]);
    return s + lambda * total_variation(x);
}

// Dual oracle: projected gradient on min 1/2 ||y - D^T z||^2 over |z| <= lambda,
// with the primal recovered as x = y - D^T z. (D^T z)_i = z_{i-1} - z_i.
std::vector<double> dual_oracle(const std::vector<double>& y, double lambda) {
    const std::size_t n = y.size();
    if (n == 1) return y;
    std::vector<double> z(n - 1, 0.0), x(n);
    auto primal = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            const double left = i > 0 ? z[i - 1] : 0.0, right = i + 1 < n ? z[i] : 0.0;
            x[i] = y[i] - (left - right);
        }
    };
    for (int it = 0; it < 20000; ++it) {
        primal();
        // Gradient of the dual objective w.r.t. z_k is -(x_{k+1} - x_k); step 1/4 <= 1/||D D^T||.
        for (std::size_t k = 0; k + 1 < n; ++k) z[k] = std::clamp(z[k] + 0.25 * (x[k + 1] - x[k]), -lambda, lambda);
    }
    primal();
    return x;
}

std::vector<double> random_signal(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> y(n);
    for (auto& v : y) v = g(rng);
    return y;
}

// Running residual sums stay within [-lambda, lambda] and sit on -lambda*sign(jump) at jumps.
void expect_certificate(const std::vector<double>& y, const std::vector<double>& x, double lambda, double tol) {
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < y.size(); ++k) {
        s += y[k] - x[k];
        ASSERT_LE(std::abs(s), lambda + tol) << "k=" << k;
        const double jump = x[k + 1] - x[k];
        if (jump != 0.0) {
            ASSERT_NEAR(s, -lambda * (jump > 0 ? 1.0 : -1.0), tol) << "k=" << k;
        }
    }
    s += y.back() - x.back();
    ASSERT_NEAR(s, 0.0, tol);
}

}  // namespace

TEST(TvDenoise, ConstantUnchanged) {
    const std::vector<double> y(7, 0.42);
    // Exact up to the rounding of (y - lambda) + lambda.
    for (double lam : {0.0, 0.1, 10.0})
        for (double v : tv_denoise_1d(y, lam)) EXPECT_NEAR(v, 0.42, 1e-15);
}

TEST(TvDenoise, TwoPointClosedForm) {
    const std::vector<double> y{0.0, 2.0};
    const auto a = tv_denoise_1d(y, 0.5);
    EXPECT_NEAR(a[0], 0.5, 1e-15);
    EXPECT_NEAR(a[1], 1.5, 1e-15);
    const auto b = tv_denoise_1d(y, 2.0);
    EXPECT_NEAR(b[0], 1.0, 1e-15);
    EXPECT_NEAR(b[1], 1.0, 1e-15);
}

TEST(TvDenoise, ZeroLambdaIsBitwiseIdentity) {
    std::mt19937_64 rng(1);
    const auto y = random_signal(50, rng);
    EXPECT_EQ(tv_denoise_1d(y, 0.0), y);
}

TEST(TvDenoise, InvalidInput) {
    EXPECT_THROW(tv_denoise_1d(std::vector<double>{}, 1.0), std::invalid_argument);
    EXPECT_THROW(tv_denoise_1d(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}, 1.0),
                 std::invalid_argument);
    EXPECT_THROW(tv_denoise_1d(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}, 1.0),
                 std::invalid_argument);
    EXPECT_THROW(tv_denoise_1d(std::vector<double>{1.0, 2.0}, -0.1), std::invalid_argument);
}

TEST(TvDenoise, MatchesDualOracleOnShortSignals) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> len(1, 6);
    std::uniform_real_distribution<double> lam(0.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        const auto y = random_signal(static_cast<std::size_t>(len(rng)), rng);
        const double l = lam(rng);
        const auto x = tv_denoise_1d(y, l);
        const auto ref = dual_oracle(y, l);
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(x[i], ref[i], 1e-8) << "trial " << t;
    }
}

TEST(TvDenoise, OptimalityCertificateLongSignal) {
    std::mt19937_64 rng(3);
    for (double l : {0.01, 0.3, 5.0}) {
        auto y = random_signal(10000, rng);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += (i / 1000) % 2 ? 3.0 : 0.0;  // blocky plus noise
        expect_certificate(y, tv_denoise_1d(y, l), l, 1e-8);
    }
}

TEST(TvDenoise, ObjectiveDominance) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    const auto y = random_signal(40, rng);
    const double l = 0.4;
    const auto x = tv_denoise_1d(y, l);
    const double best = objective(x, y, l);
    for (int t = 0; t < 1000; ++t) {
        auto z = x;
        const double scale = std::pow(10.0, -1 - (t % 6));
        for (auto& v : z) v += scale * g(rng);
        EXPECT_LE(best, objective(z, y, l) + 1e-14);
    }
}

TEST(TvDenoise, MeanPreservedAndNonExpansive) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        const auto y1 = random_signal(64, rng), y2 = random_signal(64, rng);
        const double l = 0.05 * (t + 1);
        const auto x1 = tv_denoise_1d(y1, l), x2 = tv_denoise_1d(y2, l);
        double m_in = 0.0, m_out = 0.0, dx = 0.0, dy = 0.0;
        for (std::size_t i = 0; i < y1.size(); ++i) {
            m_in += y1[i];
            m_out += x1[i];
            dx += (x1[i] - x2[i]) * (x1[i] - x2[i]);
            dy += (y1[i] - y2[i]) * (y1[i] - y2[i]);
        }
        EXPECT_NEAR(m_in / 64, m_out / 64, 1e-12);
        EXPECT_LE(std::sqrt(dx), std::sqrt(dy) + 1e-12);
    }
}

TEST(TotalVariation, Basics) {
    EXPECT_EQ(total_variation(std::vector<double>{1.0}), 0.0);
    EXPECT_EQ(total_variation(std::vector<double>{0.0, 2.0, 1.0, 1.0}), 3.0);
}
