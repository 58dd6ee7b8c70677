/*
   Copyright 2026 The kelr Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

        http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "kelr/mercer_kernels.hpp"

using namespace kelr;

namespace {

BasisSpec hermite1(double beta, double rho) {
    BasisSpec s;
    s.families = {PolyFamily::hermite()};
    s.beta = beta;
    s.rho = rho;
    return s;
}

BasisSpec laguerre1(unsigned theta, double beta, double rho) {
    BasisSpec s;
    s.families = {PolyFamily::laguerre(theta)};
    s.beta = beta;
    s.rho = rho;
    return s;
}

double k1(const BasisSpec& s, double x, double y) {
    return evaluate_kernel({s, std::nullopt}, std::span<const double>(&x, 1), std::span<const double>(&y, 1));
}

// e^{-z} I_n(z) by a long-double power series with 200 terms.
long double bessel_oracle(unsigned n, long double z) {
    long double term = std::pow(z / 2.0L, (long double)n) / std::tgamma((long double)n + 1.0L);
    long double sum = term;
    const long double q = z * z / 4.0L;
    for (unsigned k = 1; k < 200; ++k) {
        term *= q / ((long double)k * (long double)(n + k));
        sum += term;
    }
    return sum * std::exp(-z);
}

}  // namespace

TEST(Mehler, OriginValue) {
    const double zero = 0.0;
    EXPECT_NEAR(k1(hermite1(1.0, 0.5), zero, zero), 1.0 / (2.0 * std::numbers::pi * std::sqrt(0.75)), 1e-14);
}

TEST(Mehler, SmallRhoLimitIsProductOfWeights) {
    const auto s = hermite1(1.0, 1e-12);
    for (double x : {-1.0, 0.3})
        for (double y : {0.0, 2.0})
            EXPECT_NEAR(k1(s, x, y), eval_weight(PolyFamily::hermite(), x, 1) * eval_weight(PolyFamily::hermite(), y, 1), 1e-12);
}

TEST(Mehler, Symmetric) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 2.0);
    BasisSpec s;
    s.families = {PolyFamily::hermite(), PolyFamily::hermite()};
    s.beta = 0.8;
    s.rho = 0.6;
    for (int t = 0; t < 100; ++t) {
        const double x[2] = {n(rng), n(rng)}, y[2] = {n(rng), n(rng)};
        EXPECT_DOUBLE_EQ(mehler_kernel(s, x, y), mehler_kernel(s, y, x));
    }
}

TEST(Mehler, RhoOutsideRangeIsError) {
    const double z = 0.0;
    EXPECT_THROW(k1(hermite1(1.0, 1.0), z, z), ParameterError);
    EXPECT_THROW(k1(hermite1(1.0, 0.0), z, z), ParameterError);
}

TEST(MercerSeries, MehlerEquivalenceOnGrid) {
    const auto s = hermite1(1.0, 0.5);
    double worst = 0.0;
    for (double x = -3.0; x <= 3.0 + 1e-12; x += 0.1)
        for (double y = -3.0; y <= 3.0 + 1e-12; y += 0.1) {
            const double a = truncated_mercer_sum(s, std::span<const double>(&x, 1), std::span<const double>(&y, 1), 100);
            worst = std::max(worst, std::abs(a - k1(s, x, y)));
        }
    EXPECT_LE(worst, 1e-8);
}

TEST(MercerSeries, MehlerGapNonIncreasingInTruncation) {
    const auto s = hermite1(1.0, 0.5);
    double previous = std::numeric_limits<double>::infinity();
    for (unsigned M = 10; M <= 100; M += 10) {
        double worst = 0.0;
        for (double x = -3.0; x <= 3.0 + 1e-12; x += 0.25)
            for (double y = -3.0; y <= 3.0 + 1e-12; y += 0.25)
                worst = std::max(worst, std::abs(truncated_mercer_sum(s, std::span<const double>(&x, 1), std::span<const double>(&y, 1), M) - k1(s, x, y)));
        EXPECT_LE(worst, previous * (1.0 + 1e-12) + 1e-15) << "M=" << M;
        previous = worst;
    }
}

TEST(MercerSeries, HilleHardyEquivalence) {
    const auto s = laguerre1(1, 0.5, 0.5);
    double worst = 0.0;
    for (double x = 0.0; x <= 5.0 + 1e-12; x += 0.125)
        for (double y = 0.0; y <= 5.0 + 1e-12; y += 0.125) {
            const double a = truncated_mercer_sum(s, std::span<const double>(&x, 1), std::span<const double>(&y, 1), 200);
            worst = std::max(worst, std::abs(a - k1(s, x, y)));
        }
    EXPECT_LE(worst, 1e-6);
}

TEST(MercerSeries, ZeroTruncationIsSingleTerm) {
    const auto s = hermite1(1.0, 0.5);
    const double x = 0.4, y = -1.1;
    const double expected = eval_weight(PolyFamily::hermite(), x, 1.0) * eval_weight(PolyFamily::hermite(), y, 1.0);
    EXPECT_NEAR(truncated_mercer_sum(s, std::span<const double>(&x, 1), std::span<const double>(&y, 1), 0), expected, 1e-16);
}

TEST(HilleHardy, SymmetricAndDomain) {
    std::mt19937_64 rng(2);
    std::exponential_distribution<double> e(0.3);
    BasisSpec s;
    s.families = {PolyFamily::laguerre(1), PolyFamily::laguerre(2)};
    s.beta = 0.7;
    s.rho = 0.4;
    for (int t = 0; t < 100; ++t) {
        const double x[2] = {e(rng), e(rng)}, y[2] = {e(rng), e(rng)};
        EXPECT_NEAR(hille_hardy_kernel(s, x, y), hille_hardy_kernel(s, y, x), 1e-13 * std::abs(hille_hardy_kernel(s, x, y)));
    }
    const double bad[2] = {-0.1, 1.0}, good[2] = {1.0, 1.0};
    EXPECT_THROW(hille_hardy_kernel(s, bad, good), DomainError);
}

TEST(HilleHardy, EnvelopeDecayAtHalfBeta) {
    const auto s = laguerre1(1, 0.5, 0.64);
    double prev = k1(s, 20.0, 20.0);
    for (double x = 21.0; x <= 200.0; x += 1.0) {
        const double v = k1(s, x, x);
        EXPECT_LT(v, prev) << x;
        prev = v;
    }
    // ratio against exp(-x (1 - sqrt(rho)) / (1 + sqrt(rho))) x^{-1/2} stays bounded
    const double r = std::sqrt(0.64);
    const double c = (1.0 - r) / (1.0 + r);
    const double a = k1(s, 50.0, 50.0) / (std::exp(-50.0 * c) / std::sqrt(50.0));
    const double b = k1(s, 150.0, 150.0) / (std::exp(-150.0 * c) / std::sqrt(150.0));
    EXPECT_NEAR(a / b, 1.0, 0.05);
}

TEST(HilleHardy, BoundedForBetaAboveHalf) {
    for (double beta : {0.5, 0.7, 1.0}) {
        const auto s = laguerre1(1, beta, 0.5);
        double best = 0.0, argbest = 0.0;
        for (double x = 0.0; x <= 200.0; x += 0.05) {
            const double v = k1(s, x, x);
            if (v > best) {
                best = v;
                argbest = x;
            }
        }
        EXPECT_LT(argbest, 150.0) << beta;
        EXPECT_LT(k1(s, 200.0, 200.0), best) << beta;
    }
}

TEST(SupNorm, Values) {
    EXPECT_NEAR(kernel_sup_norm(hermite1(1.0, 0.0)), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
    BasisSpec s;
    s.families = {PolyFamily::hermite(), PolyFamily::hermite()};
    s.beta = 1.0;
    s.rho = 0.5;
    EXPECT_NEAR(kernel_sup_norm(s), 1.0 / (2.0 * std::numbers::pi) / std::sqrt(0.75), 1e-15);
    EXPECT_THROW(kernel_sup_norm(laguerre1(1, 1.0, 0.5)), ParameterError);
}

TEST(SupNorm, GridSearchNeverExceedsBound) {
    const auto s = hermite1(1.0, 0.5);
    const double bound = kernel_sup_norm(s);
    double best = 0.0;
    for (double x = -10.0; x <= 10.0; x += 0.001) {
        const double v = k1(s, x, x);
        EXPECT_GE(v, 0.0);
        best = std::max(best, std::sqrt(v));
    }
    EXPECT_LE(best, bound * (1.0 + 1e-14));
    EXPECT_NEAR(best, bound, 1e-12);  // attained at x = 0
}

TEST(SupNorm, HilleHardyGridBound) {
    const auto s = laguerre1(1, 0.5, 0.5);
    const double b = hille_hardy_grid_sup(s, 50.0, 5001);
    for (double x = 0.0; x <= 50.0; x += 0.37) EXPECT_LE(std::sqrt(k1(s, x, x)), b * (1 + 1e-9));
}

TEST(Kernels, GramMatricesArePositiveSemidefinite) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.5);
    std::exponential_distribution<double> e(0.5);
    const auto mh = hermite1(1.0, 0.5);
    const auto hh = laguerre1(1, 0.6, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd A(8, 8), B(8, 8);
        std::vector<double> hx(8), lx(8);
        for (int i = 0; i < 8; ++i) {
            hx[i] = n(rng);
            lx[i] = e(rng);
        }
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                A(i, j) = k1(mh, hx[i], hx[j]);
                B(i, j) = k1(hh, lx[i], lx[j]);
            }
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues().minCoeff(), -1e-9);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(B).eigenvalues().minCoeff(), -1e-9);
    }
}

TEST(Bessel, TrivialValues) {
    EXPECT_EQ(modified_bessel_scaled(0, 0.0), 1.0);
    EXPECT_EQ(modified_bessel_scaled(1, 0.0), 0.0);
}

TEST(Bessel, MatchesExtendedPrecisionSeries) {
    const long double ref = bessel_oracle(1, 50.0L);
    EXPECT_NEAR(modified_bessel_scaled(1, 50.0) / double(ref), 1.0, 1e-10);
    for (unsigned n : {0u, 1u, 2u, 5u})
        for (double z : {0.1, 1.0, 7.5, 19.9, 20.1, 25.0, 40.0, 60.0}) {
            const double ref_v = double(bessel_oracle(n, z));
            EXPECT_NEAR(modified_bessel_scaled(n, z) / ref_v, 1.0, 1e-10) << "n=" << n << " z=" << z;
        }
}

TEST(Bessel, BranchesAgreeAtSwitchPoint) {
    for (unsigned n : {0u, 1u, 3u}) {
        const double below = modified_bessel_scaled(n, 20.0);
        const double above = modified_bessel_scaled(n, 20.0 + 1e-9);
        EXPECT_NEAR(below / above, 1.0, 1e-9);
    }
}
