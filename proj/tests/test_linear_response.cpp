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

#include <cmath>
#include <random>
#include <sstream>

#include "kelr/linear_response.hpp"

using namespace kelr;

namespace {

SampleSeries iid_normal(std::size_t n, std::size_t d, std::uint64_t seed) {
    SampleSeries s;
    s.dim = d;
    s.dt_effective = 0.01;
    s.data.resize(n * d);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (auto& v : s.data) v = g(rng);
    return s;
}

EquilibriumDensity standard_gaussian(std::size_t d) {
    EquilibriumDensity eq;
    eq.dim = d;
    eq.log_unnormalized = [](std::span<const double> x) {
        double r = 0.0;
        for (double v : x) r += v * v;
        return -0.5 * r;
    };
    eq.gradient_log = [](std::span<const double> x, std::span<double> g) {
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = -x[i];
    };
    eq.log_Z = 0.5 * double(d) * std::log(2.0 * std::numbers::pi);
    return eq;
}

std::shared_ptr<const DensityEstimate> gaussian_estimate(std::size_t d, unsigned M) {
    BasisSpec spec;
    spec.families.assign(d, PolyFamily::hermite());
    spec.order = M;
    std::vector<double> c(basis_size(unsigned(d), M), 0.0);
    c[0] = 1.0;
    return std::make_shared<const DensityEstimate>(DensityEstimate::from_coefficients(spec, c));
}

SampleSeries triple_well_series(std::size_t n, std::uint64_t seed) {
    SimulationOptions o;
    o.subsample = 5;
    o.n_steps = o.burn_in + o.subsample * n;
    o.seed = seed;
    return simulate_gradient_system(TripleWell{}, o);
}

SampleSeries langevin_series(std::size_t n, std::uint64_t seed) {
    SimulationOptions o;
    o.subsample = 10;
    o.n_steps = o.burn_in + o.subsample * n;
    o.seed = seed;
    return simulate_langevin(Morse{}, o);
}

}  // namespace

TEST(ConjugateAnalytic, TripleWellIsScaledPotentialGradient) {
    TripleWell tw;
    const auto field = conjugate_analytic(analytic_equilibrium(tw), Forcing::ones(2));
    EXPECT_EQ(field.provenance(), FieldProvenance::Analytic);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 3.0);
    for (int t = 0; t < 50; ++t) {
        const double x[2] = {u(rng), u(rng)};
        double g[2];
        tw.gradient(x, g);
        const auto b = field.evaluate(x);
        EXPECT_DOUBLE_EQ(b[0], g[0] / tw.kBT);
        EXPECT_DOUBLE_EQ(b[1], g[1] / tw.kBT);
    }
}

TEST(ConjugateAnalytic, LangevinComponents) {
    Morse m;
    const auto field = conjugate_analytic(analytic_equilibrium(m), Forcing::ones(2));
    for (double x : {-0.05, 0.0, 0.1, 0.4})
        for (double v : {-2.0, 0.5}) {
            const double p[2] = {x, v};
            const auto b = field.evaluate(p);
            EXPECT_DOUBLE_EQ(b[0], m.derivative(x) / m.kBT);
            EXPECT_DOUBLE_EQ(b[1], v / m.kBT);
        }
}

TEST(ConjugateAnalytic, SpatiallyVaryingForcing) {
    // c(x) = (x_1, 2): B_1 = -(x_1 d_1 log p + 1) = x_1^2 - 1 for N(0, I).
    Forcing c;
    c.dim = 2;
    c.value = [](std::span<const double> x, std::span<double> out) {
        out[0] = x[0];
        out[1] = 2.0;
    };
    c.diagonal_derivative = [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
    };
    const auto field = conjugate_analytic(standard_gaussian(2), c);
    const double x[2] = {1.5, -0.25};
    const auto b = field.evaluate(x);
    EXPECT_DOUBLE_EQ(b[0], 1.5 * 1.5 - 1.0);
    EXPECT_DOUBLE_EQ(b[1], -0.5);
    EXPECT_THROW(conjugate_analytic(standard_gaussian(2), Forcing::ones(3)), ParameterError);
}

TEST(ConjugateEmbedded, GaussianEstimateGivesIdentityField) {
    const auto analytic = conjugate_analytic(standard_gaussian(2), Forcing::ones(2));
    const auto embedded = conjugate_embedded(gaussian_estimate(2, 3), Forcing::ones(2), 1e-300);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        const double x[2] = {g(rng), g(rng)};
        const auto b = embedded.evaluate(x);
        EXPECT_EQ(b[0], x[0]);
        EXPECT_EQ(b[1], x[1]);
        EXPECT_EQ(analytic.evaluate(x), b);
    }
}

TEST(ConjugateEmbedded, GaussianClosureIsBitIdentical) {
    const auto s = iid_normal(20000, 2, 3);
    const auto ta = tabulate_field(conjugate_analytic(standard_gaussian(2), Forcing::ones(2)), s);
    const auto te = tabulate_field(conjugate_embedded(gaussian_estimate(2, 4), Forcing::ones(2), 1e-300), s);
    EXPECT_EQ(ta.values, te.values);
    ResponseOptions o;
    o.max_lag = 20;
    const auto ra = response_mc(s, Observable::identity(2), ta, o);
    const auto re = response_mc(s, Observable::identity(2), te, o);
    EXPECT_EQ(ra.values, re.values);
    EXPECT_EQ(ra.std_errors, re.std_errors);
}

TEST(ConjugateEmbedded, RejectedPointsAreSignalled) {
    const auto field = conjugate_embedded(gaussian_estimate(2, 2), Forcing::ones(2), 1e-3);
    const double inside[2] = {0.0, 0.0}, outside[2] = {4.0, 4.0};
    EXPECT_TRUE(field.try_evaluate(inside).has_value());
    EXPECT_FALSE(field.try_evaluate(outside).has_value());
    EXPECT_THROW(field.evaluate(outside), RejectedPointError);
    EXPECT_EQ(field.delta(), 1e-3);

    const auto neg = std::make_shared<const DensityEstimate>(
        DensityEstimate::from_coefficients(gaussian_estimate(1, 2)->spec, {1.0, 0.0, -1.0}));
    const auto f1 = conjugate_embedded(neg, Forcing::ones(1), 1e-7);
    const double tail = 3.0;
    EXPECT_THROW(f1.evaluate(std::span<const double>(&tail, 1)), RejectedPointError);

    EXPECT_THROW(conjugate_embedded(gaussian_estimate(2, 2), Forcing::ones(2), 0.0), ParameterError);
    EXPECT_THROW(conjugate_embedded(nullptr, Forcing::ones(2), 1e-7), ParameterError);
}

TEST(ConjugateEmbedded, LangevinVelocityComponentIsExactUpToRounding) {
    const auto s = langevin_series(20000, 4);
    BasisSpec spec;
    spec.families = {PolyFamily::laguerre(1), PolyFamily::hermite()};
    spec.shift = default_shift(spec.families, s);
    spec.order = 40;
    spec.axis_order = {kMaxDegree, 0};
    auto est = std::make_shared<DensityEstimate>(fit_embedding(s, spec));
    const auto sel = select_delta(*est, s);
    const auto field = conjugate_embedded(est, Forcing::ones(2), sel.delta);
    const auto table = tabulate_field(field, s);
    for (std::size_t n = 0; n < s.size(); ++n) {
        if (table.mask[n]) continue;
        EXPECT_NEAR(table.values[2 * n + 1], s.data[2 * n + 1], 1e-12 * (1.0 + std::abs(s.data[2 * n + 1])));
    }
}

TEST(ConjugateKde, MatchesLogGradient) {
    const auto s = iid_normal(300, 2, 5);
    auto kde = std::make_shared<const KdeEstimate>(fit_kde(s));
    const auto field = conjugate_kde(kde, Forcing::ones(2));
    EXPECT_EQ(field.provenance(), FieldProvenance::Kde);
    const double x[2] = {0.3, -0.7};
    const auto g = eval_kde_gradient(*kde, x);
    const double p = eval_kde(*kde, x);
    const auto b = field.evaluate(x);
    EXPECT_NEAR(b[0], -g[0] / p, 1e-10);
    EXPECT_NEAR(b[1], -g[1] / p, 1e-10);
}

TEST(ResponseMc, SingleSampleOuterProduct) {
    SampleSeries s;
    s.dim = 2;
    s.dt_effective = 0.5;
    s.data = {2.0, -3.0};
    FieldTable t;
    t.dim = 2;
    t.values = {0.5, 4.0};
    t.mask = {0};
    const auto c = response_mc(s, Observable::identity(2), t, {});
    ASSERT_EQ(c.n_lags(), 1u);
    EXPECT_EQ(c.at(0, 0, 0), 1.0);
    EXPECT_EQ(c.at(0, 0, 1), 8.0);
    EXPECT_EQ(c.at(0, 1, 0), -1.5);
    EXPECT_EQ(c.at(0, 1, 1), -12.0);
    EXPECT_TRUE(std::isnan(c.err(0, 0, 0)));
    EXPECT_EQ(c.pair_counts[0], 1u);
}

TEST(ResponseMc, DropsPairsWithRejectedOrigin) {
    const auto s = iid_normal(1000, 2, 6);
    FieldTable t;
    t.dim = 2;
    t.values.resize(2000);
    t.mask.resize(1000);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (std::size_t n = 0; n < 1000; ++n) {
        t.mask[n] = (n % 7 == 3) ? 1 : 0;
        t.n_rejected += t.mask[n];
        t.values[2 * n] = t.mask[n] ? 0.0 : g(rng);
        t.values[2 * n + 1] = t.mask[n] ? 0.0 : g(rng);
    }
    ResponseOptions o;
    o.max_lag = 9;
    o.lag_stride = 3;
    o.block_length = 64;
    const auto c = response_mc(s, Observable::identity(2), t, o);
    EXPECT_EQ(c.lags, (std::vector<std::size_t>{0, 3, 6, 9}));
    EXPECT_DOUBLE_EQ(c.lag_time(2), 0.06);
    EXPECT_EQ(c.block_length, 64u);
    EXPECT_NEAR(c.retained_fraction, 1.0 - double(t.n_rejected) / 1000.0, 1e-15);
    for (std::size_t k = 0; k < c.n_lags(); ++k) {
        const std::size_t lag = c.lags[k];
        long double sum[4] = {0, 0, 0, 0};
        std::size_t cnt = 0;
        for (std::size_t n = 0; n + lag < 1000; ++n) {
            if (t.mask[n]) continue;
            ++cnt;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) sum[i * 2 + j] += s.data[2 * (n + lag) + i] * t.values[2 * n + j];
        }
        EXPECT_EQ(c.pair_counts[k], cnt);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                EXPECT_NEAR(c.at(k, i, j), double(sum[i * 2 + j] / cnt), 1e-14);
                EXPECT_GT(c.err(k, i, j), 0.0);
            }
    }
}

TEST(ResponseMc, ArgumentErrors) {
    const auto s = iid_normal(10, 1, 8);
    FieldTable t;
    t.dim = 1;
    t.values.assign(10, 1.0);
    t.mask.assign(10, 0);
    ResponseOptions o;
    o.max_lag = 10;
    EXPECT_THROW(response_mc(s, Observable::identity(1), t, o), ParameterError);
    o.max_lag = 2;
    o.lag_stride = 0;
    EXPECT_THROW(response_mc(s, Observable::identity(1), t, o), ParameterError);
    o.lag_stride = 1;
    t.mask.assign(9, 0);
    EXPECT_THROW(response_mc(s, Observable::identity(1), t, o), ParameterError);
    t.mask.assign(10, 1);
    EXPECT_THROW(response_mc(s, Observable::identity(1), t, o), NumericError);
}

TEST(ResponseMc, DefaultBlockLength) {
    EXPECT_EQ(default_block_length(1), 1u);
    EXPECT_EQ(default_block_length(1000000), 1024u);
    EXPECT_EQ(default_block_length(1 << 20), 1024u);
    EXPECT_EQ(default_block_length((1 << 20) + 1), 2048u);
}

TEST(Normalize, Properties) {
    const auto s = iid_normal(5000, 2, 9);
    const auto t = tabulate_field(conjugate_analytic(standard_gaussian(2), Forcing::ones(2)), s);
    ResponseOptions o;
    o.max_lag = 5;
    const auto raw = response_mc(s, Observable::identity(2), t, o);
    const auto once = normalize_diagonal(raw);
    const auto twice = normalize_diagonal(once);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(once.at(0, i, i), 1.0);
        EXPECT_EQ(once.divisors[i], raw.at(0, i, i));
        EXPECT_EQ(twice.divisors[i], raw.at(0, i, i));
    }
    for (std::size_t k = 0; k < raw.n_lags(); ++k) {
        EXPECT_EQ(once.at(k, 0, 1), raw.at(k, 0, 1));
        EXPECT_EQ(once.at(k, 1, 0), raw.at(k, 1, 0));
        for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(twice.at(k, i, i), once.at(k, i, i));
    }
    auto zero = raw;
    zero.values[0] = 0.0;
    EXPECT_THROW(normalize_diagonal(zero), NumericError);
}

TEST(SecondMoment, TripleWellIdentityObservable) {
    const auto s = triple_well_series(1000000, 10);
    const auto eq = analytic_equilibrium(TripleWell{});
    const auto m = second_moment_check(s, 2, [](std::span<const double> x, std::span<double> y) {
        y[0] = x[0];
        y[1] = x[1];
    });
    EXPECT_NEAR(m[0], eq.expectation([](std::span<const double> x) { return x[0] * x[0]; }), 0.05 * m[0]);
    EXPECT_NEAR(m[1], eq.expectation([](std::span<const double> x) { return x[1] * x[1]; }), 0.05 * m[1]);
    const auto z = second_moment_check(s, 1, [](std::span<const double>, std::span<double> y) { y[0] = 0.0; });
    EXPECT_EQ(z[0], 0.0);
}

TEST(SecondMoment, LangevinConjugateField) {
    Morse mo;
    const auto s = langevin_series(1000000, 11);
    const auto eq = analytic_equilibrium(mo);
    const auto field = conjugate_analytic(eq, Forcing::ones(2));
    auto worker = field.make_worker();
    const auto m = second_moment_check(s, 2, [&](std::span<const double> x, std::span<double> y) { worker(x, y); });
    const double kT2 = mo.kBT * mo.kBT;
    const double eu = eq.expectation([&](std::span<const double> x) { return mo.derivative(x[0]) * mo.derivative(x[0]); });
    EXPECT_NEAR(m[0], eu / kT2, 0.05 * m[0]);
    EXPECT_NEAR(m[1], mo.kBT / kT2, 0.03);
}

TEST(SecondMoment, NonFiniteValuesListSamples) {
    SampleSeries s;
    s.dim = 1;
    s.data = {1.0, 0.0, 2.0, 0.0};
    try {
        second_moment_check(s, 1, [](std::span<const double> x, std::span<double> y) { y[0] = 1.0 / x[0]; });
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("1, 3"), std::string::npos) << e.what();
    }
}

TEST(Invariants, TripleWellEquipartitionAndBounds) {
    const auto s = triple_well_series(1000000, 12);
    const auto table = tabulate_field(conjugate_analytic(analytic_equilibrium(TripleWell{}), Forcing::ones(2)), s);
    ResponseOptions o;
    o.max_lag = 400;
    o.lag_stride = 20;
    const auto c = response_mc(s, Observable::identity(2), table, o);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            EXPECT_NEAR(c.at(0, i, j), i == j ? 1.0 : 0.0, 3.0 * c.err(0, i, j)) << i << j;
    EXPECT_LE(std::abs(c.at(0, 0, 1) - c.at(0, 1, 0)), 3.0 * std::hypot(c.err(0, 0, 1), c.err(0, 1, 0)));

    // Cauchy-Schwarz on the same pairs: |mean a b| <= sqrt(mean a^2) sqrt(mean b^2).
    const std::size_t N = s.size();
    for (std::size_t k = 0; k < c.n_lags(); ++k) {
        const std::size_t lag = c.lags[k];
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                double a2 = 0.0, b2 = 0.0;
                for (std::size_t n = 0; n + lag < N; ++n) {
                    a2 += s.data[2 * (n + lag) + i] * s.data[2 * (n + lag) + i];
                    b2 += table.values[2 * n + j] * table.values[2 * n + j];
                }
                const double cnt = double(N - lag);
                EXPECT_LE(std::abs(c.at(k, i, j)), std::sqrt(a2 / cnt) * std::sqrt(b2 / cnt) * (1.0 + 1e-12));
            }
    }
}

TEST(Invariants, MaskMatchesSelection) {
    const auto s = triple_well_series(50000, 13);
    BasisSpec spec;
    spec.families = {PolyFamily::hermite(), PolyFamily::hermite()};
    spec.order = 30;
    auto est = std::make_shared<DensityEstimate>(fit_embedding(s, spec));
    const auto sel = select_delta(*est, s);
    const auto table = tabulate_field(conjugate_embedded(est, Forcing::ones(2), sel.delta), s);
    EXPECT_EQ(table.mask, sel.mask);
    EXPECT_NEAR(table.retained_fraction(), 1.0 - sel.rejection_ratio, 1.0 / double(s.size()));
    ResponseOptions o;
    o.max_lag = 4;
    EXPECT_NEAR(response_mc(s, Observable::identity(2), table, o).retained_fraction, 1.0 - sel.rejection_ratio,
                1.0 / double(s.size()));
}

TEST(Determinism, ResponseIndependentOfThreadCount) {
    const auto s = triple_well_series(30000, 14);
    const auto field = conjugate_analytic(analytic_equilibrium(TripleWell{}), Forcing::ones(2));
    ResponseOptions o;
    o.max_lag = 50;
    set_thread_count(1);
    const auto t1 = tabulate_field(field, s);
    const auto r1 = response_mc(s, Observable::identity(2), t1, o);
    for (unsigned t : {4u, 8u}) {
        set_thread_count(t);
        const auto tt = tabulate_field(field, s);
        EXPECT_EQ(tt.values, t1.values);
        const auto rt = response_mc(s, Observable::identity(2), tt, o);
        EXPECT_EQ(rt.values, r1.values);
        EXPECT_EQ(rt.std_errors, r1.std_errors);
    }
    set_thread_count(0);
}

TEST(ResponseCsv, HeaderAndGap) {
    ResponseCurve c;
    c.lags = {0, 2};
    c.dt = 0.5;
    c.dim_A = 1;
    c.dim_B = 2;
    c.values = {1.0, 0.25, 0.5, -0.125};
    c.std_errors = {0.01, 0.02, 0.03, 0.04};
    std::ostringstream os;
    write_response_csv(os, c);
    EXPECT_EQ(os.str(), "lag_time,k_11,k_12,stderr_11,stderr_12\n0,1,0.25,0.01,0.02\n1,0.5,-0.125,0.029999999999999999,0.040000000000000001\n");
    auto d = c;
    d.values = {1.5, 0.25, 0.0, 0.0};
    EXPECT_EQ(max_abs_gap(c, d, 0, 0), 0.5);
    EXPECT_EQ(max_abs_gap(c, d, 0, 1), 0.125);
    EXPECT_EQ(max_abs_gap(c, d, 0, 0, 0.5), 0.5);
    EXPECT_EQ(max_abs_gap(c, d, 0, 1, 0.5), 0.0);
    d.lags = {0, 3};
    EXPECT_THROW(max_abs_gap(c, d, 0, 0), ParameterError);
}
