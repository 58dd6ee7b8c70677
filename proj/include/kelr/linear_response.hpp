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

/**
 * @file linear_response.hpp
 * @brief Conjugate fields B = -div(c p)/p from analytic, embedded or KDE densities, and the
 *        masked Monte-Carlo estimator of the lag-correlation response E[A(X_s) (x) B(X_0)].
 */

#ifndef KELR_LINEAR_RESPONSE_HPP
#define KELR_LINEAR_RESPONSE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "density_estimation.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "sde_sim.hpp"

namespace kelr {

/// Componentwise forcing c_i(x) together with the diagonal derivatives d c_i / d x_i.
struct Forcing {
    std::size_t dim = 0;
    std::function<void(std::span<const double>, std::span<double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> diagonal_derivative;

    static Forcing constant(std::vector<double> c) {
        Forcing f;
        f.dim = c.size();
        f.value = [c](std::span<const double>, std::span<double> out) { std::copy(c.begin(), c.end(), out.begin()); };
        f.diagonal_derivative = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
        return f;
    }
    static Forcing ones(std::size_t d) { return constant(std::vector<double>(d, 1.0)); }
};

/// Observable A: R^d -> R^{d_A}.
struct Observable {
    std::size_t dim_in = 0;
    std::size_t dim_out = 0;
    std::function<void(std::span<const double>, std::span<double>)> fn;

    static Observable identity(std::size_t d) {
        return {d, d, [](std::span<const double> x, std::span<double> out) { std::copy(x.begin(), x.end(), out.begin()); }};
    }
};

enum class FieldProvenance { Analytic, Embedded, Kde };

inline const char* to_string(FieldProvenance p) {
    switch (p) {
        case FieldProvenance::Analytic: return "analytic";
        case FieldProvenance::Embedded: return "embedding";
        case FieldProvenance::Kde: return "kde";
    }
    return "?";
}

/// B_i = -(c_i d_i log p + d_i c_i). Evaluation goes through per-thread workers that own
/// their scratch space; a worker returns false at points outside the retained domain.
class ConjugateField {
public:
    using Worker = std::function<bool(std::span<const double>, std::span<double>)>;

    ConjugateField(std::size_t dim, FieldProvenance provenance, std::function<Worker()> factory, double delta = 0.0)
        : dim_(dim), provenance_(provenance), factory_(std::move(factory)), delta_(delta) {}

    std::size_t dimension() const noexcept { return dim_; }
    FieldProvenance provenance() const noexcept { return provenance_; }
    double delta() const noexcept { return delta_; }
    Worker make_worker() const { return factory_(); }

    std::optional<std::vector<double>> try_evaluate(std::span<const double> x) const {
        std::vector<double> b(dim_);
        if (!factory_()(x, b)) return std::nullopt;
        return b;
    }

    /// Throws RejectedPointError where the density estimate is below delta.
    std::vector<double> evaluate(std::span<const double> x) const {
        auto b = try_evaluate(x);
        if (!b) throw RejectedPointError("conjugate field requested at a rejected point (density below delta)");
        return *b;
    }

private:
    std::size_t dim_;
    FieldProvenance provenance_;
    std::function<Worker()> factory_;
    double delta_;
};

namespace detail {
inline void check_forcing(const Forcing& c, std::size_t d) {
    if (c.dim != d || !c.value || !c.diagonal_derivative) throw ParameterError("forcing dimension does not match the density");
}
}  // namespace detail

inline ConjugateField conjugate_analytic(const EquilibriumDensity& eq, const Forcing& c) {
    detail::check_forcing(c, eq.dim);
    auto grad = eq.gradient_log;
    const std::size_t d = eq.dim;
    return ConjugateField(d, FieldProvenance::Analytic, [grad, c, d] {
        auto g = std::make_shared<std::vector<double>>(d);
        auto cv = std::make_shared<std::vector<double>>(d);
        auto dc = std::make_shared<std::vector<double>>(d);
        return ConjugateField::Worker([grad, c, d, g, cv, dc](std::span<const double> x, std::span<double> b) {
            grad(x, *g);
            c.value(x, *cv);
            c.diagonal_derivative(x, *dc);
            for (std::size_t i = 0; i < d; ++i) b[i] = -((*cv)[i] * (*g)[i] + (*dc)[i]);
            return true;
        });
    });
}

/// B_hat_i = -(c_i d_i p_M + d_i c_i p_M) / p_M on {p_M >= delta}; rejected elsewhere.
inline ConjugateField conjugate_embedded(std::shared_ptr<const DensityEstimate> est, const Forcing& c, double delta) {
    if (!est) throw ParameterError("null density estimate");
    if (!(delta > 0.0)) throw ParameterError("embedded conjugate field needs delta > 0");
    const std::size_t d = est->dimension();
    detail::check_forcing(c, d);
    return ConjugateField(
        d, FieldProvenance::Embedded,
        [est, c, d, delta] {
            struct State {
                DensityEvaluator ev;
                std::vector<double> g, cv, dc;
                explicit State(const DensityEstimate& e, std::size_t dim) : ev(e), g(dim), cv(dim), dc(dim) {}
            };
            auto st = std::make_shared<State>(*est, d);
            return ConjugateField::Worker([est, c, d, delta, st](std::span<const double> x, std::span<double> b) {
                const double p = st->ev.value_and_log_gradient(x, st->g);
                if (!(p >= delta)) return false;
                c.value(x, st->cv);
                c.diagonal_derivative(x, st->dc);
                for (std::size_t i = 0; i < d; ++i) b[i] = -(st->cv[i] * st->g[i] + st->dc[i]);
                return true;
            });
        },
        delta);
}

inline ConjugateField conjugate_kde(std::shared_ptr<const KdeEstimate> kde, const Forcing& c) {
    if (!kde) throw ParameterError("null KDE estimate");
    const std::size_t d = kde->dim;
    detail::check_forcing(c, d);
    return ConjugateField(d, FieldProvenance::Kde, [kde, c, d] {
        auto scratch = std::make_shared<std::vector<double>>();
        auto g = std::make_shared<std::vector<double>>(d);
        auto cv = std::make_shared<std::vector<double>>(d);
        auto dc = std::make_shared<std::vector<double>>(d);
        return ConjugateField::Worker([kde, c, d, scratch, g, cv, dc](std::span<const double> x, std::span<double> b) {
            eval_kde_log_gradient(*kde, x, *g, *scratch);
            c.value(x, *cv);
            c.diagonal_derivative(x, *dc);
            for (std::size_t i = 0; i < d; ++i) b[i] = -((*cv)[i] * (*g)[i] + (*dc)[i]);
            return true;
        });
    });
}

/// B evaluated once per sample: N x d values plus the rejection mask (1 = rejected).
struct FieldTable {
    std::size_t dim = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
    std::size_t n_rejected = 0;

    std::size_t size() const noexcept { return mask.size(); }
    double retained_fraction() const { return mask.empty() ? 0.0 : 1.0 - double(n_rejected) / double(mask.size()); }
};

inline FieldTable tabulate_field(const ConjugateField& field, const SampleSeries& s) {
    if (s.dim != field.dimension()) throw ParameterError("field dimension does not match samples");
    FieldTable t;
    t.dim = s.dim;
    t.values.assign(s.size() * s.dim, 0.0);
    t.mask.assign(s.size(), 0);
    constexpr std::size_t kBlock = 256;
    const std::size_t n_blocks = (s.size() + kBlock - 1) / kBlock;
    parallel_for(n_blocks, [&](std::size_t b) {
        auto worker = field.make_worker();
        const std::size_t end = std::min(s.size(), (b + 1) * kBlock);
        for (std::size_t n = b * kBlock; n < end; ++n) {
            std::span<double> out(t.values.data() + n * s.dim, s.dim);
            if (!worker(s.row(n), out)) {
                t.mask[n] = 1;
                std::fill(out.begin(), out.end(), 0.0);
            }
        }
    });
    for (auto m : t.mask) t.n_rejected += m;
    return t;
}

/// Matrix-valued lag correlation on a uniform lag grid; entry (i, j) of lag k is
/// values[k * dim_A * dim_B + i * dim_B + j].
struct ResponseCurve {
    std::vector<std::size_t> lags;  // in sample steps
    double dt = 0.0;
    std::size_t dim_A = 0, dim_B = 0;
    std::vector<double> values;
    std::vector<double> std_errors;
    std::vector<std::size_t> pair_counts;
    std::vector<double> divisors;  // empty unless normalized
    double retained_fraction = 1.0;
    std::size_t block_length = 0;

    std::size_t n_lags() const noexcept { return lags.size(); }
    std::size_t width() const noexcept { return dim_A * dim_B; }
    double at(std::size_t k, std::size_t i, std::size_t j) const { return values[k * width() + i * dim_B + j]; }
    double err(std::size_t k, std::size_t i, std::size_t j) const { return std_errors[k * width() + i * dim_B + j]; }
    double lag_time(std::size_t k) const { return double(lags[k]) * dt; }
};

struct ResponseOptions {
    std::size_t max_lag = 0;     // in sample steps
    std::size_t lag_stride = 1;  // evaluate every stride-th lag
    std::size_t block_length = 0;  // 0: 2^ceil(log2 sqrt(N))
};

inline std::size_t default_block_length(std::size_t N) {
    std::size_t L = 1;
    const double target = std::sqrt(double(N));
    while (double(L) < target) L <<= 1;
    return L;
}

/// k(s) = (1/|valid|) sum_{n valid, n+s < N} A(X_{n+s}) (x) B(X_n). Pairs with a rejected
/// X_n are dropped. Block averaging over consecutive n gives the standard errors.
inline ResponseCurve response_mc(const SampleSeries& samples, const Observable& A, const FieldTable& B,
                                 const ResponseOptions& opt) {
    const std::size_t N = samples.size();
    if (B.size() != N) throw ParameterError("field table does not match samples");
    if (A.dim_in != samples.dim) throw ParameterError("observable input dimension mismatch");
    if (opt.max_lag >= N) throw ParameterError("max lag must be smaller than the series length");
    if (opt.lag_stride == 0) throw ParameterError("lag stride must be >= 1");
    const std::size_t dA = A.dim_out, dB = B.dim;
    std::vector<double> a_tab(N * dA);
    for (std::size_t n = 0; n < N; ++n) {
        A.fn(samples.row(n), std::span<double>(a_tab.data() + n * dA, dA));
        for (std::size_t i = 0; i < dA; ++i)
            if (!std::isfinite(a_tab[n * dA + i]))
                throw NumericError("observable is not finite at sample " + std::to_string(n));
    }

    ResponseCurve curve;
    curve.dt = samples.dt_effective;
    curve.dim_A = dA;
    curve.dim_B = dB;
    curve.retained_fraction = B.retained_fraction();
    for (std::size_t s = 0; s <= opt.max_lag; s += opt.lag_stride) curve.lags.push_back(s);
    const std::size_t W = dA * dB;
    const std::size_t n_lags = curve.lags.size();
    curve.values.assign(n_lags * W, 0.0);
    curve.std_errors.assign(n_lags * W, 0.0);
    curve.pair_counts.assign(n_lags, 0);
    const std::size_t L = opt.block_length ? opt.block_length : default_block_length(N);
    curve.block_length = L;

    parallel_for(n_lags, [&](std::size_t k) {
        const std::size_t s = curve.lags[k];
        const std::size_t n_end = N - s;
        std::vector<double> block(W), total(W, 0.0), means_sum(W, 0.0), means_sq(W, 0.0);
        std::size_t valid = 0, n_blocks = 0;
        std::vector<std::vector<double>> block_means;
        for (std::size_t b0 = 0; b0 < n_end; b0 += L) {
            std::fill(block.begin(), block.end(), 0.0);
            std::size_t cnt = 0;
            const std::size_t b1 = std::min(n_end, b0 + L);
            for (std::size_t n = b0; n < b1; ++n) {
                if (B.mask[n]) continue;
                ++cnt;
                const double* a = a_tab.data() + (n + s) * dA;
                const double* bb = B.values.data() + n * dB;
                for (std::size_t i = 0; i < dA; ++i)
                    for (std::size_t j = 0; j < dB; ++j) block[i * dB + j] += a[i] * bb[j];
            }
            if (cnt == 0) continue;
            valid += cnt;
            ++n_blocks;
            for (std::size_t w = 0; w < W; ++w) {
                total[w] += block[w];
                block[w] /= double(cnt);
            }
            block_means.push_back(block);
        }
        curve.pair_counts[k] = valid;
        if (valid == 0) throw NumericError("no retained pairs at lag " + std::to_string(s));
        for (std::size_t w = 0; w < W; ++w) {
            const double mean = total[w] / double(valid);
            curve.values[k * W + w] = mean;
            if (n_blocks < 2) {
                curve.std_errors[k * W + w] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            double ss = 0.0, bm = 0.0;
            for (const auto& m : block_means) bm += m[w];
            bm /= double(n_blocks);
            for (const auto& m : block_means) ss += (m[w] - bm) * (m[w] - bm);
            curve.std_errors[k * W + w] = std::sqrt(ss / double(n_blocks - 1) / double(n_blocks));
        }
    });
    return curve;
}

/// Divides each diagonal series (and its stderr) by its lag-0 value. Divisors accumulate,
/// so they always equal the lag-0 diagonal of the original curve.
inline ResponseCurve normalize_diagonal(const ResponseCurve& in) {
    if (in.dim_A != in.dim_B) throw ParameterError("diagonal normalization needs a square response");
    if (in.n_lags() == 0 || in.lags.front() != 0) throw ParameterError("normalization needs a lag-0 entry");
    ResponseCurve out = in;
    const std::size_t d = in.dim_A;
    if (out.divisors.empty()) out.divisors.assign(d, 1.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double v0 = in.at(0, i, i);
        if (v0 == 0.0 || !std::isfinite(v0)) throw NumericError("lag-0 diagonal entry " + std::to_string(i) + " is zero");
        for (std::size_t k = 0; k < in.n_lags(); ++k) {
            const std::size_t w = k * in.width() + i * d + i;
            out.values[w] = in.values[w] / v0;
            out.std_errors[w] = in.std_errors[w] / std::abs(v0);
        }
        out.divisors[i] *= v0;
    }
    return out;
}

/// Empirical E[fn(X)^2] for each output component.
inline std::vector<double> second_moment_check(const SampleSeries& s, std::size_t dim_out,
                                               const std::function<void(std::span<const double>, std::span<double>)>& fn) {
    std::vector<double> v(dim_out);
    std::vector<std::size_t> bad;
    auto sums = blocked_sum(s.size(), dim_out, kReductionBlock, [&](std::size_t b, std::size_t e, std::span<double> acc) {
        std::vector<double> y(dim_out);
        for (std::size_t n = b; n < e; ++n) {
            fn(s.row(n), y);
            for (std::size_t i = 0; i < dim_out; ++i) acc[i] += y[i] * y[i];
        }
    });
    for (std::size_t i = 0; i < dim_out; ++i) {
        if (!std::isfinite(sums[i])) {
            for (std::size_t n = 0; n < s.size() && bad.size() < 10; ++n) {
                fn(s.row(n), v);
                if (!std::all_of(v.begin(), v.end(), [](double t) { return std::isfinite(t); })) bad.push_back(n);
            }
            std::string list;
            for (auto n : bad) list += (list.empty() ? "" : ", ") + std::to_string(n);
            throw NumericError("non-finite second moment; offending samples: " + list);
        }
    }
    for (std::size_t i = 0; i < dim_out; ++i) v[i] = sums[i] / double(s.size());
    return v;
}

/// Header `lag_time,k_11,...,k_{dA dB},stderr_11,...`, one row per lag, %.17g values.
inline void write_response_csv(std::ostream& os, const ResponseCurve& c) {
    os << "lag_time";
    for (const char* prefix : {"k_", "stderr_"})
        for (std::size_t i = 0; i < c.dim_A; ++i)
            for (std::size_t j = 0; j < c.dim_B; ++j) os << ',' << prefix << (i + 1) << (j + 1);
    os << '\n';
    for (std::size_t k = 0; k < c.n_lags(); ++k) {
        os << detail::fmt17(c.lag_time(k));
        for (std::size_t w = 0; w < c.width(); ++w) os << ',' << detail::fmt17(c.values[k * c.width() + w]);
        for (std::size_t w = 0; w < c.width(); ++w) os << ',' << detail::fmt17(c.std_errors[k * c.width() + w]);
        os << '\n';
    }
}

inline void write_response_csv(const std::string& path, const ResponseCurve& c) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_response_csv(os, c);
    if (!os) throw IoError("write failed for " + path);
}

/// Largest |a - b| of entry (i, j) over lags with lag_time <= t_max.
inline double max_abs_gap(const ResponseCurve& a, const ResponseCurve& b, std::size_t i, std::size_t j,
                          double t_max = std::numeric_limits<double>::infinity()) {
    if (a.lags != b.lags || a.width() != b.width()) throw ParameterError("response curves are on different grids");
    double g = 0.0;
    for (std::size_t k = 0; k < a.n_lags(); ++k)
        if (a.lag_time(k) <= t_max) g = std::max(g, std::abs(a.at(k, i, j) - b.at(k, i, j)));
    return g;
}

}  // namespace kelr

#endif  // KELR_LINEAR_RESPONSE_HPP
