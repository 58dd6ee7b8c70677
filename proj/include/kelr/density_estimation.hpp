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
 * @file density_estimation.hpp
 * @brief Kernel-embedding density estimator (coefficients, evaluation, positivity threshold,
 *        selection diagnostics, error bound) and the Gaussian KDE baseline.
 */

#ifndef KELR_DENSITY_ESTIMATION_HPP
#define KELR_DENSITY_ESTIMATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "basis.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "sde_sim.hpp"

namespace kelr {

inline constexpr double kDefaultDeltaFloor = 1e-7;
inline constexpr std::size_t kReductionBlock = 512;

/// Truncated expansion sum_m coeffs[k] Psi_{beta, m_k} with m_k in graded order.
struct DensityEstimate {
    BasisSpec spec;
    MultiIndexSet indices;
    std::vector<double> coeffs;
    double delta = 0.0;
    std::size_t n_samples = 0;

    unsigned order() const noexcept { return spec.order; }
    std::size_t dimension() const noexcept { return spec.dimension(); }

    std::size_t position(const MultiIndex& m) const {
        if (m.size() != dimension()) throw ParameterError("multi-index dimension mismatch");
        const auto s = m.l1();
        if (s > spec.order) throw ParameterError("multi-index outside the estimate's order");
        for (std::size_t k = indices.shell_begin(unsigned(s)); k < indices.shell_end(unsigned(s)); ++k) {
            auto e = indices[k];
            if (std::equal(e.begin(), e.end(), m.entries().begin())) return k;
        }
        throw ParameterError("multi-index not found");
    }
    double coeff(const MultiIndex& m) const { return coeffs[position(m)]; }

    /// Same estimate restricted to |m|_1 <= M (a prefix of the graded order).
    DensityEstimate truncated(unsigned M) const {
        if (M > spec.order) throw ParameterError("cannot truncate to a higher order");
        DensityEstimate out;
        out.spec = spec;
        out.spec.order = M;
        out.indices = MultiIndexSet(unsigned(dimension()), M, spec.axis_order);
        out.coeffs.assign(coeffs.begin(), coeffs.begin() + std::ptrdiff_t(out.indices.size()));
        out.delta = delta;
        out.n_samples = n_samples;
        return out;
    }

    /// Estimate from an explicit coefficient vector (graded order, size binomial(M+d, d)).
    static DensityEstimate from_coefficients(BasisSpec spec, std::vector<double> c) {
        spec.validate();
        DensityEstimate out;
        out.indices = MultiIndexSet(unsigned(spec.dimension()), spec.order, spec.axis_order);
        if (c.size() != out.indices.size()) throw ParameterError("coefficient count does not match basis size");
        out.spec = std::move(spec);
        out.coeffs = std::move(c);
        return out;
    }
};

/// Per-coordinate shift for Laguerre axes, -floor(min sample); Hermite axes get 0.
inline std::vector<double> default_shift(const std::vector<PolyFamily>& families, const SampleSeries& s) {
    if (families.size() != s.dim) throw ParameterError("basis dimension does not match samples");
    std::vector<double> shift(s.dim, 0.0);
    for (std::size_t i = 0; i < s.dim; ++i) {
        if (!families[i].is_laguerre()) continue;
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < s.size(); ++n) lo = std::min(lo, s.data[n * s.dim + i]);
        shift[i] = -std::floor(lo);
    }
    return shift;
}

namespace detail {

// Per-point polynomial tables in shifted coordinates. p holds p_n(y_i); q holds
// (p_n W_i^beta)' / W_i^beta. `zero_axis` marks a Laguerre axis sitting at y = 0 with theta > 0.
struct PointTables {
    std::size_t d = 0;
    unsigned M = 0;
    std::vector<double> p, q, scratch;
    double log_w = 0.0;
    std::size_t zero_axis = DomainError::npos;
    std::size_t zero_count = 0;

    void resize(std::size_t dim, unsigned order) {
        d = dim;
        M = order;
        p.resize(d * (M + 1));
        q.resize(d * (M + 1));
        scratch.resize(M + 2);
    }
    double P(std::size_t i, unsigned n) const { return p[i * (M + 1) + n]; }
    double Q(std::size_t i, unsigned n) const { return q[i * (M + 1) + n]; }
};

inline void fill_tables(const BasisSpec& spec, std::span<const double> x, bool gradient, PointTables& t) {
    if (x.size() != spec.dimension()) throw ParameterError("point dimension does not match estimate");
    t.log_w = 0.0;
    t.zero_axis = DomainError::npos;
    t.zero_count = 0;
    for (std::size_t i = 0; i < t.d; ++i) {
        const PolyFamily& f = spec.families[i];
        const double y = x[i] + spec.shift_at(i);
        check_domain(f, y, i);
        std::span<double> pi(t.p.data() + i * (t.M + 1), t.M + 1);
        fill_poly(f, t.M, y, pi);
        const bool at_zero = f.is_laguerre() && f.theta > 0 && y == 0.0;
        if (at_zero) {
            t.zero_axis = i;
            ++t.zero_count;
            t.log_w -= spec.beta * std::lgamma(f.theta + 1.0);
        } else {
            t.log_w += spec.beta * log_weight(f, y);
        }
        if (!gradient) continue;
        std::span<double> qi(t.q.data() + i * (t.M + 1), t.M + 1);
        eval_poly_derivative_all(f, t.M, y, qi);
        if (at_zero) {
            for (unsigned n = 0; n <= t.M; ++n) qi[n] = pi[n];
        } else {
            const double g = spec.beta * dlog_weight(f, y);
            for (unsigned n = 0; n <= t.M; ++n) qi[n] += g * pi[n];
        }
    }
}

}  // namespace detail

/// Reusable evaluator for f_{M,N} and its gradient. Not thread-safe; use one per worker.
class DensityEvaluator {
public:
    explicit DensityEvaluator(const DensityEstimate& est) : est_(est) {
        tables_.resize(est.dimension(), est.order());
        if (est.dimension() == 2) {
            const unsigned M = est.order();
            dense_.assign(std::size_t(M + 1) * (M + 1), 0.0);
            for (std::size_t k = 0; k < est.indices.size(); ++k) {
                auto m = est.indices[k];
                dense_[std::size_t(m[0]) * (M + 1) + m[1]] = est.coeffs[k];
            }
        }
    }

    const DensityEstimate& estimate() const noexcept { return est_; }

    double value(std::span<const double> x) {
        detail::fill_tables(est_.spec, x, false, tables_);
        if (tables_.zero_count > 0) return 0.0;
        return contract(false, {}) * std::exp(tables_.log_w);
    }

    /// Returns the density and writes its gradient.
    double value_and_gradient(std::span<const double> x, std::span<double> grad) {
        const std::size_t d = est_.dimension();
        if (grad.size() != d) throw ParameterError("gradient span has wrong size");
        detail::fill_tables(est_.spec, x, true, tables_);
        if (tables_.zero_count > 0) {
            const auto& f = est_.spec.families[tables_.zero_axis];
            const double tb = f.theta * est_.spec.beta;
            if (tb < 1.0)
                throw DomainError("density gradient is singular at a Laguerre boundary with theta*beta < 1",
                                  tables_.zero_axis);
            std::fill(grad.begin(), grad.end(), 0.0);
            if (tb == 1.0 && tables_.zero_count == 1) {
                grad_buf_.assign(d, 0.0);
                contract(true, grad_buf_);
                grad[tables_.zero_axis] = grad_buf_[tables_.zero_axis] * std::exp(tables_.log_w);
            }
            return 0.0;
        }
        const double s = contract(true, grad);
        const double w = std::exp(tables_.log_w);
        for (auto& g : grad) g *= w;
        return s * w;
    }

    /// Returns the density and writes grad log p. The weight factor cancels before it is
    /// applied, so Gaussian-like estimates give exact log-gradients. glog is zero where p = 0.
    double value_and_log_gradient(std::span<const double> x, std::span<double> glog) {
        if (glog.size() != est_.dimension()) throw ParameterError("gradient span has wrong size");
        detail::fill_tables(est_.spec, x, true, tables_);
        std::fill(glog.begin(), glog.end(), 0.0);
        if (tables_.zero_count > 0) return 0.0;
        const double s = contract(true, glog);
        if (s == 0.0) {
            std::fill(glog.begin(), glog.end(), 0.0);
            return 0.0;
        }
        for (auto& g : glog) g /= s;
        return s * std::exp(tables_.log_w);
    }

private:
    // Sum_m c_m prod_i P_i[m_i]; with gradient, grad_i = sum_m c_m Q_i[m_i] prod_{j != i} P_j[m_j].
    double contract(bool gradient, std::span<double> grad) {
        const auto& t = tables_;
        const std::size_t d = t.d;
        const unsigned M = t.M;
        if (d == 2) {
            double s = 0.0, g0 = 0.0, g1 = 0.0;
            for (unsigned a = 0; a <= M; ++a) {
                const double* row = dense_.data() + std::size_t(a) * (M + 1);
                const double* p1 = t.p.data() + (M + 1);
                double u = 0.0, v = 0.0;
                if (gradient) {
                    const double* q1 = t.q.data() + (M + 1);
                    for (unsigned b = 0; b + a <= M; ++b) {
                        u += row[b] * p1[b];
                        v += row[b] * q1[b];
                    }
                    g0 += t.Q(0, a) * u;
                    g1 += t.P(0, a) * v;
                } else {
                    for (unsigned b = 0; b + a <= M; ++b) u += row[b] * p1[b];
                }
                s += t.P(0, a) * u;
            }
            if (gradient) {
                grad[0] = g0;
                grad[1] = g1;
            }
            return s;
        }
        double s = 0.0;
        if (gradient) std::fill(grad.begin(), grad.end(), 0.0);
        prefix_.resize(d + 1);
        suffix_.resize(d + 1);
        for (std::size_t k = 0; k < est_.indices.size(); ++k) {
            const double c = est_.coeffs[k];
            if (c == 0.0) continue;
            auto m = est_.indices[k];
            if (!gradient) {
                double prod = c;
                for (std::size_t i = 0; i < d; ++i) prod *= t.P(i, m[i]);
                s += prod;
                continue;
            }
            prefix_[0] = 1.0;
            for (std::size_t i = 0; i < d; ++i) prefix_[i + 1] = prefix_[i] * t.P(i, m[i]);
            suffix_[d] = 1.0;
            for (std::size_t i = d; i-- > 0;) suffix_[i] = suffix_[i + 1] * t.P(i, m[i]);
            s += c * prefix_[d];
            for (std::size_t i = 0; i < d; ++i) grad[i] += c * prefix_[i] * t.Q(i, m[i]) * suffix_[i + 1];
        }
        return s;
    }

    const DensityEstimate& est_;
    detail::PointTables tables_;
    std::vector<double> dense_;
    std::vector<double> prefix_, suffix_, grad_buf_;
};

inline double eval_density(const DensityEstimate& est, std::span<const double> x) {
    DensityEvaluator ev(est);
    return ev.value(x);
}

inline std::vector<double> eval_density_gradient(const DensityEstimate& est, std::span<const double> x) {
    DensityEvaluator ev(est);
    std::vector<double> g(est.dimension());
    ev.value_and_gradient(x, g);
    return g;
}

/// f_{M,N} at every sample, computed in parallel blocks.
inline std::vector<double> eval_density_at_samples(const DensityEstimate& est, const SampleSeries& s) {
    std::vector<double> out(s.size());
    const std::size_t n_blocks = (s.size() + kReductionBlock - 1) / kReductionBlock;
    parallel_for(n_blocks, [&](std::size_t b) {
        DensityEvaluator ev(est);
        const std::size_t end = std::min(s.size(), (b + 1) * kReductionBlock);
        for (std::size_t n = b * kReductionBlock; n < end; ++n) out[n] = ev.value(s.row(n));
    });
    return out;
}

namespace detail {

inline void check_samples_in_domain(const BasisSpec& spec, const SampleSeries& s) {
    if (s.dim != spec.dimension()) throw ParameterError("basis dimension does not match samples");
    if (s.size() == 0) throw ParameterError("cannot fit an estimate to an empty series");
    for (std::size_t i = 0; i < s.dim; ++i) {
        if (!spec.families[i].is_laguerre()) continue;
        for (std::size_t n = 0; n < s.size(); ++n) {
            const double y = s.data[n * s.dim + i] + spec.shift_at(i);
            if (y < 0.0 || std::isnan(y))
                throw DomainError("sample " + std::to_string(n) + " coordinate " + std::to_string(i) +
                                      " lies outside the Laguerre domain after shift (value " +
                                      std::to_string(y) + ")",
                                  i);
        }
    }
}

}  // namespace detail

/// f_hat_m = (1/N) sum_n p_m(X_n) W^{1-beta}(X_n) for every |m|_1 <= M. Block partials of
/// 512 samples are merged pairwise in a fixed tree, so results do not depend on threads.
inline DensityEstimate fit_embedding(const SampleSeries& samples, const BasisSpec& spec) {
    spec.validate();
    detail::check_samples_in_domain(spec, samples);
    DensityEstimate est;
    est.spec = spec;
    est.indices = MultiIndexSet(unsigned(spec.dimension()), spec.order, spec.axis_order);
    est.n_samples = samples.size();
    const std::size_t d = spec.dimension();
    const unsigned M = spec.order;
    const std::size_t K = est.indices.size();
    const double power = 1.0 - spec.beta;
    const bool full_triangle = d == 2 && est.indices.is_full();

    auto sums = blocked_sum(samples.size(), K, kReductionBlock, [&](std::size_t begin, std::size_t end, std::span<double> acc) {
        detail::PointTables t;
        t.resize(d, M);
        for (std::size_t n = begin; n < end; ++n) {
            auto x = samples.row(n);
            double w = 1.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double y = x[i] + spec.shift_at(i);
                detail::fill_poly(spec.families[i], M, y, std::span<double>(t.p.data() + i * (M + 1), M + 1));
                if (power != 0.0) w *= std::exp(power * log_weight(spec.families[i], y));
            }
            if (full_triangle) {
                const double* p0 = t.p.data();
                const double* p1 = t.p.data() + (M + 1);
                for (unsigned s = 0; s <= M; ++s) {
                    double* out = acc.data() + std::size_t(s) * (s + 1) / 2;
                    for (unsigned b = 0; b <= s; ++b) out[b] += w * p0[s - b] * p1[b];
                }
            } else {
                for (std::size_t k = 0; k < K; ++k) {
                    auto m = est.indices[k];
                    double prod = w;
                    for (std::size_t i = 0; i < d; ++i) prod *= t.P(i, m[i]);
                    acc[k] += prod;
                }
            }
        }
    });
    const double inv_n = 1.0 / double(samples.size());
    for (auto& v : sums) v *= inv_n;
    // psi_0 W^0 = 1 identically, so the mean is exactly 1 regardless of rounding.
    if (spec.all_hermite() && spec.beta == 1.0) sums[0] = 1.0;
    est.coeffs = std::move(sums);
    return est;
}

// ---------------------------------------------------------------------------------------
// Positivity threshold and selection diagnostics

struct DeltaSelection {
    double delta_M = 0.0;      // min positive sample density
    double delta = 0.0;        // effective threshold max(delta_M, floor)
    std::vector<std::uint8_t> mask;  // 1 = rejected (density < delta)
    std::size_t n_rejected = 0;
    double rejection_ratio = 0.0;
};

inline DeltaSelection select_delta_from_values(std::span<const double> values, double floor = kDefaultDeltaFloor) {
    DeltaSelection out;
    double lo = std::numeric_limits<double>::infinity();
    for (double v : values)
        if (v > 0.0) lo = std::min(lo, v);
    if (!std::isfinite(lo)) throw NumericError("degenerate fit: no sample has positive estimated density");
    out.delta_M = lo;
    out.delta = std::max(lo, floor);
    out.mask.resize(values.size());
    for (std::size_t n = 0; n < values.size(); ++n) {
        out.mask[n] = values[n] < out.delta ? 1 : 0;
        out.n_rejected += out.mask[n];
    }
    out.rejection_ratio = values.empty() ? 0.0 : double(out.n_rejected) / double(values.size());
    return out;
}

inline DeltaSelection select_delta(const DensityEstimate& est, const SampleSeries& samples,
                                   double floor = kDefaultDeltaFloor) {
    const auto values = eval_density_at_samples(est, samples);
    return select_delta_from_values(values, floor);
}

struct DiagnosticsRow {
    unsigned M = 0;
    double delta_M = 0.0;  // NaN when no sample density is positive
    double delta = 0.0;
    double rejection_ratio = 0.0;
    std::size_t n_rejected = 0;
    double eta = 0.0;
};

struct SelectionDiagnostics {
    std::vector<DiagnosticsRow> rows;
    DensityEstimate fit;  // fitted once at order M_max + 1
};

/// Sweeps M over [M_min, M_max] with one fit at M_max + 1. Every sample is evaluated once:
/// per-shell partial sums give p_M for all M by accumulation, and eta_M comes from the
/// stored shell M + 1 coefficients.
inline SelectionDiagnostics diagnostics_sweep(const SampleSeries& samples, BasisSpec spec, unsigned M_min,
                                              unsigned M_max, double floor = kDefaultDeltaFloor) {
    if (M_min > M_max) throw ParameterError("M range must be ascending");
    SelectionDiagnostics out;
    spec.order = M_max + 1;
    out.fit = fit_embedding(samples, spec);
    const auto& est = out.fit;
    const std::size_t n_M = M_max - M_min + 1;
    const std::size_t d = spec.dimension();
    const unsigned K = M_max + 1;

    // Per block: (min positive, count <= 0, count < floor) for each M.
    struct Partial {
        std::vector<double> min_pos;
        std::vector<std::size_t> n_nonpos, n_below;
    };
    const std::size_t n_blocks = (samples.size() + kReductionBlock - 1) / kReductionBlock;
    std::vector<Partial> partials(n_blocks);
    parallel_for(n_blocks, [&](std::size_t b) {
        Partial& part = partials[b];
        part.min_pos.assign(n_M, std::numeric_limits<double>::infinity());
        part.n_nonpos.assign(n_M, 0);
        part.n_below.assign(n_M, 0);
        detail::PointTables t;
        t.resize(d, K);
        std::vector<double> shell(K + 1);
        const std::size_t end = std::min(samples.size(), (b + 1) * kReductionBlock);
        for (std::size_t n = b * kReductionBlock; n < end; ++n) {
            detail::fill_tables(est.spec, samples.row(n), false, t);
            std::fill(shell.begin(), shell.end(), 0.0);
            for (unsigned s = 0; s <= M_max; ++s) {
                double acc = 0.0;
                for (std::size_t k = est.indices.shell_begin(s); k < est.indices.shell_end(s); ++k) {
                    auto m = est.indices[k];
                    double prod = est.coeffs[k];
                    for (std::size_t i = 0; i < d; ++i) prod *= t.P(i, m[i]);
                    acc += prod;
                }
                shell[s] = acc;
            }
            const double w = t.zero_count > 0 ? 0.0 : std::exp(t.log_w);
            double cum = 0.0;
            for (unsigned s = 0; s <= M_max; ++s) {
                cum += shell[s];
                if (s < M_min) continue;
                const std::size_t j = s - M_min;
                const double p = cum * w;
                if (p > 0.0) part.min_pos[j] = std::min(part.min_pos[j], p);
                else ++part.n_nonpos[j];
                if (p < floor) ++part.n_below[j];
            }
        }
    });

    const double N = double(samples.size());
    for (std::size_t j = 0; j < n_M; ++j) {
        DiagnosticsRow row;
        row.M = unsigned(M_min + j);
        double lo = std::numeric_limits<double>::infinity();
        std::size_t nonpos = 0, below = 0;
        for (const auto& p : partials) {
            lo = std::min(lo, p.min_pos[j]);
            nonpos += p.n_nonpos[j];
            below += p.n_below[j];
        }
        if (std::isfinite(lo)) {
            row.delta_M = lo;
            row.delta = std::max(lo, floor);
            // Below delta_M only non-positive values exist, so either count is exact.
            row.n_rejected = lo >= floor ? nonpos : below;
        } else {
            row.delta_M = std::numeric_limits<double>::quiet_NaN();
            row.delta = floor;
            row.n_rejected = samples.size();
        }
        row.rejection_ratio = double(row.n_rejected) / N;
        double eta2 = 0.0;
        const unsigned shell = row.M + 1;
        for (std::size_t k = est.indices.shell_begin(shell); k < est.indices.shell_end(shell); ++k)
            eta2 += est.coeffs[k] * est.coeffs[k];
        row.eta = std::sqrt(eta2);
        out.rows.push_back(row);
    }
    return out;
}

/// sqrt(sum over |m|_1 = M + 1 of f_hat_m^2), read from an estimate of order >= M + 1.
inline double shell_norm(const DensityEstimate& est, unsigned M) {
    if (M + 1 > est.order()) throw ParameterError("estimate order too low for shell M + 1");
    double e = 0.0;
    for (std::size_t k = est.indices.shell_begin(M + 1); k < est.indices.shell_end(M + 1); ++k)
        e += est.coeffs[k] * est.coeffs[k];
    return std::sqrt(e);
}

// ---------------------------------------------------------------------------------------
// Kernel density estimate

enum class SigmaRule { GeometricMean, Pooled };

struct KdeEstimate {
    std::size_t dim = 0;
    std::vector<double> points;  // row-major copy of the samples
    double bandwidth = 0.0;

    std::size_t size() const noexcept { return dim == 0 ? 0 : points.size() / dim; }
};

/// Silverman bandwidth h = (4 / ((d + 2) N))^{1/(d+4)} sigma. sigma is the geometric mean
/// of per-coordinate sample standard deviations, or the standard deviation of all
/// coordinates pooled together.
inline double silverman_bandwidth(const SampleSeries& s, SigmaRule rule = SigmaRule::GeometricMean) {
    const std::size_t N = s.size();
    const std::size_t d = s.dim;
    if (N < 2) throw ParameterError("KDE bandwidth needs at least two samples");
    double sigma = 0.0;
    if (rule == SigmaRule::GeometricMean) {
        double log_sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double mean = 0.0, m2 = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double x = s.data[n * d + i];
                const double delta = x - mean;
                mean += delta / double(n + 1);
                m2 += delta * (x - mean);
            }
            const double var = m2 / double(N - 1);
            if (!(var > 0.0)) throw ParameterError("zero-variance coordinate; KDE bandwidth undefined");
            log_sum += 0.5 * std::log(var);
        }
        sigma = std::exp(log_sum / double(d));
    } else {
        double mean = 0.0, m2 = 0.0;
        for (std::size_t k = 0; k < s.data.size(); ++k) {
            const double delta = s.data[k] - mean;
            mean += delta / double(k + 1);
            m2 += delta * (s.data[k] - mean);
        }
        const double var = m2 / double(s.data.size() - 1);
        if (!(var > 0.0)) throw ParameterError("zero-variance samples; KDE bandwidth undefined");
        sigma = std::sqrt(var);
    }
    return std::pow(4.0 / (double(d + 2) * double(N)), 1.0 / double(d + 4)) * sigma;
}

inline KdeEstimate fit_kde(const SampleSeries& s, SigmaRule rule = SigmaRule::GeometricMean) {
    KdeEstimate k;
    k.bandwidth = silverman_bandwidth(s, rule);
    k.dim = s.dim;
    k.points = s.data;
    return k;
}

/// (1 / (N h^d)) sum_n K((x - X_n) / h) with the standard Gaussian K.
inline double eval_kde(const KdeEstimate& k, std::span<const double> x) {
    if (x.size() != k.dim) throw ParameterError("KDE point dimension mismatch");
    const double inv_h = 1.0 / k.bandwidth;
    double sum = 0.0;
    for (std::size_t n = 0; n < k.size(); ++n) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < k.dim; ++i) {
            const double u = (x[i] - k.points[n * k.dim + i]) * inv_h;
            r2 += u * u;
        }
        sum += std::exp(-0.5 * r2);
    }
    const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * double(k.dim)) * std::pow(inv_h, double(k.dim));
    return norm * sum / double(k.size());
}

inline std::vector<double> eval_kde_gradient(const KdeEstimate& k, std::span<const double> x) {
    if (x.size() != k.dim) throw ParameterError("KDE point dimension mismatch");
    const double inv_h = 1.0 / k.bandwidth;
    std::vector<double> g(k.dim, 0.0), u(k.dim);
    for (std::size_t n = 0; n < k.size(); ++n) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < k.dim; ++i) {
            u[i] = (x[i] - k.points[n * k.dim + i]) * inv_h;
            r2 += u[i] * u[i];
        }
        const double e = std::exp(-0.5 * r2);
        for (std::size_t i = 0; i < k.dim; ++i) g[i] -= e * u[i] * inv_h;
    }
    const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * double(k.dim)) * std::pow(inv_h, double(k.dim));
    for (auto& v : g) v *= norm / double(k.size());
    return g;
}

/// grad log p_kde(x), stable in the tails: kernel exponents are shifted by their minimum
/// and terms more than 50 below it are skipped. `scratch` must hold N entries.
inline void eval_kde_log_gradient(const KdeEstimate& k, std::span<const double> x, std::span<double> grad,
                                  std::vector<double>& scratch) {
    const std::size_t N = k.size();
    const std::size_t d = k.dim;
    const double inv_h = 1.0 / k.bandwidth;
    scratch.resize(N);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < N; ++n) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double u = (x[i] - k.points[n * d + i]) * inv_h;
            r2 += u * u;
        }
        scratch[n] = 0.5 * r2;
        lo = std::min(lo, scratch[n]);
    }
    double wsum = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const double a = scratch[n] - lo;
        if (a > 50.0) continue;
        const double w = std::exp(-a);
        wsum += w;
        for (std::size_t i = 0; i < d; ++i) grad[i] -= w * (x[i] - k.points[n * d + i]);
    }
    const double scale = inv_h * inv_h / wsum;
    for (auto& g : grad) g *= scale;
}

// ---------------------------------------------------------------------------------------
// Error bound and auxiliary statistics

struct ErrorBoundArgs {
    double N = 0;
    unsigned M = 0;
    unsigned d = 1;
    double rho = 0.5;
    double beta = 1.0;
    double norm_H = 1.0;
    double C_eps = 0.0;
    bool iid = true;
    bool enforce_hypothesis = true;  // check beta in [1/2, 1/(1+rho)]
};

/// Upper bound on E ||f - f_{M,N}||^2 in L^2(W^{1-2 beta}):
///   (1/N) [C_f (M+1)^d + 24 C_eps C_f^{1/2} M^{d-1} (5/2)^{M+3}] + rho^{M+1} ||f||_H^2,
/// C_f = (2 pi)^{(beta-1) d/2} (1 - rho^2)^{-d/4} ||f||_H. The i.i.d. form drops the middle term.
inline double error_bound(const ErrorBoundArgs& a) {
    if (!(a.N > 0)) throw ParameterError("error bound needs N > 0");
    if (a.d == 0) throw ParameterError("error bound needs d >= 1");
    if (!(a.rho > 0.0 && a.rho < 1.0)) throw ParameterError("error bound needs rho in (0, 1)");
    if (!(a.norm_H >= 0.0)) throw ParameterError("norm_H must be non-negative");
    if (a.beta < 0.5) throw ParameterError("error bound hypothesis violated: beta >= 1/2 required");
    if (a.enforce_hypothesis && a.beta > 1.0 / (1.0 + a.rho))
        throw ParameterError("error bound hypothesis violated: beta <= 1/(1+rho) required");
    if (!a.iid && double(a.d) > 1.5 * a.M + 1.0)
        throw ParameterError("error bound hypothesis violated: d <= 3M/2 + 1 required for dependent samples");
    const double log_cf = (a.beta - 1.0) * 0.5 * a.d * std::log(2.0 * std::numbers::pi) -
                          0.25 * a.d * std::log1p(-a.rho * a.rho) + std::log(a.norm_H);
    const double C_f = std::exp(log_cf);
    double estimation = C_f * std::pow(double(a.M) + 1.0, double(a.d));
    if (!a.iid && a.C_eps > 0.0 && a.M > 0) {
        const double log_cov = std::log(24.0 * a.C_eps) + 0.5 * log_cf + (a.d - 1.0) * std::log(double(a.M)) +
                               (a.M + 3.0) * std::log(2.5);
        estimation += std::exp(log_cov);
    }
    return estimation / a.N + std::pow(a.rho, a.M + 1.0) * a.norm_H * a.norm_H;
}

/// Sample excess kurtosis per coordinate (m4 / m2^2 - 3).
inline std::vector<double> excess_kurtosis(const SampleSeries& s) {
    std::vector<double> out(s.dim);
    const double N = double(s.size());
    for (std::size_t i = 0; i < s.dim; ++i) {
        double mean = 0.0;
        for (std::size_t n = 0; n < s.size(); ++n) mean += s.data[n * s.dim + i];
        mean /= N;
        double m2 = 0.0, m4 = 0.0;
        for (std::size_t n = 0; n < s.size(); ++n) {
            const double c = s.data[n * s.dim + i] - mean;
            m2 += c * c;
            m4 += c * c * c * c;
        }
        m2 /= N;
        m4 /= N;
        out[i] = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Persistence

inline constexpr const char* kEstimateHeader = "kelr-density-estimate 1";

namespace detail {
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

inline void write_estimate(std::ostream& os, const DensityEstimate& est) {
    const std::size_t d = est.dimension();
    os << kEstimateHeader << '\n';
    os << "dimension " << d << '\n';
    os << "families";
    for (const auto& f : est.spec.families) os << ' ' << (f.is_hermite() ? std::string("hermite") : "laguerre:" + std::to_string(f.theta));
    os << '\n';
    os << "beta " << detail::fmt17(est.spec.beta) << '\n';
    os << "rho " << detail::fmt17(est.spec.rho) << '\n';
    os << "order " << est.spec.order << '\n';
    os << "shift";
    for (std::size_t i = 0; i < d; ++i) os << ' ' << detail::fmt17(est.spec.shift_at(i));
    os << '\n';
    if (!est.spec.axis_order.empty()) {
        os << "axis_order";
        for (unsigned c : est.spec.axis_order) os << ' ' << c;
        os << '\n';
    }
    os << "coefficients " << est.coeffs.size() << '\n';
    for (std::size_t k = 0; k < est.coeffs.size(); ++k) {
        auto m = est.indices[k];
        for (std::size_t i = 0; i < d; ++i) os << (i ? " " : "") << m[i];
        os << ", " << detail::fmt17(est.coeffs[k]) << '\n';
    }
    os << "delta " << detail::fmt17(est.delta) << '\n';
    os << "n_samples " << est.n_samples << '\n';
}

inline void write_estimate(const std::string& path, const DensityEstimate& est) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_estimate(os, est);
    if (!os) throw IoError("write failed for " + path);
}

inline DensityEstimate read_estimate(std::istream& is) {
    auto fail = [](const std::string& what) -> IoError { return IoError("malformed estimate file: " + what); };
    std::string line, key;
    if (!std::getline(is, line) || line != kEstimateHeader) throw fail("unknown header");
    auto expect = [&](const char* name) {
        if (!(is >> key) || key != name) throw fail(std::string("expected '") + name + "'");
    };
    std::size_t d = 0;
    expect("dimension");
    is >> d;
    if (d == 0 || d > kMaxDimension) throw fail("dimension");
    BasisSpec spec;
    expect("families");
    for (std::size_t i = 0; i < d; ++i) {
        std::string f;
        is >> f;
        if (f == "hermite") spec.families.push_back(PolyFamily::hermite());
        else if (f.rfind("laguerre:", 0) == 0) spec.families.push_back(PolyFamily::laguerre(unsigned(std::stoul(f.substr(9)))));
        else throw fail("family '" + f + "'");
    }
    expect("beta");
    is >> spec.beta;
    expect("rho");
    is >> spec.rho;
    expect("order");
    is >> spec.order;
    expect("shift");
    spec.shift.resize(d);
    for (auto& v : spec.shift) is >> v;
    if (!(is >> key)) throw fail("expected 'coefficients'");
    if (key == "axis_order") {
        spec.axis_order.resize(d);
        for (auto& c : spec.axis_order) is >> c;
        if (!(is >> key)) throw fail("expected 'coefficients'");
    }
    if (key != "coefficients") throw fail("expected 'coefficients'");
    std::size_t K = 0;
    is >> K;
    if (!is) throw fail("header fields");
    auto est = DensityEstimate{};
    est.spec = spec;
    est.spec.validate();
    est.indices = MultiIndexSet(unsigned(d), spec.order, spec.axis_order);
    if (K != est.indices.size()) throw fail("coefficient count");
    est.coeffs.resize(K);
    std::getline(is, line);
    for (std::size_t k = 0; k < K; ++k) {
        if (!std::getline(is, line)) throw fail("truncated coefficient table");
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw fail("coefficient line " + std::to_string(k));
        std::istringstream ms(line.substr(0, comma));
        auto m = est.indices[k];
        for (std::size_t i = 0; i < d; ++i) {
            unsigned v = 0;
            if (!(ms >> v) || v != m[i]) throw fail("multi-index order at line " + std::to_string(k));
        }
        est.coeffs[k] = std::stod(line.substr(comma + 1));
    }
    expect("delta");
    is >> est.delta;
    expect("n_samples");
    is >> est.n_samples;
    if (!is) throw fail("trailer");
    return est;
}

inline DensityEstimate read_estimate(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    return read_estimate(is);
}

}  // namespace kelr

#endif  // KELR_DENSITY_ESTIMATION_HPP
