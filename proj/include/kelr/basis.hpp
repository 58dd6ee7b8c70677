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
 * @file basis.hpp
 * @brief Normalized Hermite/Laguerre polynomials, their weights and tensor-product
 *        RKHS basis functions Psi_{beta,m}(x) = p_m(x) W^beta(x).
 *
 * Polynomials are evaluated with three-term recurrences written directly in terms of
 * the orthonormal polynomials, so degree ~500 evaluations never form factorials.
 *
 *  - Hermite:  psi_n orthonormal in L^2(R, W), W(x) = (2 pi)^{-1/2} exp(-x^2/2).
 *  - Laguerre: l_n^(theta) orthonormal in L^2([0,inf), G(.;theta)),
 *              G(x;theta) = x^theta e^{-x} / Gamma(theta+1). The classical sign is kept,
 *              i.e. l_n = c_n L_n^(theta) with c_n = sqrt(n! Gamma(theta+1) / Gamma(n+theta+1)).
 *
 * Multi-indices {m : |m|_1 <= M} are enumerated shell by shell (|m|_1 = 0, 1, ..., M);
 * inside a shell the order is lexicographically descending, so for d = 2 the shell
 * |m|_1 = 2 reads (2,0), (1,1), (0,2).
 */

#ifndef KELR_BASIS_HPP
#define KELR_BASIS_HPP

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace kelr {

inline constexpr unsigned kMaxDegree = 512;
inline constexpr unsigned kMaxDimension = 16;

struct PolyFamily {
    enum class Kind { Hermite, Laguerre };

    Kind kind = Kind::Hermite;
    unsigned theta = 0;  // Laguerre shape, ignored for Hermite

    static constexpr PolyFamily hermite() noexcept { return {Kind::Hermite, 0}; }
    static constexpr PolyFamily laguerre(unsigned theta) noexcept { return {Kind::Laguerre, theta}; }

    constexpr bool is_hermite() const noexcept { return kind == Kind::Hermite; }
    constexpr bool is_laguerre() const noexcept { return kind == Kind::Laguerre; }

    friend constexpr bool operator==(const PolyFamily&, const PolyFamily&) = default;
};

inline std::string to_string(const PolyFamily& f) {
    return f.is_hermite() ? std::string("hermite") : "laguerre(" + std::to_string(f.theta) + ")";
}

class MultiIndex {
public:
    MultiIndex() = default;
    explicit MultiIndex(std::vector<unsigned> entries) : entries_(std::move(entries)) {}
    MultiIndex(std::initializer_list<unsigned> entries) : entries_(entries) {}

    std::size_t size() const noexcept { return entries_.size(); }
    unsigned operator[](std::size_t i) const { return entries_[i]; }
    std::span<const unsigned> entries() const noexcept { return entries_; }

    std::uint64_t l1() const noexcept {
        std::uint64_t s = 0;
        for (unsigned e : entries_) s += e;
        return s;
    }

    friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
    friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;

private:
    std::vector<unsigned> entries_;
};

/// Tensor-product basis description. `shift` is added to every sample coordinate before
/// evaluation; stored samples are never modified.
struct BasisSpec {
    std::vector<PolyFamily> families;
    double beta = 1.0;
    double rho = 0.5;
    unsigned order = 0;
    std::vector<double> shift;
    /// Optional per-axis degree caps (m_i <= axis_order[i]); empty means total degree only.
    std::vector<unsigned> axis_order;

    std::size_t dimension() const noexcept { return families.size(); }
    double shift_at(std::size_t i) const { return shift.empty() ? 0.0 : shift[i]; }
    unsigned cap_at(std::size_t i) const { return axis_order.empty() ? kMaxDegree : axis_order[i]; }

    bool all_hermite() const noexcept {
        for (const auto& f : families)
            if (!f.is_hermite()) return false;
        return true;
    }
    bool all_laguerre() const noexcept {
        for (const auto& f : families)
            if (!f.is_laguerre()) return false;
        return true;
    }

    void validate() const {
        if (families.empty() || families.size() > kMaxDimension)
            throw ParameterError("basis dimension must be in [1, " + std::to_string(kMaxDimension) + "]");
        if (!(beta >= 0.5) || !std::isfinite(beta)) throw ParameterError("beta must be >= 1/2");
        if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("rho must lie in (0, 1)");
        if (order > kMaxDegree) throw ParameterError("order exceeds max degree " + std::to_string(kMaxDegree));
        if (!shift.empty() && shift.size() != families.size())
            throw ParameterError("shift length does not match basis dimension");
        if (!axis_order.empty() && axis_order.size() != families.size())
            throw ParameterError("axis_order length does not match basis dimension");
    }

    friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

namespace detail {

inline void check_degree(unsigned n) {
    if (n > kMaxDegree)
        throw ParameterError("polynomial degree " + std::to_string(n) + " exceeds max degree " +
                             std::to_string(kMaxDegree));
}

inline void check_domain(const PolyFamily& f, double x, std::size_t coordinate = DomainError::npos) {
    if (std::isnan(x)) throw DomainError("NaN evaluation point", coordinate);
    if (f.is_laguerre() && x < 0.0) {
        std::string msg = "Laguerre evaluation at negative point " + std::to_string(x);
        if (coordinate != DomainError::npos) msg += " (coordinate " + std::to_string(coordinate) + ")";
        throw DomainError(msg, coordinate);
    }
}

// Jacobi-matrix coefficients of the orthonormal family:
// x p_n = s (b_{n+1} p_{n+1} + b_n p_{n-1}) + a_n p_n, s = +1 Hermite, -1 Laguerre.
inline double rec_a(const PolyFamily& f, unsigned n) {
    return f.is_hermite() ? 0.0 : 2.0 * n + 1.0 + f.theta;
}
inline double rec_b(const PolyFamily& f, unsigned n) {
    return f.is_hermite() ? std::sqrt(double(n)) : std::sqrt(double(n) * (double(n) + f.theta));
}

inline void fill_poly(const PolyFamily& f, unsigned max_n, double x, std::span<double> out) {
    out[0] = 1.0;
    if (max_n == 0) return;
    const double s = f.is_hermite() ? 1.0 : -1.0;
    out[1] = s * (x - rec_a(f, 0)) / rec_b(f, 1);
    for (unsigned n = 1; n < max_n; ++n)
        out[n + 1] = (s * (x - rec_a(f, n)) * out[n] - rec_b(f, n) * out[n - 1]) / rec_b(f, n + 1);
}

}  // namespace detail

/// Values p_0(x), ..., p_{max_n}(x) written to out[0..max_n].
inline void eval_poly_all(const PolyFamily& f, unsigned max_n, double x, std::span<double> out) {
    detail::check_degree(max_n);
    detail::check_domain(f, x);
    if (out.size() < std::size_t(max_n) + 1) throw ParameterError("output span too small");
    detail::fill_poly(f, max_n, x, out);
}

inline double eval_poly(const PolyFamily& f, unsigned n, double x) {
    detail::check_degree(n);
    detail::check_domain(f, x);
    if (n == 0) return 1.0;
    const double s = f.is_hermite() ? 1.0 : -1.0;
    double prev = 1.0;
    double cur = s * (x - detail::rec_a(f, 0)) / detail::rec_b(f, 1);
    for (unsigned k = 1; k < n; ++k) {
        const double next = (s * (x - detail::rec_a(f, k)) * cur - detail::rec_b(f, k) * prev) /
                            detail::rec_b(f, k + 1);
        prev = cur;
        cur = next;
    }
    return cur;
}

/// Derivatives p_0'(x), ..., p_{max_n}'(x).
/// Hermite: psi_n' = sqrt(n) psi_{n-1}. Laguerre: l_n^(t)' = -sqrt(n/(t+1)) l_{n-1}^(t+1).
inline void eval_poly_derivative_all(const PolyFamily& f, unsigned max_n, double x, std::span<double> out) {
    detail::check_degree(max_n);
    detail::check_domain(f, x);
    if (out.size() < std::size_t(max_n) + 1) throw ParameterError("output span too small");
    out[0] = 0.0;
    if (max_n == 0) return;
    std::vector<double> lower(max_n);
    const PolyFamily src = f.is_hermite() ? f : PolyFamily::laguerre(f.theta + 1);
    detail::fill_poly(src, max_n - 1, x, lower);
    if (f.is_hermite()) {
        for (unsigned n = 1; n <= max_n; ++n) out[n] = std::sqrt(double(n)) * lower[n - 1];
    } else {
        const double t1 = f.theta + 1.0;
        for (unsigned n = 1; n <= max_n; ++n) out[n] = -std::sqrt(n / t1) * lower[n - 1];
    }
}

inline double eval_poly_derivative(const PolyFamily& f, unsigned n, double x) {
    detail::check_degree(n);
    detail::check_domain(f, x);
    if (n == 0) return 0.0;
    if (f.is_hermite()) return std::sqrt(double(n)) * eval_poly(f, n - 1, x);
    return -std::sqrt(n / (f.theta + 1.0)) * eval_poly(PolyFamily::laguerre(f.theta + 1), n - 1, x);
}

/// log W(x) (Hermite) or log G(x; theta) (Laguerre); -inf where the weight vanishes.
inline double log_weight(const PolyFamily& f, double x) {
    detail::check_domain(f, x);
    if (f.is_hermite()) return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
    if (x == 0.0) return f.theta == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return f.theta * std::log(x) - x - std::lgamma(f.theta + 1.0);
}

/// d/dx log W: -x (Hermite), theta/x - 1 (Laguerre, x > 0 unless theta = 0).
inline double dlog_weight(const PolyFamily& f, double x) {
    if (f.is_hermite()) return -x;
    if (f.theta == 0) return -1.0;
    if (x <= 0.0) throw DomainError("log-weight derivative is singular at x = 0 for theta >= 1");
    return f.theta / x - 1.0;
}

/// W(x)^power, computed as exp(power * log W) so deep tails underflow to 0.
inline double eval_weight(const PolyFamily& f, double x, double power) {
    if (!(power >= 0.0)) throw ParameterError("weight power must be non-negative");
    const double lw = log_weight(f, x);
    if (power == 0.0) return 1.0;
    return std::exp(power * lw);
}

/// Psi_{beta,m}(x) = prod_i p_{m_i}(x_i + shift_i) W_i^beta(x_i + shift_i).
/// Log-magnitudes and the sign are accumulated separately and exponentiated once.
inline double eval_basis_function(const BasisSpec& spec, const MultiIndex& m, std::span<const double> x) {
    const std::size_t d = spec.dimension();
    if (m.size() != d || x.size() != d) throw ParameterError("multi-index / point dimension mismatch");
    double log_mag = 0.0;
    bool negative = false;
    for (std::size_t i = 0; i < d; ++i) {
        const double xi = x[i] + spec.shift_at(i);
        detail::check_domain(spec.families[i], xi, i);
        const double p = eval_poly(spec.families[i], m[i], xi);
        if (p == 0.0) return 0.0;
        const double lw = log_weight(spec.families[i], xi);
        if (lw == -std::numeric_limits<double>::infinity()) return 0.0;
        log_mag += std::log(std::abs(p)) + spec.beta * lw;
        negative ^= (p < 0.0);
    }
    const double v = std::exp(log_mag);
    return negative ? -v : v;
}

/// binomial(M + d, d), i.e. |{m in N^d : |m|_1 <= M}|; throws beyond 2^31 entries.
inline std::size_t basis_size(unsigned d, unsigned M) {
    if (d == 0) throw ParameterError("dimension must be >= 1");
    constexpr std::uint64_t kLimit = std::uint64_t(1) << 31;
    std::uint64_t c = 1;
    for (unsigned i = 1; i <= d; ++i) {
        c = c * (std::uint64_t(M) + i) / i;  // c = binomial(M + i, i), exact
        if (c > kLimit) throw ParameterError("multi-index set size exceeds 2^31 entries");
    }
    return static_cast<std::size_t>(c);
}

/// Flat, shell-ordered storage of {m : |m|_1 <= M}. Shell k occupies [shell_begin(k), shell_end(k)).
class MultiIndexSet {
public:
    MultiIndexSet() = default;

    /// Optional caps restrict each entry, m_i <= caps[i], keeping the graded shell order.
    MultiIndexSet(unsigned d, unsigned M, std::vector<unsigned> caps = {}) : dim_(d), order_(M), caps_(std::move(caps)) {
        if (d == 0 || d > kMaxDimension) throw ParameterError("dimension must be in [1, 16]");
        if (M > kMaxDegree) throw ParameterError("order exceeds max degree");
        if (caps_.empty()) caps_.assign(d, kMaxDegree);
        if (caps_.size() != d) throw ParameterError("cap vector length does not match dimension");
        const std::size_t n = basis_size(d, M);
        entries_.reserve(n * d);
        offsets_.reserve(M + 2);
        std::vector<std::uint16_t> scratch(d);
        for (unsigned k = 0; k <= M; ++k) {
            offsets_.push_back(entries_.size() / d);
            emit_shell(0, k, scratch);
        }
        offsets_.push_back(entries_.size() / d);
    }

    std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
    unsigned dimension() const noexcept { return dim_; }
    unsigned order() const noexcept { return order_; }
    const std::vector<unsigned>& caps() const noexcept { return caps_; }

    /// True when no cap removes any index of the total-degree set.
    bool is_full() const noexcept {
        for (unsigned c : caps_)
            if (c < order_) return false;
        return true;
    }

    std::span<const std::uint16_t> operator[](std::size_t k) const {
        return {entries_.data() + k * dim_, dim_};
    }

    std::size_t shell_begin(unsigned k) const { return offsets_.at(k); }
    std::size_t shell_end(unsigned k) const { return offsets_.at(k + 1); }

    MultiIndex at(std::size_t k) const {
        auto e = (*this)[k];
        return MultiIndex(std::vector<unsigned>(e.begin(), e.end()));
    }

private:
    void emit_shell(unsigned pos, unsigned remaining, std::vector<std::uint16_t>& scratch) {
        if (pos + 1 == dim_) {
            if (remaining > caps_[pos]) return;
            scratch[pos] = static_cast<std::uint16_t>(remaining);
            entries_.insert(entries_.end(), scratch.begin(), scratch.end());
            return;
        }
        for (unsigned v = std::min(remaining, caps_[pos]) + 1; v-- > 0;) {
            scratch[pos] = static_cast<std::uint16_t>(v);
            emit_shell(pos + 1, remaining - v, scratch);
        }
    }

    unsigned dim_ = 0;
    unsigned order_ = 0;
    std::vector<unsigned> caps_;
    std::vector<std::uint16_t> entries_;
    std::vector<std::size_t> offsets_;
};

inline std::vector<MultiIndex> enumerate_multi_indices(unsigned d, unsigned M) {
    const MultiIndexSet set(d, M);
    std::vector<MultiIndex> out;
    out.reserve(set.size());
    for (std::size_t k = 0; k < set.size(); ++k) out.push_back(set.at(k));
    return out;
}

/// Integer Laguerre shape maximizing the Gamma(theta+1, 1) log-likelihood of strictly
/// positive (already shifted) data. Exhaustive over [0, max_theta].
inline unsigned fit_laguerre_theta(std::span<const double> shifted, unsigned max_theta = 64) {
    if (shifted.empty()) throw ParameterError("theta fit needs at least one sample");
    double mean_log = 0.0;
    double mean = 0.0;
    for (double x : shifted) {
        if (!(x > 0.0)) throw DomainError("theta fit needs strictly positive samples");
        mean_log += std::log(x);
        mean += x;
    }
    mean_log /= double(shifted.size());
    mean /= double(shifted.size());
    unsigned best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (unsigned t = 0; t <= max_theta; ++t) {
        const double ll = t * mean_log - mean - std::lgamma(t + 1.0);
        if (ll > best_ll) {
            best_ll = ll;
            best = t;
        }
    }
    return best;
}

}  // namespace kelr

#endif  // KELR_BASIS_HPP
