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
 * @file mercer_kernels.hpp
 * @brief Closed-form Mehler and Hille-Hardy kernels and their truncated Mercer series.
 *
 * These are reference implementations used to validate the basis module; the density
 * estimator works on coefficients and never evaluates a kernel.
 */

#ifndef KELR_MERCER_KERNELS_HPP
#define KELR_MERCER_KERNELS_HPP

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "basis.hpp"
#include "errors.hpp"

namespace kelr {

/// Kernel description: all-Hermite (Mehler) or all-Laguerre (Hille-Hardy) basis, evaluated
/// either in closed form or as the Mercer series truncated at |m|_1 <= truncation.
struct KernelSpec {
    BasisSpec basis;
    std::optional<unsigned> truncation;
};

/// e^{-z} I_order(z) for integer order and z >= 0. Power series up to z = 20, the
/// Hankel asymptotic expansion beyond.
inline double modified_bessel_scaled(unsigned order, double z) {
    if (!(z >= 0.0)) throw ParameterError("modified_bessel_scaled needs z >= 0");
    if (z == 0.0) return order == 0 ? 1.0 : 0.0;
    const double nu = order;
    if (z <= 20.0) {
        const double q = 0.25 * z * z;
        double term = 1.0;
        double sum = 1.0;
        for (unsigned k = 0; k < 500; ++k) {
            term *= q / ((k + 1.0) * (nu + k + 1.0));
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        const double log_lead = nu * std::log(0.5 * z) - std::lgamma(nu + 1.0) - z;
        return std::exp(log_lead) * sum;
    }
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    double last = 1.0;
    for (unsigned k = 1; k < 200; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k * z);
        if (std::abs(term) > last) break;  // asymptotic series started to diverge
        sum += term;
        last = std::abs(term);
        if (last < 1e-17 * std::abs(sum)) break;
    }
    return sum / std::sqrt(2.0 * std::numbers::pi * z);
}

namespace detail {

inline void check_kernel_args(const BasisSpec& spec, std::span<const double> x, std::span<const double> y) {
    if (!(spec.rho > 0.0 && spec.rho < 1.0)) throw ParameterError("rho must lie in (0, 1)");
    if (!(spec.beta >= 0.0)) throw ParameterError("beta must be non-negative");
    if (x.size() != spec.dimension() || y.size() != spec.dimension())
        throw ParameterError("kernel point dimension mismatch");
}

}  // namespace detail

/// d-dimensional Mehler kernel
/// (2 pi)^{-d} (1-rho^2)^{-d/2} exp(-(|x|^2 + |y|^2 - 2 rho x.y) / (2 (1-rho^2))) W^{beta-1}(x) W^{beta-1}(y).
inline double mehler_kernel(const BasisSpec& spec, std::span<const double> x, std::span<const double> y) {
    detail::check_kernel_args(spec, x, y);
    if (!spec.all_hermite()) throw ParameterError("Mehler kernel needs an all-Hermite basis");
    const double d = double(spec.dimension());
    const double r2 = spec.rho * spec.rho;
    const double log2pi = std::log(2.0 * std::numbers::pi);
    double quad = 0.0;
    double log_wx = 0.0, log_wy = 0.0;
    for (std::size_t i = 0; i < spec.dimension(); ++i) {
        const double xi = x[i] + spec.shift_at(i);
        const double yi = y[i] + spec.shift_at(i);
        quad += xi * xi + yi * yi - 2.0 * spec.rho * (xi * yi);
        log_wx += -0.5 * xi * xi - 0.5 * log2pi;
        log_wy += -0.5 * yi * yi - 0.5 * log2pi;
    }
    const double log_k = -d * log2pi - 0.5 * d * std::log1p(-r2) - quad / (2.0 * (1.0 - r2)) +
                         (spec.beta - 1.0) * (log_wx + log_wy);
    return std::exp(log_k);
}

/// Generalized Hille-Hardy kernel
/// rho^{-|theta|_1/2} (1-rho)^{-d} exp(-(1+rho)/(2(1-rho)) |x+y|_1) G^{beta-1/2}(x) G^{beta-1/2}(y)
///   prod_i I_{theta_i}(2 sqrt(x_i y_i rho) / (1-rho)),
/// evaluated with e^{-z} I_theta(z) and a log-space prefactor.
inline double hille_hardy_kernel(const BasisSpec& spec, std::span<const double> x, std::span<const double> y) {
    detail::check_kernel_args(spec, x, y);
    if (!spec.all_laguerre()) throw ParameterError("Hille-Hardy kernel needs an all-Laguerre basis");
    const double rho = spec.rho;
    double log_k = 0.0;
    double bessel = 1.0;
    for (std::size_t i = 0; i < spec.dimension(); ++i) {
        const double xi = x[i] + spec.shift_at(i);
        const double yi = y[i] + spec.shift_at(i);
        if (xi < 0.0 || yi < 0.0) throw DomainError("Hille-Hardy kernel needs non-negative coordinates", i);
        const unsigned theta = spec.families[i].theta;
        const double z = 2.0 * std::sqrt(xi * yi * rho) / (1.0 - rho);
        if (z == 0.0 && theta > 0) return 0.0;  // I_theta(0) = 0 dominates the G factors
        log_k += -0.5 * theta * std::log(rho) - std::log1p(-rho) - (1.0 + rho) / (2.0 * (1.0 - rho)) * (xi + yi) + z;
        log_k += (spec.beta - 0.5) * (log_weight(spec.families[i], xi) + log_weight(spec.families[i], yi));
        bessel *= modified_bessel_scaled(theta, z);
    }
    return std::exp(log_k) * bessel;
}

/// sum_{|m|_1 <= truncation} rho^{|m|_1} Psi_{beta,m}(x) Psi_{beta,m}(y).
inline double truncated_mercer_sum(const BasisSpec& spec, std::span<const double> x, std::span<const double> y,
                                   unsigned truncation) {
    detail::check_kernel_args(spec, x, y);
    const std::size_t d = spec.dimension();
    std::vector<std::vector<double>> px(d, std::vector<double>(truncation + 1));
    std::vector<std::vector<double>> py(d, std::vector<double>(truncation + 1));
    double log_w = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double xi = x[i] + spec.shift_at(i);
        const double yi = y[i] + spec.shift_at(i);
        detail::check_domain(spec.families[i], xi, i);
        detail::check_domain(spec.families[i], yi, i);
        eval_poly_all(spec.families[i], truncation, xi, px[i]);
        eval_poly_all(spec.families[i], truncation, yi, py[i]);
        log_w += spec.beta * (log_weight(spec.families[i], xi) + log_weight(spec.families[i], yi));
    }
    const MultiIndexSet set(static_cast<unsigned>(d), truncation);
    double total = 0.0;
    for (unsigned k = 0; k <= truncation; ++k) {
        double shell = 0.0;
        for (std::size_t j = set.shell_begin(k); j < set.shell_end(k); ++j) {
            const auto m = set[j];
            double prod = 1.0;
            for (std::size_t i = 0; i < d; ++i) prod *= px[i][m[i]] * py[i][m[i]];
            shell += prod;
        }
        total += std::pow(spec.rho, double(k)) * shell;
    }
    return total * std::exp(log_w);
}

inline double evaluate_kernel(const KernelSpec& kernel, std::span<const double> x, std::span<const double> y) {
    if (kernel.truncation) return truncated_mercer_sum(kernel.basis, x, y, *kernel.truncation);
    if (kernel.basis.all_hermite()) return mehler_kernel(kernel.basis, x, y);
    if (kernel.basis.all_laguerre()) return hille_hardy_kernel(kernel.basis, x, y);
    throw ParameterError("closed-form kernels need an all-Hermite or all-Laguerre basis");
}

/// sup_x sqrt(k(x,x)) = (2 pi)^{-beta d/2} (1 - rho^2)^{-d/4} for the Mehler kernel.
inline double kernel_sup_norm(const BasisSpec& spec) {
    if (!spec.all_hermite()) throw ParameterError("closed sup-norm is only available for the Mehler kernel");
    if (!(spec.rho >= 0.0 && spec.rho < 1.0)) throw ParameterError("rho must lie in [0, 1)");
    const double d = double(spec.dimension());
    return std::pow(2.0 * std::numbers::pi, -0.5 * spec.beta * d) * std::pow(1.0 - spec.rho * spec.rho, -0.25 * d);
}

/// Numerical bound sqrt(max k(x,x)) for a one-dimensional Hille-Hardy kernel over a
/// uniform grid on [0, x_max]. No closed form is available for this family.
inline double hille_hardy_grid_sup(const BasisSpec& spec, double x_max, std::size_t points = 20001) {
    if (spec.dimension() != 1 || !spec.all_laguerre())
        throw ParameterError("grid sup-norm expects a one-dimensional Laguerre basis");
    if (points < 2) throw ParameterError("grid needs at least two points");
    double best = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
        const double x = x_max * double(k) / double(points - 1) - spec.shift_at(0);
        const double v = hille_hardy_kernel(spec, std::span<const double>(&x, 1), std::span<const double>(&x, 1));
        best = std::max(best, v);
    }
    return std::sqrt(best);
}

}  // namespace kelr

#endif  // KELR_MERCER_KERNELS_HPP
