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

#ifndef KELR_QUADRATURE_HPP
#define KELR_QUADRATURE_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Eigenvalues>

#include "basis.hpp"
#include "errors.hpp"

namespace kelr {

/// n-point Gauss rule for the probability weight of a family (W or G(.;theta)).
/// Exact for polynomials of degree <= 2n - 1. Weights sum to 1.
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<double> log_weights;
};

namespace detail {

// p_n(x), p_n'(x) and log sum_{k<n} p_k(x)^2, with periodic rescaling so that degrees
// in the hundreds do not overflow. p_n and p_n' share one scale factor.
struct ScaledEval {
    double p = 0.0;
    double dp = 0.0;
    double log_christoffel_sum = 0.0;
};

inline ScaledEval scaled_recurrence(const PolyFamily& f, unsigned n, double x) {
    const double s = f.is_hermite() ? 1.0 : -1.0;
    double prev = 0.0, cur = 1.0;    // p_{-1}, p_0
    double dprev = 0.0, dcur = 0.0;  // derivatives
    double sumsq = 0.0;
    double log_scale = 0.0;
    constexpr double kBig = 1e100;
    constexpr double kSmall = 1e-100;
    for (unsigned k = 0; k < n; ++k) {
        sumsq += cur * cur;
        const double bk = rec_b(f, k);
        const double bk1 = rec_b(f, k + 1);
        const double next = (s * (x - rec_a(f, k)) * cur - bk * prev) / bk1;
        const double dnext = (s * cur + s * (x - rec_a(f, k)) * dcur - bk * dprev) / bk1;
        prev = cur;
        cur = next;
        dprev = dcur;
        dcur = dnext;
        if (std::abs(cur) > kBig || std::abs(dcur) > kBig) {
            prev *= kSmall;
            cur *= kSmall;
            dprev *= kSmall;
            dcur *= kSmall;
            sumsq *= kSmall * kSmall;
            log_scale += std::log(kBig);
        }
    }
    return {cur, dcur, std::log(sumsq) + 2.0 * log_scale};
}

}  // namespace detail

/// Golub-Welsch eigenvalues refined by Newton on p_n; Christoffel weights
/// w_k = 1 / sum_{j<n} p_j(x_k)^2 evaluated in log space.
inline GaussRule gauss_rule(const PolyFamily& f, unsigned n) {
    if (n == 0) throw ParameterError("Gauss rule needs at least one node");
    if (n > 2 * kMaxDegree) throw ParameterError("too many Gauss nodes");
    Eigen::VectorXd diag(n);
    Eigen::VectorXd sub(n > 1 ? n - 1 : 1);
    for (unsigned k = 0; k < n; ++k) diag[k] = detail::rec_a(f, k);
    for (unsigned k = 1; k < n; ++k) sub[k - 1] = detail::rec_b(f, k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    if (n == 1) {
        GaussRule r;
        r.nodes = {diag[0]};
        r.weights = {1.0};
        r.log_weights = {0.0};
        return r;
    }
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("tridiagonal eigen solve failed");
    GaussRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    r.log_weights.resize(n);
    for (unsigned k = 0; k < n; ++k) {
        double x = solver.eigenvalues()[k];
        for (int it = 0; it < 3; ++it) {
            const auto e = detail::scaled_recurrence(f, n, x);
            if (e.dp == 0.0) break;
            const double step = e.p / e.dp;
            x -= step;
            if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
        }
        if (f.is_laguerre() && x < 0.0) x = 0.0;
        r.nodes[k] = x;
        r.log_weights[k] = -detail::scaled_recurrence(f, n, x).log_christoffel_sum;
        r.weights[k] = std::exp(r.log_weights[k]);
    }
    return r;
}

}  // namespace kelr

#endif  // KELR_QUADRATURE_HPP
