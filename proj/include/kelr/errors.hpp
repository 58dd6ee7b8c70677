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

#ifndef KELR_ERRORS_HPP
#define KELR_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kelr {

/// Invalid argument or configuration value (bad degree, rho outside (0,1), ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Evaluation point outside the domain of a polynomial family or kernel.
class DomainError : public std::domain_error {
public:
    DomainError(const std::string& what, std::size_t coordinate = npos)
        : std::domain_error(what), coordinate_(coordinate) {}

    /// Offending coordinate index, or npos if not coordinate specific.
    std::size_t coordinate() const noexcept { return coordinate_; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::size_t coordinate_;
};

/// Numerical failure: integrator blow-up, degenerate fit, quadrature non-convergence.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a conjugate field is evaluated at a point outside the retained domain.
class RejectedPointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kelr

#endif  // KELR_ERRORS_HPP
