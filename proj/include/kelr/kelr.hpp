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

/// @file kelr.hpp
/// @brief Umbrella header for the estimation library (no CLI or config dependencies).

#ifndef KELR_KELR_HPP
#define KELR_KELR_HPP

#include "basis.hpp"
#include "config.hpp"
#include "density_estimation.hpp"
#include "errors.hpp"
#include "linear_response.hpp"
#include "mercer_kernels.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "quadrature.hpp"
#include "sde_sim.hpp"

#endif  // KELR_KELR_HPP
