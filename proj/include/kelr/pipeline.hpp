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
 * @file pipeline.hpp
 * @brief Config-driven batch stages: simulate, fit, diagnostics, response and bench.
 *
 * Every stage reads and writes files under the configured output directory:
 *   samples.bin, manifest.json            (simulate)
 *   estimate.txt, coefficients.csv,
 *   fit_summary.json, diagnostics.csv,
 *   density_grid.csv, kde.json            (fit)
 *   response_<field>.csv/.json,
 *   comparison.csv, summary.json          (response)
 *   bench.json                            (bench)
 * Apart from manifest.json and bench.json, no file carries timing data, so reruns with
 * the same config and seed produce identical bytes.
 */

#ifndef KELR_PIPELINE_HPP
#define KELR_PIPELINE_HPP

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "density_estimation.hpp"
#include "linear_response.hpp"
#include "sde_sim.hpp"

namespace kelr {

struct RunOptions {
    bool paper_scale = false;
    bool quiet = false;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void log(const RunOptions& o, const std::string& msg) {
    if (!o.quiet) std::cerr << "[kelr] " << msg << '\n';
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("write failed for " + p.string());
}

inline std::filesystem::path out_dir(const ExperimentConfig& c) {
    std::filesystem::path d(c.output.directory);
    std::error_code ec;
    std::filesystem::create_directories(d, ec);
    if (ec) throw IoError("cannot create output directory " + d.string() + ": " + ec.message());
    return d;
}

}  // namespace detail

inline Potential potential_of(const ExperimentConfig& c) {
    if (c.system.kind == "triple_well") return c.system.triple_well;
    return c.system.morse;
}

inline EquilibriumDensity equilibrium_of(const ExperimentConfig& c) { return analytic_equilibrium(potential_of(c)); }

inline SimulationOptions simulation_options(const ExperimentConfig& c, bool paper_scale = false) {
    SimulationOptions o;
    o.h = c.system.h;
    o.subsample = c.system.subsample;
    o.burn_in = c.system.burn_in;
    o.n_steps = c.effective_steps(paper_scale);
    o.seed = c.system.seed;
    return o;
}

inline SampleSeries simulate(const ExperimentConfig& c, bool paper_scale = false) {
    const auto o = simulation_options(c, paper_scale);
    if (c.system.kind == "triple_well") {
        const auto integ = c.system.integrator == "euler_maruyama" ? Integrator::EulerMaruyama : Integrator::WeakTrapezoidal;
        return simulate_gradient_system(c.system.triple_well, o, integ);
    }
    return simulate_langevin(c.system.morse, o);
}

/// Basis from the config; automatic shifts are derived from the samples.
inline BasisSpec make_basis(const ExperimentConfig& c, const SampleSeries& s, unsigned order) {
    BasisSpec b;
    for (const auto& f : c.basis.families) b.families.push_back(parse_family(f));
    b.beta = c.basis.beta;
    b.rho = c.basis.rho;
    b.order = order;
    b.axis_order = c.basis.axis_order;
    b.shift = c.basis.shift ? *c.basis.shift : default_shift(b.families, s);
    b.validate();
    return b;
}

inline std::filesystem::path samples_path(const ExperimentConfig& c) {
    return std::filesystem::path(c.output.directory) / "samples.bin";
}

inline SampleSeries load_samples(const ExperimentConfig& c) {
    const auto p = samples_path(c);
    if (!std::filesystem::exists(p)) throw IoError("no samples at " + p.string() + "; run `kelr simulate` first");
    auto s = read_samples_binary(p.string());
    if (s.size() == 0) throw ParameterError("sample file " + p.string() + " holds N = 0 samples");
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------------------

inline SampleSeries cmd_simulate(const ExperimentConfig& c, const RunOptions& opt = {}) {
    const auto dir = detail::out_dir(c);
    const auto t0 = std::chrono::steady_clock::now();
    detail::log(opt, "simulating " + c.system.kind + " for " + std::to_string(c.effective_steps(opt.paper_scale)) + " steps");
    auto s = simulate(c, opt.paper_scale);
    const double wall = detail::seconds_since(t0);
    write_samples_binary((dir / "samples.bin").string(), s);
    if (c.output.samples_csv) write_samples_csv((dir / "samples.csv").string(), s);
    auto sys = to_json(c)["system"];
    detail::write_json(dir / "manifest.json", {{"system", sys},
                                               {"seed", c.system.seed},
                                               {"n_samples", s.size()},
                                               {"n_steps", c.effective_steps(opt.paper_scale)},
                                               {"dt_effective", s.dt_effective},
                                               {"wall_clock_seconds", wall}});
    detail::log(opt, "wrote " + std::to_string(s.size()) + " samples to " + (dir / "samples.bin").string());
    return s;
}

struct FitResult {
    DensityEstimate estimate;
    DeltaSelection selection;
    std::optional<SelectionDiagnostics> diagnostics;
};

inline void write_diagnostics_csv(const std::filesystem::path& p, const SelectionDiagnostics& d) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    os << "M,delta_M,R_M,eta_M\n";
    for (const auto& r : d.rows)
        os << r.M << ',' << detail::fmt17(r.delta_M) << ',' << detail::fmt17(r.rejection_ratio) << ','
           << detail::fmt17(r.eta) << '\n';
    if (!os) throw IoError("write failed for " + p.string());
}

inline void write_coefficients_csv(const std::filesystem::path& p, const DensityEstimate& e) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    for (std::size_t i = 0; i < e.dimension(); ++i) os << 'm' << (i + 1) << ',';
    os << "coeff\n";
    for (std::size_t k = 0; k < e.coeffs.size(); ++k) {
        for (auto v : e.indices[k]) os << v << ',';
        os << detail::fmt17(e.coeffs[k]) << '\n';
    }
    if (!os) throw IoError("write failed for " + p.string());
}

/// Embedding fit at the configured order with its positivity threshold. With a sweep
/// configured, the sweep fit (order max + 1) is reused by truncation.
inline FitResult fit_from_config(const ExperimentConfig& c, const SampleSeries& s) {
    FitResult r;
    if (c.basis.sweep) {
        const unsigned hi = std::max(c.basis.sweep->max, c.basis.order);
        r.diagnostics = diagnostics_sweep(s, make_basis(c, s, hi), c.basis.sweep->min, hi, c.estimator.delta_floor);
        r.estimate = r.diagnostics->fit.truncated(c.basis.order);
        if (c.basis.sweep->max < hi) {
            auto& rows = r.diagnostics->rows;
            rows.erase(std::remove_if(rows.begin(), rows.end(), [&](const DiagnosticsRow& x) { return x.M > c.basis.sweep->max; }), rows.end());
        }
    } else {
        r.estimate = fit_embedding(s, make_basis(c, s, c.basis.order));
    }
    r.selection = select_delta(r.estimate, s, c.estimator.delta_floor);
    r.estimate.delta = r.selection.delta;
    return r;
}

inline void write_density_grid(const std::filesystem::path& p, const GridConfig& g, const EquilibriumDensity& eq,
                               const std::function<double(std::span<const double>)>& estimate) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    os << "x1,x2,estimate,analytic\n";
    for (unsigned i = 0; i < g.points[0]; ++i)
        for (unsigned j = 0; j < g.points[1]; ++j) {
            const double x[2] = {g.lower[0] + (g.upper[0] - g.lower[0]) * i / (g.points[0] - 1.0),
                                 g.lower[1] + (g.upper[1] - g.lower[1]) * j / (g.points[1] - 1.0)};
            double est = std::numeric_limits<double>::quiet_NaN();
            try {
                est = estimate(x);
            } catch (const DomainError&) {
                // grid point outside the basis domain
            }
            os << detail::fmt17(x[0]) << ',' << detail::fmt17(x[1]) << ',' << detail::fmt17(est) << ','
               << detail::fmt17(eq.density(x)) << '\n';
        }
    if (!os) throw IoError("write failed for " + p.string());
}

inline void cmd_fit(const ExperimentConfig& c, const RunOptions& opt = {}) {
    const auto dir = detail::out_dir(c);
    const auto s = load_samples(c);
    const auto eq = equilibrium_of(c);
    if (c.estimator.kind == "kde") {
        const auto rule = c.estimator.sigma_rule == "pooled" ? SigmaRule::Pooled : SigmaRule::GeometricMean;
        auto kde = fit_kde(s, rule);
        detail::write_json(dir / "kde.json", {{"bandwidth", kde.bandwidth}, {"sigma_rule", c.estimator.sigma_rule}, {"n_samples", s.size()}});
        if (c.output.density_grid)
            write_density_grid(dir / "density_grid.csv", *c.output.density_grid, eq, [&](std::span<const double> x) { return eval_kde(kde, x); });
        detail::log(opt, "kde bandwidth " + detail::fmt17(kde.bandwidth));
        return;
    }
    if (c.estimator.kind == "analytic") {
        if (c.output.density_grid)
            write_density_grid(dir / "density_grid.csv", *c.output.density_grid, eq, [&](std::span<const double> x) { return eq.density(x); });
        detail::log(opt, "analytic estimator: nothing to fit");
        return;
    }
    detail::log(opt, "fitting embedding of order " + std::to_string(c.basis.order));
    auto r = fit_from_config(c, s);
    write_estimate((dir / "estimate.txt").string(), r.estimate);
    write_coefficients_csv(dir / "coefficients.csv", r.estimate);
    if (r.diagnostics) write_diagnostics_csv(dir / "diagnostics.csv", *r.diagnostics);
    detail::write_json(dir / "fit_summary.json", {{"order", c.basis.order},
                                                  {"basis_count", r.estimate.coeffs.size()},
                                                  {"n_samples", s.size()},
                                                  {"delta_M", r.selection.delta_M},
                                                  {"delta", r.selection.delta},
                                                  {"R_M", r.selection.rejection_ratio},
                                                  {"n_rejected", r.selection.n_rejected},
                                                  {"excess_kurtosis", excess_kurtosis(s)}});
    if (c.output.density_grid) {
        DensityEvaluator ev(r.estimate);
        write_density_grid(dir / "density_grid.csv", *c.output.density_grid, eq, [&](std::span<const double> x) { return ev.value(x); });
    }
    detail::log(opt, "delta = " + detail::fmt17(r.selection.delta) + ", R_M = " + detail::fmt17(r.selection.rejection_ratio));
}

inline SelectionDiagnostics cmd_diagnostics(const ExperimentConfig& c, const RunOptions& opt = {}) {
    const auto dir = detail::out_dir(c);
    const auto s = load_samples(c);
    const unsigned lo = c.basis.sweep ? c.basis.sweep->min : 0;
    const unsigned hi = c.basis.sweep ? c.basis.sweep->max : c.basis.order;
    detail::log(opt, "sweeping M over [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    auto d = diagnostics_sweep(s, make_basis(c, s, hi), lo, hi, c.estimator.delta_floor);
    write_diagnostics_csv(dir / "diagnostics.csv", d);
    return d;
}

// ---------------------------------------------------------------------------------------
// Response

struct FieldRun {
    std::string name;
    ResponseCurve raw;
    ResponseCurve curve;  // normalized when configured
    double seconds = 0.0;  // density fit + field tabulation + lag sums
    double delta = 0.0;
    unsigned order = 0;
};

/// Runs one response pipeline end to end. For the embedding field, `estimate` may carry
/// a precomputed fit (its delta is used); otherwise the fit is part of the timed run.
inline FieldRun run_response_pipeline(const ExperimentConfig& c, const SampleSeries& s, const std::string& name,
                                      std::shared_ptr<const DensityEstimate> estimate = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    FieldRun run;
    run.name = name;
    const Forcing forcing = Forcing::constant(c.response.forcing);
    std::optional<ConjugateField> field;
    if (name == "analytic") {
        field.emplace(conjugate_analytic(equilibrium_of(c), forcing));
    } else if (name == "embedding") {
        if (!estimate) estimate = std::make_shared<const DensityEstimate>(fit_from_config(c, s).estimate);
        run.delta = estimate->delta;
        run.order = estimate->order();
        field.emplace(conjugate_embedded(estimate, forcing, estimate->delta));
    } else if (name == "kde") {
        const auto rule = c.estimator.sigma_rule == "pooled" ? SigmaRule::Pooled : SigmaRule::GeometricMean;
        field.emplace(conjugate_kde(std::make_shared<const KdeEstimate>(fit_kde(s, rule)), forcing));
    } else {
        throw ConfigError("unknown response field '" + name + "'");
    }
    const FieldTable table = tabulate_field(*field, s);
    ResponseOptions ro;
    const double steps = std::floor(c.response.max_lag_time / s.dt_effective + 0.5);
    ro.max_lag = std::min<std::size_t>(std::size_t(std::max(0.0, steps)), s.size() - 1);
    ro.lag_stride = c.response.lag_stride;
    ro.block_length = c.response.block_length;
    run.raw = response_mc(s, Observable::identity(s.dim), table, ro);
    run.curve = c.response.normalize ? normalize_diagonal(run.raw) : run.raw;
    run.seconds = detail::seconds_since(t0);
    return run;
}

inline nlohmann::json response_metadata(const ExperimentConfig& c, const SampleSeries& s, const FieldRun& r) {
    nlohmann::json j = {{"field", r.name},
                        {"normalized", c.response.normalize},
                        {"divisors", r.curve.divisors},
                        {"retained_fraction", r.curve.retained_fraction},
                        {"delta", r.delta},
                        {"M", r.order},
                        {"N", s.size()},
                        {"seed", c.system.seed},
                        {"dt", r.curve.dt},
                        {"block_length", r.curve.block_length},
                        {"n_lags", r.curve.n_lags()}};
    if (r.curve.retained_fraction < 0.5) j["warning"] = "fewer than 50% of samples retained by the positivity mask";
    return j;
}

inline void write_comparison_csv(const std::filesystem::path& p, const std::vector<FieldRun>& runs) {
    const FieldRun* ref = nullptr;
    for (const auto& r : runs)
        if (r.name == "analytic") ref = &r;
    if (!ref) return;
    std::ofstream os(p);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    os << "field,entry,lag0_abs_gap,linf_gap\n";
    for (const auto& r : runs) {
        if (&r == ref) continue;
        for (std::size_t i = 0; i < r.curve.dim_A; ++i)
            for (std::size_t j = 0; j < r.curve.dim_B; ++j)
                os << r.name << ',' << (i + 1) << (j + 1) << ','
                   << detail::fmt17(std::abs(r.curve.at(0, i, j) - ref->curve.at(0, i, j))) << ','
                   << detail::fmt17(max_abs_gap(r.curve, ref->curve, i, j)) << '\n';
    }
    if (!os) throw IoError("write failed for " + p.string());
}

inline std::vector<FieldRun> cmd_response(const ExperimentConfig& c, const RunOptions& opt = {}) {
    const auto dir = detail::out_dir(c);
    const auto s = load_samples(c);
    std::vector<FieldRun> runs;
    for (const auto& name : c.response.fields) {
        std::shared_ptr<const DensityEstimate> est;
        if (name == "embedding" && std::filesystem::exists(dir / "estimate.txt")) {
            est = std::make_shared<const DensityEstimate>(read_estimate((dir / "estimate.txt").string()));
            if (est->spec.order != c.basis.order) est.reset();
        }
        detail::log(opt, "response with " + name + " conjugate field");
        runs.push_back(run_response_pipeline(c, s, name, est));
        const auto& r = runs.back();
        write_response_csv((dir / ("response_" + name + ".csv")).string(), r.curve);
        const auto meta = response_metadata(c, s, r);
        detail::write_json(dir / ("response_" + name + ".json"), meta);
        if (meta.contains("warning")) detail::log(opt, "warning: " + meta["warning"].get<std::string>());
    }
    write_comparison_csv(dir / "comparison.csv", runs);
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& r : runs) {
        nlohmann::json e = {{"lag0", std::vector<double>(r.curve.values.begin(), r.curve.values.begin() + std::ptrdiff_t(r.curve.width()))},
                            {"retained_fraction", r.curve.retained_fraction}};
        summary[r.name] = e;
    }
    detail::write_json(dir / "summary.json", summary);
    return runs;
}

// ---------------------------------------------------------------------------------------
// Bench

struct BenchResult {
    std::size_t n_samples = 0;
    std::size_t basis_count = 0;
    double embedding_seconds = 0.0;
    double kde_seconds = 0.0;
};

/// Wall-clock of building the conjugate field on every sample: embedding (fit, threshold,
/// tabulation) against KDE (bandwidth, tabulation).
inline BenchResult bench_fields(const ExperimentConfig& c, const SampleSeries& s) {
    if (s.size() == 0) throw ParameterError("bench needs N > 0 samples");
    BenchResult b;
    b.n_samples = s.size();
    const Forcing forcing = Forcing::constant(c.response.forcing);
    auto t0 = std::chrono::steady_clock::now();
    auto est = std::make_shared<const DensityEstimate>(fit_from_config(c, s).estimate);
    tabulate_field(conjugate_embedded(est, forcing, est->delta), s);
    b.embedding_seconds = detail::seconds_since(t0);
    b.basis_count = est->coeffs.size();
    t0 = std::chrono::steady_clock::now();
    const auto rule = c.estimator.sigma_rule == "pooled" ? SigmaRule::Pooled : SigmaRule::GeometricMean;
    tabulate_field(conjugate_kde(std::make_shared<const KdeEstimate>(fit_kde(s, rule)), forcing), s);
    b.kde_seconds = detail::seconds_since(t0);
    return b;
}

inline BenchResult cmd_bench(const ExperimentConfig& c, const RunOptions& opt = {}) {
    const auto dir = detail::out_dir(c);
    const auto s = load_samples(c);
    detail::log(opt, "benchmarking conjugate fields on " + std::to_string(s.size()) + " samples");
    const auto b = bench_fields(c, s);
    detail::write_json(dir / "bench.json", {{"n_samples", b.n_samples},
                                            {"basis_count", b.basis_count},
                                            {"embedding_seconds", b.embedding_seconds},
                                            {"kde_seconds", b.kde_seconds},
                                            {"speedup", b.kde_seconds / b.embedding_seconds}});
    return b;
}

}  // namespace kelr

#endif  // KELR_PIPELINE_HPP
