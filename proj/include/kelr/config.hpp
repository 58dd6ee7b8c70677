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
 * @file config.hpp
 * @brief JSON experiment configuration with presets, strict key checking and lossless
 *        round-tripping.
 */

#ifndef KELR_CONFIG_HPP
#define KELR_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "basis.hpp"
#include "errors.hpp"
#include "sde_sim.hpp"

namespace kelr {

inline constexpr std::uint64_t kDefaultSamples = 1000000;
inline constexpr std::uint64_t kFullScaleSamples = 10000000;

struct SystemConfig {
    std::string kind;  // "triple_well" or "langevin"
    std::uint64_t seed = 0;
    std::string integrator;  // weak_trapezoidal | euler_maruyama | baoab
    double h = 1e-3;
    std::uint64_t subsample = 1;
    std::uint64_t burn_in = 100000;
    std::uint64_t n_steps = 0;    // 0: burn_in + n_samples * subsample
    std::uint64_t n_samples = 0;  // 0: default or full-scale count
    TripleWell triple_well;
    Morse morse;

    friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

struct SweepConfig {
    unsigned min = 0;
    unsigned max = 0;
    friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct BasisConfig {
    std::vector<std::string> families;
    double beta = 1.0;
    double rho = 0.5;
    unsigned order = 0;
    std::vector<unsigned> axis_order;  // kMaxDegree marks an uncapped axis
    std::optional<std::vector<double>> shift;  // nullopt: automatic
    std::optional<SweepConfig> sweep;

    friend bool operator==(const BasisConfig&, const BasisConfig&) = default;
};

struct EstimatorConfig {
    std::string kind = "embedding";  // embedding | kde | analytic
    double delta_floor = 1e-7;
    std::string sigma_rule = "geometric_mean";  // geometric_mean | pooled

    friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

struct ResponseConfig {
    std::vector<std::string> fields;  // subset of analytic, embedding, kde
    std::string observable = "identity";
    std::vector<double> forcing;
    double max_lag_time = 5.0;
    std::uint64_t lag_stride = 1;
    bool normalize = true;
    std::uint64_t block_length = 0;

    friend bool operator==(const ResponseConfig&, const ResponseConfig&) = default;
};

struct GridConfig {
    std::vector<double> lower, upper;
    std::vector<unsigned> points;
    friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct OutputConfig {
    std::string directory = "out";
    bool samples_csv = false;
    std::optional<GridConfig> density_grid;

    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct ExperimentConfig {
    SystemConfig system;
    BasisConfig basis;
    EstimatorConfig estimator;
    ResponseConfig response;
    OutputConfig output;

    std::uint64_t effective_samples(bool paper_scale = false) const {
        if (system.n_samples) return system.n_samples;
        return paper_scale ? kFullScaleSamples : kDefaultSamples;
    }
    std::uint64_t effective_steps(bool paper_scale = false) const {
        if (system.n_steps) return system.n_steps;
        return system.burn_in + effective_samples(paper_scale) * system.subsample;
    }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Defaults for a system kind: the triple-well (a, kBT, gamma) = (1, 1.5, 0.25) with
/// h = 1e-3 and 1/5 subsampling; the Morse Langevin system (gamma, kBT, eps, a, x0) =
/// (0.5, 1, 0.2, 10, 0) with 1/10 subsampling.
inline ExperimentConfig preset(const std::string& kind) {
    ExperimentConfig c;
    c.system.kind = kind;
    if (kind == "triple_well") {
        c.system.integrator = "weak_trapezoidal";
        c.system.h = 1e-3;
        c.system.subsample = 5;
        c.basis.families = {"hermite", "hermite"};
        c.basis.order = 60;
        c.response.forcing = {1.0, 1.0};
        c.response.max_lag_time = 5.0;
        c.response.fields = {"analytic", "embedding"};
        c.output.directory = "out/triple_well";
    } else if (kind == "langevin") {
        c.system.integrator = "baoab";
        c.system.h = 1e-3;
        c.system.subsample = 10;
        c.basis.families = {"laguerre:1", "hermite"};
        c.basis.order = 90;
        c.basis.axis_order = {kMaxDegree, 0};
        c.response.forcing = {1.0, 1.0};
        c.response.max_lag_time = 10.0;
        c.response.fields = {"analytic", "embedding"};
        c.output.directory = "out/langevin";
    } else {
        throw ConfigError("unknown system kind '" + kind + "' (expected triple_well or langevin)");
    }
    return c;
}

inline PolyFamily parse_family(const std::string& s) {
    if (s == "hermite") return PolyFamily::hermite();
    if (s.rfind("laguerre:", 0) == 0) {
        try {
            std::size_t used = 0;
            const unsigned long t = std::stoul(s.substr(9), &used);
            if (used == s.size() - 9 && t <= 64) return PolyFamily::laguerre(unsigned(t));
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("unknown basis family '" + s + "' (expected hermite or laguerre:<theta>)");
}

namespace detail {

using nlohmann::json;

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    void mark(const char* key) { seen_.insert(key); }
    const json& at(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }
    const std::string& path() const { return path_; }

    void finish() const {
        std::string unknown;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) unknown += (unknown.empty() ? "" : ", ") + path_ + "." + it.key();
        if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    using detail::Reader;
    Reader top(root, "config");
    if (!top.has("system")) throw ConfigError("config.system is required");
    Reader sys(top.at("system"), "system");
    if (!sys.has("kind")) throw ConfigError("system.kind is required");
    if (!sys.has("seed")) throw ConfigError("system.seed is required");
    std::string kind;
    sys.get("kind", kind);
    ExperimentConfig c = preset(kind);
    auto& s = c.system;
    sys.get("seed", s.seed);
    sys.get("integrator", s.integrator);
    sys.get("h", s.h);
    sys.get("subsample", s.subsample);
    sys.get("burn_in", s.burn_in);
    sys.get("n_steps", s.n_steps);
    sys.get("n_samples", s.n_samples);
    if (sys.has("parameters")) {
        Reader p(sys.at("parameters"), "system.parameters");
        if (kind == "triple_well") {
            p.get("a", s.triple_well.a);
            p.get("kBT", s.triple_well.kBT);
            p.get("gamma", s.triple_well.gamma);
            p.get("bump_amplitude", s.triple_well.bump_amplitude);
            p.get("retain", s.triple_well.retain);
        } else {
            p.get("epsilon", s.morse.epsilon);
            p.get("a", s.morse.a);
            p.get("x0", s.morse.x0);
            p.get("kBT", s.morse.kBT);
            p.get("gamma", s.morse.gamma);
        }
        p.finish();
    } else {
        sys.mark("parameters");
    }
    sys.finish();
    if (s.n_steps != 0 && s.n_steps <= s.burn_in)
        throw ConfigError("system.n_steps (" + std::to_string(s.n_steps) + ") must exceed system.burn_in (" +
                          std::to_string(s.burn_in) + ")");
    const bool gradient = kind == "triple_well";
    if (gradient && s.integrator != "weak_trapezoidal" && s.integrator != "euler_maruyama")
        throw ConfigError("system.integrator must be weak_trapezoidal or euler_maruyama for triple_well");
    if (!gradient && s.integrator != "baoab") throw ConfigError("system.integrator must be baoab for langevin");

    if (top.has("basis")) {
        Reader b(top.at("basis"), "basis");
        b.get("families", c.basis.families);
        b.get("beta", c.basis.beta);
        b.get("rho", c.basis.rho);
        b.get("order", c.basis.order);
        if (b.has("axis_order")) {
            const auto& a = b.at("axis_order");
            if (!a.is_array()) throw ConfigError("basis.axis_order must be an array");
            c.basis.axis_order.clear();
            for (const auto& v : a) {
                if (v.is_null()) c.basis.axis_order.push_back(kMaxDegree);
                else if (v.is_number_unsigned()) c.basis.axis_order.push_back(v.get<unsigned>());
                else throw ConfigError("basis.axis_order entries must be non-negative integers or null");
            }
        } else if (top.at("basis").contains("axis_order")) {
            b.mark("axis_order");
            c.basis.axis_order.clear();
        }
        if (b.has("shift")) {
            const auto& sh = b.at("shift");
            if (sh.is_string() && sh.get<std::string>() == "auto") c.basis.shift.reset();
            else if (sh.is_array()) c.basis.shift = sh.get<std::vector<double>>();
            else throw ConfigError("basis.shift must be \"auto\" or an array of numbers");
        } else {
            b.mark("shift");
        }
        if (b.has("sweep")) {
            Reader w(b.at("sweep"), "basis.sweep");
            SweepConfig sw;
            w.get("min", sw.min);
            w.get("max", sw.max);
            w.finish();
            if (sw.min > sw.max) throw ConfigError("basis.sweep.min must not exceed basis.sweep.max");
            c.basis.sweep = sw;
        } else {
            b.mark("sweep");
        }
        b.finish();
    }
    for (const auto& f : c.basis.families) parse_family(f);
    if (c.basis.families.size() != 2) throw ConfigError("basis.families must list one family per coordinate (2)");
    if (!c.basis.axis_order.empty() && c.basis.axis_order.size() != 2)
        throw ConfigError("basis.axis_order must have one entry per coordinate");

    if (top.has("estimator")) {
        Reader e(top.at("estimator"), "estimator");
        e.get("kind", c.estimator.kind);
        e.get("delta_floor", c.estimator.delta_floor);
        e.get("sigma_rule", c.estimator.sigma_rule);
        e.finish();
    }
    const std::set<std::string> kinds = {"embedding", "kde", "analytic"};
    if (!kinds.count(c.estimator.kind)) throw ConfigError("estimator.kind must be embedding, kde or analytic");
    if (c.estimator.sigma_rule != "geometric_mean" && c.estimator.sigma_rule != "pooled")
        throw ConfigError("estimator.sigma_rule must be geometric_mean or pooled");

    if (top.has("response")) {
        Reader r(top.at("response"), "response");
        r.get("fields", c.response.fields);
        r.get("observable", c.response.observable);
        r.get("forcing", c.response.forcing);
        r.get("max_lag_time", c.response.max_lag_time);
        r.get("lag_stride", c.response.lag_stride);
        r.get("normalize", c.response.normalize);
        r.get("block_length", c.response.block_length);
        r.finish();
    }
    for (const auto& f : c.response.fields)
        if (!kinds.count(f)) throw ConfigError("response.fields entries must be analytic, embedding or kde");
    if (c.response.observable != "identity") throw ConfigError("response.observable must be identity");
    if (c.response.forcing.size() != 2) throw ConfigError("response.forcing must have one entry per coordinate");
    if (c.response.lag_stride == 0) throw ConfigError("response.lag_stride must be >= 1");

    if (top.has("output")) {
        Reader o(top.at("output"), "output");
        o.get("directory", c.output.directory);
        o.get("samples_csv", c.output.samples_csv);
        if (o.has("density_grid")) {
            Reader g(o.at("density_grid"), "output.density_grid");
            GridConfig grid;
            g.get("lower", grid.lower);
            g.get("upper", grid.upper);
            g.get("points", grid.points);
            g.finish();
            if (grid.lower.size() != 2 || grid.upper.size() != 2 || grid.points.size() != 2)
                throw ConfigError("output.density_grid needs lower, upper and points with 2 entries each");
            for (unsigned n : grid.points)
                if (n < 2) throw ConfigError("output.density_grid.points entries must be >= 2");
            c.output.density_grid = grid;
        } else {
            o.mark("density_grid");
        }
        o.finish();
    }
    top.finish();
    return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    using nlohmann::json;
    json sys = {{"kind", c.system.kind},
                {"seed", c.system.seed},
                {"integrator", c.system.integrator},
                {"h", c.system.h},
                {"subsample", c.system.subsample},
                {"burn_in", c.system.burn_in},
                {"n_steps", c.system.n_steps},
                {"n_samples", c.system.n_samples}};
    if (c.system.kind == "triple_well") {
        const auto& p = c.system.triple_well;
        sys["parameters"] = {{"a", p.a}, {"kBT", p.kBT}, {"gamma", p.gamma}, {"bump_amplitude", p.bump_amplitude}, {"retain", p.retain}};
    } else {
        const auto& p = c.system.morse;
        sys["parameters"] = {{"epsilon", p.epsilon}, {"a", p.a}, {"x0", p.x0}, {"kBT", p.kBT}, {"gamma", p.gamma}};
    }
    json axis = json::array();
    for (unsigned v : c.basis.axis_order) axis.push_back(v == kMaxDegree ? json(nullptr) : json(v));
    json basis = {{"families", c.basis.families}, {"beta", c.basis.beta}, {"rho", c.basis.rho},
                  {"order", c.basis.order}, {"axis_order", axis}};
    basis["shift"] = c.basis.shift ? json(*c.basis.shift) : json("auto");
    basis["sweep"] = c.basis.sweep ? json{{"min", c.basis.sweep->min}, {"max", c.basis.sweep->max}} : json(nullptr);
    json out = {{"directory", c.output.directory}, {"samples_csv", c.output.samples_csv}};
    if (c.output.density_grid)
        out["density_grid"] = {{"lower", c.output.density_grid->lower},
                               {"upper", c.output.density_grid->upper},
                               {"points", c.output.density_grid->points}};
    else
        out["density_grid"] = nullptr;
    return {{"system", sys},
            {"basis", basis},
            {"estimator", {{"kind", c.estimator.kind}, {"delta_floor", c.estimator.delta_floor}, {"sigma_rule", c.estimator.sigma_rule}}},
            {"response",
             {{"fields", c.response.fields},
              {"observable", c.response.observable},
              {"forcing", c.response.forcing},
              {"max_lag_time", c.response.max_lag_time},
              {"lag_stride", c.response.lag_stride},
              {"normalize", c.response.normalize},
              {"block_length", c.response.block_length}}},
            {"output", out}};
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

}  // namespace kelr

#endif  // KELR_CONFIG_HPP
