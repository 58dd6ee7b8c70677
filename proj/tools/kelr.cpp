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

// kelr: batch pipeline for kernel-embedding density estimation and linear response.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kelr/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigFailure = 2, kNumericFailure = 3, kIoFailure = 4 };

int run(const std::string& command, const std::string& config_path, std::optional<std::uint64_t> seed,
        std::optional<std::string> out, bool paper_scale, bool quiet) {
    kelr::ExperimentConfig cfg = kelr::load_config(config_path);
    if (seed) cfg.system.seed = *seed;
    if (out) cfg.output.directory = *out;
    const kelr::RunOptions opt{paper_scale, quiet};
    if (command == "simulate") kelr::cmd_simulate(cfg, opt);
    else if (command == "fit") kelr::cmd_fit(cfg, opt);
    else if (command == "diagnostics") kelr::cmd_diagnostics(cfg, opt);
    else if (command == "response") kelr::cmd_response(cfg, opt);
    else if (command == "bench") {
        const auto b = kelr::cmd_bench(cfg, opt);
        std::cout << "embedding " << b.embedding_seconds << " s, kde " << b.kde_seconds << " s, basis "
                  << b.basis_count << ", N " << b.n_samples << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel-embedding equilibrium density estimation and FDT linear response"};
    app.require_subcommand(1, 1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    unsigned threads = 0;
    bool paper_scale = false;
    bool quiet = false;
    app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");
    app.add_flag("--quiet", quiet, "Suppress progress messages");

    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "Integrate the configured system and write samples.bin"},
        {"fit", "Fit the density estimate (and M sweep when configured)"},
        {"diagnostics", "Write delta_M, R_M and eta_M over the configured M range"},
        {"response", "Estimate linear response curves for the configured conjugate fields"},
        {"bench", "Time embedding against KDE conjugate-field evaluation"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override system.seed");
        sub->add_option("--out", out, "Override output.directory");
        sub->add_flag("--paper-scale", paper_scale, "Default to 1e7 samples instead of 1e6");
        sub->add_option("--threads", threads, "Worker thread cap (0 = all cores)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigFailure;
    }
    kelr::set_thread_count(threads);
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, config_path, seed, out, paper_scale, quiet);
    } catch (const kelr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const kelr::ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const kelr::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIoFailure;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumericFailure;
    }
}
