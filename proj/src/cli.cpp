#include "byzfl/cli.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "byzfl/artifacts.hpp"
#include "byzfl/config.hpp"
#include "byzfl/errors.hpp"
#include "byzfl/parallel.hpp"
#include "byzfl/verify.hpp"

namespace byzfl {

namespace {

double parse_number(const std::string& param, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty() || !std::isfinite(v)) {
        throw ConfigError("sweep value \"" + text + "\" for " + param + " is not a number");
    }
    return v;
}

// Maps exceptions to exit codes; body returns the success code.
template <class Body>
int guarded(std::ostream& log, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const InvalidInput& e) {
        log << "invalid input: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const SolverFailure& e) {
        log << "solver failure: " << e.what() << " (residual " << e.residual() << ")\n";
        return kExitSolverFailure;
    } catch (const std::exception& e) {
        log << "internal failure: " << e.what() << "\n";
        return kExitSolverFailure;
    }
}

struct RunOutput {
    ExperimentSetup setup;
    ExperimentResult result;
};

RunOutput execute(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& log) {
    RunOutput out{prepare_experiment(config), {}};
    for (const auto& w : out.setup.warnings) {
        log << "warning: " << w << "\n";
    }
    RunOptions options;
    options.threads = threads_from_environment();
    out.result = run_experiment(config, out.setup, options);
    write_run_artifacts(dir, config, out.setup, out.result);
    return out;
}

std::string csv_optional(const std::optional<double>& v) {
    if (!v) {
        return {};
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (const char c : s) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
    }
    return out;
}

} // namespace

ExperimentConfig apply_sweep_value(ExperimentConfig config, const std::string& param, const std::string& value) {
    if (param == "beta") {
        const double beta = parse_number(param, value);
        if (!(beta >= 0.0 && beta <= 1.0)) {
            throw ConfigError("beta must lie in [0, 1]");
        }
        config.B = static_cast<int>(std::lround(beta * config.M));
    } else if (param == "K") {
        if (value == "auto") {
            config.steps = ConstantSteps{};
        } else {
            const double K = parse_number(param, value);
            if (K != std::floor(K) || K < 0 || K > 1e6) {
                throw ConfigError("K must be a nonnegative integer or auto");
            }
            config.steps = ConstantSteps{static_cast<int>(K)};
        }
    } else if (param == "eta") {
        config.rate = value == "auto" ? ConstantRate{} : ConstantRate{parse_number(param, value)};
    } else if (param == "aggregator") {
        config.aggregator = parse_aggregator_name(value);
    } else {
        throw ConfigError("unknown sweep parameter \"" + param + "\"; expected beta, K, eta or aggregator");
    }
    config.validate();
    return config;
}

int cmd_run(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed,
            const std::filesystem::path& out_dir, std::ostream& log) {
    return guarded(log, [&] {
        ExperimentConfig config = load_config_file(config_path);
        if (seed) {
            config.seed = *seed;
        }
        const auto out = execute(config, out_dir, log);
        const auto& last = out.result.trace.back();
        log << "completed " << out.result.trace.size() << " rounds; final optimality gap " << last.optimality_gap
            << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_sweep(const std::filesystem::path& config_path, const std::string& param,
              const std::vector<std::string>& values, const std::filesystem::path& out_dir, std::ostream& log) {
    return guarded(log, [&] {
        const ExperimentConfig base = load_config_file(config_path);
        if (values.empty()) {
            throw ConfigError("sweep needs at least one value");
        }
        std::vector<ExperimentConfig> configs;
        for (const auto& v : values) {
            configs.push_back(apply_sweep_value(base, param, v));
        }
        std::filesystem::create_directories(out_dir);
        std::string csv = "param,value,dir,final_loss,final_gap,final_dist_sq,rounds_to_gap_1e-6,final_bound1,"
                          "final_bound2\n";
        for (std::size_t i = 0; i < values.size(); ++i) {
            const std::string dir_name = sanitize(param + "_" + values[i]);
            log << "sweep " << param << " = " << values[i] << "\n";
            const auto out = execute(configs[i], out_dir / dir_name, log);
            const auto& last = out.result.trace.back();
            const auto reached = rounds_to_gap(out.result.trace, 1e-6);
            csv += param + "," + values[i] + "," + dir_name + "," + csv_optional(last.global_loss) + "," +
                   csv_optional(last.optimality_gap) + "," + csv_optional(last.dist_to_opt_sq) + "," +
                   (reached ? std::to_string(*reached) : std::string()) + "," + csv_optional(last.theorem1_bound) +
                   "," + csv_optional(last.theorem2_bound) + "\n";
        }
        std::ofstream(out_dir / "comparison.csv", std::ios::binary | std::ios::trunc) << csv;
        return static_cast<int>(kExitOk);
    });
}

int cmd_verify(const std::string& suite, std::ostream& log) {
    return guarded(log, [&] { return run_verify_suites(suite, log); });
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Byzantine-robust federated learning simulator and verification harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--seed", seed, "Master seed; overrides the config");
    run->add_option("--out", out_dir, "Output directory")->required();

    std::string param;
    std::vector<std::string> values;
    auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a parameter");
    sweep->add_option("--config", config_path, "Base experiment config (JSON)")->required();
    sweep->add_option("--param", param, "Swept parameter")
        ->required()
        ->check(CLI::IsMember({"beta", "K", "eta", "aggregator"}));
    sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
    sweep->add_option("--out", out_dir, "Output directory")->required();

    std::string suite = "all";
    auto* verify = app.add_subcommand("verify", "Run property suites with fixed seeds");
    verify->add_option("--suite", suite, "Suite to run")->check(
        CLI::IsMember({"geomed", "assumptions", "bounds", "all"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    if (*run) {
        return cmd_run(config_path, seed, out_dir, std::cerr);
    }
    if (*sweep) {
        return cmd_sweep(config_path, param, values, out_dir, std::cerr);
    }
    return cmd_verify(suite, std::cout);
}

} // namespace byzfl
