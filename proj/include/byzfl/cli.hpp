#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "byzfl/server.hpp"

namespace byzfl {

/// Process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitPropertyFailure = 1,
    kExitConfigError = 2,
    kExitSolverFailure = 3,
};

int cmd_run(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed,
            const std::filesystem::path& out_dir, std::ostream& log);

/// param is beta, K, eta or aggregator. Writes one run directory per value and comparison.csv.
int cmd_sweep(const std::filesystem::path& config_path, const std::string& param,
              const std::vector<std::string>& values, const std::filesystem::path& out_dir, std::ostream& log);

int cmd_verify(const std::string& suite, std::ostream& log);

/// Returns a copy of config with one swept parameter set from its textual value.
ExperimentConfig apply_sweep_value(ExperimentConfig config, const std::string& param, const std::string& value);

/// Parses the command line (subcommands run, sweep, verify) and dispatches.
int run_cli(int argc, char** argv);

} // namespace byzfl
