#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "byzfl/server.hpp"

namespace byzfl {

/// Parses an experiment config. Missing fields take their defaults; unknown keys,
/// wrong types and out-of-range values throw ConfigError. The byzantine count may be
/// given directly ("byzantine") or as a fraction of M ("beta", rounded to nearest).
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Fully resolved form: every field present, so parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);

ExperimentConfig load_config_file(const std::filesystem::path& path);

/// Parses an aggregator name as used on the command line: geomed, mean, coordinate_median,
/// trimmed_mean or trimmed_mean:FRACTION.
AggregatorSpec parse_aggregator_name(const std::string& name);

std::string aggregator_name(const AggregatorSpec& spec);

} // namespace byzfl
