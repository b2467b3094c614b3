#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "byzfl/server.hpp"

namespace byzfl {

/// One trace line. Every field is present; absent optional values are null. Wall time is
/// excluded so that traces of equal runs are byte-identical (it goes to timing.csv).
nlohmann::json trace_record_json(const TraceRecord& record);

/// CSV with header t,loss,gap,bound1,bound2,accuracy and one row per record; absent values are empty.
std::string summary_csv(const std::vector<TraceRecord>& trace);

/// Quantities resolved before round 1: constants, optimum, schedule, warnings.
nlohmann::json derived_json(const ExperimentConfig& config, const ExperimentSetup& setup);

/// Writes trace.jsonl, summary.csv, config.resolved.json, derived.json and timing.csv into dir.
void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const ExperimentSetup& setup, const ExperimentResult& result);

/// First round whose optimality gap is at or below threshold, if any.
std::optional<int> rounds_to_gap(const std::vector<TraceRecord>& trace, double threshold);

} // namespace byzfl
