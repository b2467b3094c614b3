#include "byzfl/artifacts.hpp"

#include <cstdio>
#include <fstream>

#include "byzfl/config.hpp"
#include "byzfl/errors.hpp"

namespace byzfl {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_optional(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

} // namespace

json trace_record_json(const TraceRecord& r) {
    return {{"t", r.t},
            {"global_loss", r.global_loss},
            {"optimality_gap", r.optimality_gap},
            {"dist_to_opt_sq", r.dist_to_opt_sq},
            {"theorem1_bound", optional_number(r.theorem1_bound)},
            {"theorem2_bound", optional_number(r.theorem2_bound)},
            {"agg_iterations", r.agg_iterations},
            {"agg_residual", r.agg_residual},
            {"agg_converged", r.agg_converged},
            {"test_accuracy", optional_number(r.test_accuracy)},
            {"assumption_violating", r.assumption_violating}};
}

std::string summary_csv(const std::vector<TraceRecord>& trace) {
    std::string out = "t,loss,gap,bound1,bound2,accuracy\n";
    for (const auto& r : trace) {
        out += std::to_string(r.t) + "," + format_number(r.global_loss) + "," + format_number(r.optimality_gap) + "," +
               format_optional(r.theorem1_bound) + "," + format_optional(r.theorem2_bound) + "," +
               format_optional(r.test_accuracy) + "\n";
    }
    return out;
}

json derived_json(const ExperimentConfig& config, const ExperimentSetup& setup) {
    const auto& w = setup.opt.w_star;
    json d = {{"mu", setup.consts.mu},
              {"L", setup.consts.L_const},
              {"delta", setup.consts.delta},
              {"beta", static_cast<double>(config.B) / static_cast<double>(config.M)},
              {"w_star", std::vector<double>(w.data(), w.data() + w.size())},
              {"F_star", setup.opt.F_star},
              {"w1_gap_sq", setup.w1_gap_sq},
              {"eta", optional_number(setup.uniform_eta)},
              {"K", setup.uniform_K ? json(*setup.uniform_K) : json(nullptr)},
              {"uniform_schedule", setup.schedule.uniform},
              {"warnings", setup.warnings}};
    if (2 * config.B < config.M) {
        d["c_beta"] = c_beta(d["beta"].get<double>());
    } else {
        d["c_beta"] = nullptr;
    }
    if (setup.uniform_eta) {
        d["gamma"] = gamma(*setup.uniform_eta, setup.consts.mu, setup.consts.L_const, setup.consts.delta);
    } else {
        d["gamma"] = nullptr;
    }
    d["contraction_factor"] = setup.theorem1 ? json(setup.theorem1->contraction_factor) : json(nullptr);
    if (setup.theorem2) {
        d["theorem2_nonpositive_rounds"] = setup.theorem2->nonpositive_rounds;
    }
    return d;
}

void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const ExperimentSetup& setup, const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    std::string trace;
    for (const auto& r : result.trace) {
        trace += trace_record_json(r).dump() + "\n";
    }
    write_file(dir / "trace.jsonl", trace);
    write_file(dir / "summary.csv", summary_csv(result.trace));
    write_file(dir / "config.resolved.json", to_json(config).dump(2) + "\n");
    write_file(dir / "derived.json", derived_json(config, setup).dump(2) + "\n");
    std::string timing = "t,wall_time_s\n";
    for (const auto& r : result.trace) {
        timing += std::to_string(r.t) + "," + format_number(r.wall_time_s) + "\n";
    }
    write_file(dir / "timing.csv", timing);
}

std::optional<int> rounds_to_gap(const std::vector<TraceRecord>& trace, double threshold) {
    for (const auto& r : trace) {
        if (r.optimality_gap <= threshold) {
            return r.t;
        }
    }
    return std::nullopt;
}

} // namespace byzfl
