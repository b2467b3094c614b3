#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "byzfl/clients.hpp"
#include "byzfl/problems.hpp"
#include "byzfl/robust_aggregation.hpp"
#include "byzfl/theory.hpp"

namespace byzfl {

struct ProblemConfig {
    LossKind loss = LossKind::Ridge;
    double lambda = 1.0;
    int p = 10;
    int samples_per_user = 200;
    double heterogeneity = 0.0;
    std::uint64_t seed = 1;
    /// One CSV per user; when non-empty it replaces the synthetic generator.
    std::vector<std::string> csv_files;
};

/// K^t: a constant (nullopt K = smallest K with contraction), a repeating cycle, or a decay rule.
struct ConstantSteps {
    std::optional<int> K;
};
struct CycleSteps {
    std::vector<int> values;
};
struct FloorDecaySteps {
    int K1 = 8;
    int E = 4000;
};
struct LinearDecaySteps {
    int K1 = 8;
    int E = 4000;
};
using StepsSpec = std::variant<ConstantSteps, CycleSteps, FloorDecaySteps, LinearDecaySteps>;

/// eta_m^{t,k}: a constant (nullopt = gamma-minimizing rate), per-client draws from
/// [low, high] times the gamma-minimizing rate, or explicit per-client values.
struct ConstantRate {
    std::optional<double> eta;
};
struct PerClientRange {
    double low = 0.5;
    double high = 1.0;
};
struct PerClientRates {
    std::vector<double> values;
};
using RateSpec = std::variant<ConstantRate, PerClientRange, PerClientRates>;

enum class InitKind { Zero, Random };

struct ExperimentConfig {
    ProblemConfig problem;
    int M = 50;
    int B = 10;
    AttackKind attack = GaussianNoiseAttack{};
    AggregatorSpec aggregator = GeometricMedianAgg{};
    StepsSpec steps = ConstantSteps{};
    RateSpec rate = ConstantRate{};
    GradOracleMode oracle = FullGradient{};
    int rounds = 200;
    std::uint64_t seed = 1;
    InitKind init = InitKind::Zero;
    bool override_halfplus = false;

    /// Throws ConfigError for inconsistent settings, including B >= M/2 without the override.
    void validate() const;
};

struct TraceRecord {
    int t = 0;
    double global_loss = 0.0;
    double optimality_gap = 0.0;
    double dist_to_opt_sq = 0.0;
    std::optional<double> theorem1_bound;
    std::optional<double> theorem2_bound;
    int agg_iterations = 0;
    double agg_residual = 0.0;
    bool agg_converged = true;
    double wall_time_s = 0.0;
    std::optional<double> test_accuracy;
    bool assumption_violating = false;
};

/// Everything resolved from a config before round 1.
struct ExperimentSetup {
    explicit ExperimentSetup(Problem p) : problem(std::move(p)) {}

    Problem problem;
    SmoothnessConstants consts;
    Optimum opt;
    Schedule schedule;
    std::optional<double> uniform_eta;
    std::optional<int> uniform_K;
    std::vector<ClientSpec> clients;
    std::vector<int> honest_ids;
    ParamVector w1;
    double w1_gap_sq = 0.0;
    std::optional<BoundSeries> theorem1;
    std::optional<Theorem2Series> theorem2;
    std::vector<std::string> warnings;
};

ExperimentSetup prepare_experiment(const ExperimentConfig& config);

/// Builds the per-client schedule described by the steps and rate specs.
Schedule build_schedule(const StepsSpec& steps, const RateSpec& rate, const SmoothnessConstants& consts, int M,
                        int B, std::uint64_t seed, std::optional<double>* resolved_eta = nullptr,
                        std::optional<int>* resolved_K = nullptr);

struct RoundContext {
    const Problem& problem;
    std::span<const ClientSpec> clients;
    const AggregatorSpec& aggregator;
    const Schedule& schedule;
    const GradOracleMode& oracle;
    const KeyedRng& rng;
    const Optimum& opt;
    const std::vector<double>* theorem1 = nullptr;
    const std::vector<double>* theorem2 = nullptr;
    int threads = 1;
};

struct RoundOutcome {
    ParamVector w_next;
    TraceRecord record;
    std::vector<ParamVector> uploads; // indexed by client id
};

/// One protocol round: broadcast w_t, collect every upload, aggregate in client-id order.
RoundOutcome run_round(const RoundContext& ctx, const ParamVector& w_t, int t);

struct RunOptions {
    /// 0 = one per hardware thread, 1 = serial.
    int threads = 1;
};

struct ExperimentResult {
    std::vector<TraceRecord> trace;
    ParamVector final_w;
    std::vector<std::string> warnings;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentSetup& setup,
                                const RunOptions& options = {});

} // namespace byzfl
