#include "byzfl/server.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "byzfl/errors.hpp"
#include "byzfl/parallel.hpp"

namespace byzfl {

namespace {

Problem build_problem(const ProblemConfig& cfg, int M) {
    const LossSpec loss{cfg.loss, cfg.lambda};
    if (cfg.csv_files.empty()) {
        return make_synthetic(cfg.p, M, cfg.samples_per_user, cfg.seed, cfg.heterogeneity, loss);
    }
    if (static_cast<int>(cfg.csv_files.size()) != M) {
        throw ConfigError("problem.csv_files lists " + std::to_string(cfg.csv_files.size()) +
                          " files but there are M = " + std::to_string(M) + " clients");
    }
    std::vector<Dataset> users;
    for (const auto& path : cfg.csv_files) {
        users.push_back(load_user_csv(path));
    }
    return Problem(std::move(users), loss);
}

} // namespace

void ExperimentConfig::validate() const {
    if (M < 1) {
        throw ConfigError("M must be >= 1");
    }
    if (B < 0 || B > M) {
        throw ConfigError("B must lie in [0, M]");
    }
    if (2 * B >= M && !override_halfplus) {
        throw ConfigError("B = " + std::to_string(B) + " violates the constraint B < M/2 (M = " + std::to_string(M) +
                          "); set override_halfplus to run it anyway");
    }
    if (rounds < 1) {
        throw ConfigError("rounds must be >= 1");
    }
    if (problem.csv_files.empty()) {
        if (problem.p < 1 || problem.samples_per_user < 1) {
            throw ConfigError("problem.p and problem.samples_per_user must be >= 1");
        }
        if (!(problem.heterogeneity >= 0.0 && problem.heterogeneity <= 1.0)) {
            throw ConfigError("problem.heterogeneity must lie in [0, 1]");
        }
        if (B > 0) {
            try {
                validate_attack(attack, problem.p);
            } catch (const InvalidInput& e) {
                throw ConfigError(std::string("attack: ") + e.what());
            }
        }
    }
    if (!(problem.lambda > 0.0) || !std::isfinite(problem.lambda)) {
        throw ConfigError("problem.lambda must be > 0");
    }
    if (const auto* gm = std::get_if<GeometricMedianAgg>(&aggregator)) {
        try {
            gm->weiszfeld.validate();
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    } else if (const auto* tm = std::get_if<TrimmedMeanAgg>(&aggregator)) {
        if (!(tm->trim_fraction >= 0.0 && tm->trim_fraction < 0.5)) {
            throw ConfigError("aggregator.trim_fraction must lie in [0, 0.5)");
        }
    }
    if (const auto* c = std::get_if<ConstantSteps>(&steps); c && c->K && *c->K < 0) {
        throw ConfigError("schedule.steps.K must be >= 0");
    }
    if (const auto* c = std::get_if<CycleSteps>(&steps)) {
        if (c->values.empty()) {
            throw ConfigError("schedule.steps.values must not be empty");
        }
        for (const int v : c->values) {
            if (v < 0) {
                throw ConfigError("schedule.steps.values must be >= 0");
            }
        }
    }
    if (const auto* c = std::get_if<ConstantRate>(&rate); c && c->eta && !(*c->eta > 0.0)) {
        throw ConfigError("schedule.rate.eta must be > 0");
    }
    if (const auto* r = std::get_if<PerClientRange>(&rate); r && !(r->low > 0.0 && r->low <= r->high)) {
        throw ConfigError("schedule.rate needs 0 < low <= high");
    }
    if (const auto* r = std::get_if<PerClientRates>(&rate)) {
        if (static_cast<int>(r->values.size()) != M) {
            throw ConfigError("schedule.rate.values needs one rate per client");
        }
        for (const double v : r->values) {
            if (!(v > 0.0)) {
                throw ConfigError("schedule.rate.values must be > 0");
            }
        }
    }
}

Schedule build_schedule(const StepsSpec& steps_spec, const RateSpec& rate_spec, const SmoothnessConstants& consts,
                        int M, int B, std::uint64_t seed, std::optional<double>* resolved_eta,
                        std::optional<int>* resolved_K) {
    Schedule schedule;
    bool constant_rate = false;
    double eta = 0.0;

    if (const auto* c = std::get_if<ConstantRate>(&rate_spec)) {
        eta = c->eta ? *c->eta : gamma_minimizing_eta(consts.mu, consts.L_const, consts.delta);
        constant_rate = true;
        schedule.rate = [eta](int, int, int) { return eta; };
    } else if (const auto* r = std::get_if<PerClientRange>(&rate_spec)) {
        const double reference = gamma_minimizing_eta(consts.mu, consts.L_const, consts.delta);
        const KeyedRng rng(seed);
        std::vector<double> rates;
        for (int m = 0; m < M; ++m) {
            auto stream = rng.stream(Purpose::Schedule, 0, static_cast<std::uint32_t>(m), 0);
            rates.push_back(reference * (r->low + (r->high - r->low) * stream.uniform()));
        }
        schedule.rate = [rates](int, int m, int) { return rates.at(static_cast<std::size_t>(m)); };
    } else {
        const auto rates = std::get<PerClientRates>(rate_spec).values;
        schedule.rate = [rates](int, int m, int) { return rates.at(static_cast<std::size_t>(m)); };
    }

    bool constant_steps = false;
    int K = 0;
    if (const auto* c = std::get_if<ConstantSteps>(&steps_spec)) {
        if (c->K) {
            K = *c->K;
        } else {
            if (!constant_rate) {
                throw ConfigError("schedule.steps.K = \"auto\" needs a constant learning rate");
            }
            if (2 * B >= M) {
                throw ConfigError("schedule.steps.K = \"auto\" needs B < M/2");
            }
            const double g = gamma(eta, consts.mu, consts.L_const, consts.delta);
            if (classify_gamma(g) != GammaClass::Contractive) {
                throw ConfigError("schedule.steps.K = \"auto\" needs gamma in (0, 1); got gamma = " + std::to_string(g));
            }
            K = min_K(g, static_cast<double>(B) / static_cast<double>(M));
        }
        constant_steps = true;
        schedule.steps = [K](int) { return K; };
    } else if (const auto* c = std::get_if<CycleSteps>(&steps_spec)) {
        const auto values = c->values;
        schedule.steps = [values](int t) {
            const auto n = static_cast<int>(values.size());
            return values[static_cast<std::size_t>(((t - 1) % n + n) % n)];
        };
    } else if (const auto* d = std::get_if<FloorDecaySteps>(&steps_spec)) {
        schedule.steps = [K1 = d->K1, E = d->E](int t) { return floor_decay_steps(t, K1, E); };
    } else {
        const auto& lin = std::get<LinearDecaySteps>(steps_spec);
        schedule.steps = [K1 = lin.K1, E = lin.E](int t) { return linear_decay_steps(t, K1, E); };
    }

    schedule.uniform = constant_rate && constant_steps;
    if (resolved_eta) {
        *resolved_eta = constant_rate ? std::optional<double>(eta) : std::nullopt;
    }
    if (resolved_K) {
        *resolved_K = constant_steps ? std::optional<int>(K) : std::nullopt;
    }
    return schedule;
}

ExperimentSetup prepare_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentSetup setup(build_problem(config.problem, config.M));
    const Problem& problem = setup.problem;
    if (problem.num_users() != config.M) {
        throw ConfigError("problem has " + std::to_string(problem.num_users()) + " users but M = " +
                          std::to_string(config.M));
    }
    try {
        validate_oracle_mode(problem, config.oracle);
        validate_attack(config.attack, problem.dim());
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }

    setup.consts = constants(problem, config.oracle);
    setup.opt = optimum(problem);
    setup.schedule = build_schedule(config.steps, config.rate, setup.consts, config.M, config.B, config.seed,
                                    &setup.uniform_eta, &setup.uniform_K);

    // Byzantine clients take the highest ids so honest ids stay stable across beta sweeps.
    for (int m = 0; m < config.M; ++m) {
        ClientSpec spec{m, std::nullopt};
        if (m >= config.M - config.B) {
            spec.attack = config.attack;
        } else {
            setup.honest_ids.push_back(m);
        }
        setup.clients.push_back(std::move(spec));
    }

    if (config.init == InitKind::Zero) {
        setup.w1 = ParamVector::Zero(problem.dim());
    } else {
        auto stream = KeyedRng(config.seed).stream(Purpose::InitialPoint);
        setup.w1.resize(problem.dim());
        for (Eigen::Index j = 0; j < setup.w1.size(); ++j) {
            setup.w1[j] = stream.normal();
        }
    }
    setup.w1_gap_sq = (setup.w1 - setup.opt.w_star).squaredNorm();

    if (!problem.equal_sample_counts()) {
        setup.warnings.push_back(
            "users hold different sample counts: the unweighted geometric median need not converge to w*");
    }
    if (oracle_violates_assumptions(config.oracle)) {
        setup.warnings.push_back("minibatch gradients do not satisfy the bounded relative variance assumption; "
                                 "theory bounds use delta = 0 and are not guaranteed");
    }
    if (!std::holds_alternative<GeometricMedianAgg>(config.aggregator) && config.B > 0) {
        setup.warnings.push_back("theory bounds assume geometric-median aggregation; they are reported for "
                                 "reference only");
    }
    if (2 * config.B >= config.M) {
        setup.warnings.push_back("B >= M/2: no robustness guarantee; theory bounds are omitted");
        return setup;
    }

    if (setup.schedule.uniform && setup.uniform_K && *setup.uniform_K >= 1 && setup.consts.mu > 0.0) {
        TheoryParams params;
        params.eta = *setup.uniform_eta;
        params.mu = setup.consts.mu;
        params.L_const = setup.consts.L_const;
        params.delta = setup.consts.delta;
        params.M = config.M;
        params.B = config.B;
        params.K = *setup.uniform_K;
        params.w1_gap_sq = setup.w1_gap_sq;
        setup.theorem1 = theorem1_series(config.rounds, params);
    }
    const ScheduleBoundInputs inputs{setup.schedule,      setup.honest_ids,     setup.consts.mu,
                                     setup.consts.L_const, setup.consts.delta, config.M,
                                     config.B,             setup.consts.L_const, setup.w1_gap_sq};
    setup.theorem2 = theorem2_series(config.rounds, inputs);
    if (!setup.theorem2->nonpositive_rounds.empty()) {
        setup.warnings.push_back("some per-step factors gamma_m^{i,k} are <= 0; the general-schedule bound "
                                 "assumes nonnegative factors");
    }
    return setup;
}

RoundOutcome run_round(const RoundContext& ctx, const ParamVector& w_t, int t) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t M = ctx.clients.size();
    for (std::size_t i = 0; i < M; ++i) {
        if (ctx.clients[i].id < 0 || static_cast<std::size_t>(ctx.clients[i].id) >= M) {
            throw InvalidInput("client ids must be a permutation of 0..M-1");
        }
    }

    RoundOutcome out;
    out.uploads.assign(M, ParamVector());
    std::vector<char> filled(M, 0);
    for (const auto& c : ctx.clients) {
        if (filled[static_cast<std::size_t>(c.id)]++) {
            throw InvalidInput("duplicate client id " + std::to_string(c.id));
        }
    }

    parallel_for(M, ctx.threads, [&](std::size_t i) {
        const ClientSpec& client = ctx.clients[i];
        const auto id = static_cast<std::size_t>(client.id);
        if (client.honest()) {
            out.uploads[id] =
                honest_local_update(ctx.problem, client.id, w_t, t, ctx.schedule, ctx.oracle, ctx.rng);
        } else {
            auto stream = ctx.rng.stream(Purpose::Attack, static_cast<std::uint32_t>(t),
                                         static_cast<std::uint32_t>(client.id), 0);
            const AttackContext attack_ctx{w_t, w_t, ctx.problem.dim()};
            out.uploads[id] = byzantine_message(*client.attack, attack_ctx, stream);
        }
    });

    const auto agg = aggregate(ctx.aggregator, out.uploads);
    out.w_next = agg.value;

    TraceRecord& r = out.record;
    r.t = t;
    r.global_loss = ctx.problem.global_loss(out.w_next);
    r.optimality_gap = r.global_loss - ctx.opt.F_star;
    r.dist_to_opt_sq = (out.w_next - ctx.opt.w_star).squaredNorm();
    const auto index = static_cast<std::size_t>(t);
    if (ctx.theorem1 && index < ctx.theorem1->size()) {
        r.theorem1_bound = (*ctx.theorem1)[index];
    }
    if (ctx.theorem2 && index < ctx.theorem2->size()) {
        r.theorem2_bound = (*ctx.theorem2)[index];
    }
    r.agg_iterations = agg.iterations;
    r.agg_residual = agg.residual;
    r.agg_converged = agg.converged;
    r.test_accuracy = ctx.problem.test_accuracy(out.w_next);
    r.assumption_violating = oracle_violates_assumptions(ctx.oracle);
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    const auto setup = prepare_experiment(config);
    return run_experiment(config, setup, options);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentSetup& setup,
                                const RunOptions& options) {
    const KeyedRng rng(config.seed);
    const RoundContext ctx{setup.problem,
                           setup.clients,
                           config.aggregator,
                           setup.schedule,
                           config.oracle,
                           rng,
                           setup.opt,
                           setup.theorem1 ? &setup.theorem1->values : nullptr,
                           setup.theorem2 ? &setup.theorem2->values : nullptr,
                           resolve_threads(options.threads)};
    ExperimentResult result;
    result.warnings = setup.warnings;
    result.trace.reserve(static_cast<std::size_t>(config.rounds));
    ParamVector w = setup.w1;
    for (int t = 1; t <= config.rounds; ++t) {
        auto outcome = run_round(ctx, w, t);
        w = std::move(outcome.w_next);
        result.trace.push_back(outcome.record);
    }
    result.final_w = std::move(w);
    return result;
}

} // namespace byzfl
