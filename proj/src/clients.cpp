#include "byzfl/clients.hpp"

#include <cmath>
#include <string>

#include "byzfl/errors.hpp"

namespace byzfl {

Schedule Schedule::constant(int K, double eta) {
    if (K < 0) {
        throw InvalidInput("local step count K must be >= 0");
    }
    if (!(eta > 0.0)) {
        throw InvalidInput("learning rate must be > 0");
    }
    Schedule s;
    s.steps = [K](int) { return K; };
    s.rate = [eta](int, int, int) { return eta; };
    s.uniform = true;
    return s;
}

int floor_decay_steps(int t, int K1, int E) {
    if (E < 1) {
        throw InvalidInput("decay horizon E must be >= 1");
    }
    return std::max(0, K1 * (1 - t / E));
}

int linear_decay_steps(int t, int K1, int E) {
    if (E < 1) {
        throw InvalidInput("decay horizon E must be >= 1");
    }
    const double k = std::round(static_cast<double>(K1) * (1.0 - static_cast<double>(t) / static_cast<double>(E)));
    return std::max(1, static_cast<int>(k));
}

namespace {

template <class OnStep>
ParamVector run_local_steps(const Problem& problem, int m, const ParamVector& w_t, int t, const Schedule& schedule,
                            const GradOracleMode& mode, const KeyedRng& rng, OnStep on_step) {
    const int steps = schedule.steps(t);
    if (steps < 0) {
        throw InvalidInput("schedule returned a negative step count for round " + std::to_string(t));
    }
    ParamVector w = w_t;
    for (int k = 1; k <= steps; ++k) {
        const double eta = schedule.rate(t, m, k);
        if (!(eta > 0.0)) {
            throw InvalidInput("schedule returned a non-positive learning rate");
        }
        auto stream = rng.stream(Purpose::LocalGradient, static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(m),
                                 static_cast<std::uint32_t>(k));
        ParamVector step = eta * local_stoch_grad(problem, m, w, mode, stream);
        w -= step;
        on_step(w, step);
    }
    return w;
}

} // namespace

ParamVector honest_local_update(const Problem& problem, int m, const ParamVector& w_t, int t,
                                const Schedule& schedule, const GradOracleMode& mode, const KeyedRng& rng) {
    return run_local_steps(problem, m, w_t, t, schedule, mode, rng, [](const ParamVector&, const ParamVector&) {});
}

LocalUpdateTrace honest_local_update_traced(const Problem& problem, int m, const ParamVector& w_t, int t,
                                            const Schedule& schedule, const GradOracleMode& mode,
                                            const KeyedRng& rng) {
    LocalUpdateTrace trace;
    trace.iterates.push_back(w_t);
    trace.z = run_local_steps(problem, m, w_t, t, schedule, mode, rng,
                              [&](const ParamVector& w, const ParamVector& step) {
                                  trace.iterates.push_back(w);
                                  trace.steps.push_back(step);
                              });
    return trace;
}

void validate_attack(const AttackKind& attack, Eigen::Index p) {
    if (const auto* g = std::get_if<GaussianNoiseAttack>(&attack)) {
        if (!(g->sigma >= 0.0) || !std::isfinite(g->sigma)) {
            throw InvalidInput("Gaussian attack sigma must be a finite value >= 0");
        }
    } else if (const auto* s = std::get_if<SignFlipAttack>(&attack)) {
        if (!std::isfinite(s->scale)) {
            throw InvalidInput("sign-flip scale must be finite");
        }
    } else if (const auto* f = std::get_if<FixedVectorAttack>(&attack)) {
        if (f->v.size() != p) {
            throw InvalidInput("fixed attack vector has dimension " + std::to_string(f->v.size()) + ", expected " +
                               std::to_string(p));
        }
        if (!f->v.allFinite()) {
            throw InvalidInput("fixed attack vector must be finite");
        }
    }
}

ParamVector byzantine_message(const AttackKind& attack, const AttackContext& context, RngStream& rng) {
    return std::visit(
        [&](const auto& a) -> ParamVector {
            using A = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<A, ZeroVectorAttack>) {
                return ParamVector::Zero(context.p);
            } else if constexpr (std::is_same_v<A, FixedVectorAttack>) {
                return a.v;
            } else if constexpr (std::is_same_v<A, SignFlipAttack>) {
                return -a.scale * context.w_t;
            } else {
                ParamVector out = a.mean_mode == MeanMode::Zero ? ParamVector::Zero(context.p)
                                                                : ParamVector(context.honest_center);
                for (Eigen::Index j = 0; j < context.p; ++j) {
                    out[j] += a.sigma * rng.normal();
                }
                return out;
            }
        },
        attack);
}

} // namespace byzfl
