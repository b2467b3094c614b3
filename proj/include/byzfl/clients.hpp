#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "byzfl/problems.hpp"
#include "byzfl/rng.hpp"
#include "byzfl/robust_aggregation.hpp"

namespace byzfl {

/// Local schedule: number of local steps K^t in round t and learning rate for (round t, client m, step k).
struct Schedule {
    std::function<int(int t)> steps;
    std::function<double(int t, int m, int k)> rate;
    /// Set when steps and rate are constant in all arguments.
    bool uniform = false;

    static Schedule constant(int K, double eta);
};

/// K^t = max(0, K1 (1 - floor(t / E))): K1 for t < E and 0 from t = E on.
int floor_decay_steps(int t, int K1, int E);
/// K^t = max(1, round(K1 (1 - t / E))): a linear decay alternative.
int linear_decay_steps(int t, int K1, int E);

enum class MeanMode { Zero, HonestCenter };

struct GaussianNoiseAttack {
    MeanMode mean_mode = MeanMode::Zero;
    double sigma = 10.0;
};
struct SignFlipAttack {
    double scale = 1.0;
};
struct ZeroVectorAttack {};
struct FixedVectorAttack {
    ParamVector v;
};
using AttackKind = std::variant<GaussianNoiseAttack, SignFlipAttack, ZeroVectorAttack, FixedVectorAttack>;

struct ClientSpec {
    int id = 0;
    /// Empty for honest clients.
    std::optional<AttackKind> attack;

    bool honest() const { return !attack.has_value(); }
};

struct AttackContext {
    const ParamVector& w_t;
    const ParamVector& honest_center;
    Eigen::Index p;
};

/// Record of one honest local update: every iterate w^{t,k} and every applied step eta * g.
struct LocalUpdateTrace {
    ParamVector z;
    std::vector<ParamVector> iterates;
    std::vector<ParamVector> steps;
};

/*
 * Runs K^t sequential SGD steps from w_t and returns z = w^{t,K^t}. The k-th
 * gradient draws from the stream (LocalGradient, t, m, k), so the result
 * depends only on (seed, t, m) and never on evaluation order.
 */
ParamVector honest_local_update(const Problem& problem, int m, const ParamVector& w_t, int t,
                                const Schedule& schedule, const GradOracleMode& mode, const KeyedRng& rng);

LocalUpdateTrace honest_local_update_traced(const Problem& problem, int m, const ParamVector& w_t, int t,
                                            const Schedule& schedule, const GradOracleMode& mode,
                                            const KeyedRng& rng);

ParamVector byzantine_message(const AttackKind& attack, const AttackContext& context, RngStream& rng);

void validate_attack(const AttackKind& attack, Eigen::Index p);

} // namespace byzfl
