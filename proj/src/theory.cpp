#include "byzfl/theory.hpp"

#include <cmath>
#include <string>

#include "byzfl/errors.hpp"

namespace byzfl {

double gamma(double eta, double mu, double L_const, double delta) {
    return 1.0 - 2.0 * eta * mu + eta * eta * L_const * L_const * (1.0 + delta * delta);
}

GammaClass classify_gamma(double gamma_val) {
    if (gamma_val <= 0.0) {
        return GammaClass::NonPositive;
    }
    return gamma_val < 1.0 ? GammaClass::Contractive : GammaClass::NonContractive;
}

double c_beta(double beta) {
    if (!(beta >= 0.0 && beta < 0.5)) {
        throw InvalidInput("beta = " + std::to_string(beta) + " is outside [0, 1/2): C_beta has a pole at one half");
    }
    return (2.0 - 2.0 * beta) / (1.0 - 2.0 * beta);
}

EtaRange stable_eta_range(double mu, double L_const, double delta) {
    if (!(mu > 0.0 && mu <= L_const)) {
        throw InvalidInput("stable learning rates need 0 < mu <= L");
    }
    return {0.0, 2.0 * mu / (L_const * L_const * (1.0 + delta * delta))};
}

double gamma_minimizing_eta(double mu, double L_const, double delta) {
    return 0.5 * stable_eta_range(mu, L_const, delta).upper;
}

bool round_contracts(double gamma_val, int K, double beta) {
    const double c = c_beta(beta);
    return std::pow(gamma_val, K) * c * c < 1.0;
}

int min_K(double gamma_val, double beta) {
    if (!(gamma_val > 0.0 && gamma_val < 1.0)) {
        throw InvalidInput("gamma = " + std::to_string(gamma_val) + " is outside (0, 1): no K yields contraction");
    }
    const double threshold = -2.0 * std::log(c_beta(beta)) / std::log(gamma_val);
    int K = std::max(1, static_cast<int>(std::floor(threshold)) + 1);
    // The closed form can be off by one near integral thresholds; settle it on the predicate itself.
    while (!round_contracts(gamma_val, K, beta)) {
        ++K;
    }
    while (K > 1 && round_contracts(gamma_val, K - 1, beta)) {
        --K;
    }
    return K;
}

void TheoryParams::validate() const {
    if (!(eta > 0.0)) {
        throw InvalidInput("eta must be > 0");
    }
    if (!(mu > 0.0 && mu <= L_const)) {
        throw InvalidInput("theory needs 0 < mu <= L");
    }
    if (!(delta >= 0.0)) {
        throw InvalidInput("delta must be >= 0");
    }
    if (M < 1 || B < 0 || 2 * B >= M) {
        throw InvalidInput("theory needs M >= 1 and 0 <= B < M/2");
    }
    if (K < 1) {
        throw InvalidInput("theory needs K >= 1");
    }
    if (!(w1_gap_sq >= 0.0)) {
        throw InvalidInput("|w1 - w*|^2 must be >= 0");
    }
}

double contraction_factor(const TheoryParams& params) {
    const double c = c_beta(params.beta());
    return std::pow(gamma(params.eta, params.mu, params.L_const, params.delta), params.K) * c * c;
}

double theorem1_bound(int t, const TheoryParams& params) {
    params.validate();
    if (t < 0) {
        throw InvalidInput("round index must be >= 0");
    }
    return 0.5 * params.L_const * std::pow(contraction_factor(params), t) * params.w1_gap_sq;
}

BoundSeries theorem1_series(int T, const TheoryParams& params) {
    BoundSeries series;
    series.contraction_factor = contraction_factor(params);
    series.values.push_back(theorem1_bound(0, params));
    for (int t = 1; t <= T; ++t) {
        series.values.push_back(series.contraction_factor * series.values.back());
    }
    return series;
}

double client_round_product(int i, int m, const Schedule& schedule, double mu, double L_const, double delta) {
    double product = 1.0;
    const int steps = schedule.steps(i);
    for (int k = 1; k <= steps; ++k) {
        product *= gamma(schedule.rate(i, m, k), mu, L_const, delta);
    }
    return product;
}

namespace {

// Neumaier-compensated sum: the multiplier is compounded over many rounds, so summation
// error must not grow with the number of honest clients.
double compensated_sum(std::span<const double> values) {
    double sum = 0.0;
    double carry = 0.0;
    for (const double v : values) {
        const double next = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - next) + v : (v - next) + sum;
        sum = next;
    }
    return sum + carry;
}

} // namespace

double round_multiplier(std::span<const double> honest_products, double coefficient) {
    return coefficient * compensated_sum(honest_products);
}

namespace {

struct RoundProducts {
    std::vector<double> products;
    bool nonpositive = false;
};

RoundProducts round_products(int i, const ScheduleBoundInputs& in) {
    RoundProducts out;
    const int steps = in.schedule.steps(i);
    for (const int m : in.honest_ids) {
        double product = 1.0;
        for (int k = 1; k <= steps; ++k) {
            const double g = gamma(in.schedule.rate(i, m, k), in.mu, in.L_const, in.delta);
            out.nonpositive = out.nonpositive || g <= 0.0;
            product *= g;
        }
        out.products.push_back(product);
    }
    return out;
}

void check_inputs(const ScheduleBoundInputs& in) {
    if (in.M < 1 || in.B < 0 || 2 * in.B >= in.M) {
        throw InvalidInput("schedule bound needs M >= 1 and 0 <= B < M/2");
    }
    if (static_cast<int>(in.honest_ids.size()) != in.M - in.B) {
        throw InvalidInput("schedule bound needs exactly M - B honest client ids");
    }
}

} // namespace

Theorem2Series theorem2_series(int T, const ScheduleBoundInputs& in) {
    check_inputs(in);
    const double c = c_beta(static_cast<double>(in.B) / static_cast<double>(in.M));
    const double coefficient = c * c / static_cast<double>(in.M - in.B);
    Theorem2Series series;
    double value = 0.5 * in.L_prefactor * in.w1_gap_sq;
    series.values.push_back(value);
    for (int i = 1; i <= T; ++i) {
        const auto round = round_products(i, in);
        if (round.nonpositive) {
            series.nonpositive_rounds.push_back(i);
        }
        const double multiplier = round_multiplier(round.products, coefficient);
        series.multipliers.push_back(multiplier);
        value *= multiplier;
        series.values.push_back(value);
    }
    return series;
}

Theorem2Bound theorem2_bound(int t, const ScheduleBoundInputs& in) {
    if (t < 0) {
        throw InvalidInput("round index must be >= 0");
    }
    const auto series = theorem2_series(t, in);
    return {series.values.back(), !series.nonpositive_rounds.empty()};
}

bool zero_gap_holds(double honest_product_sum, int M, int B) {
    const double c = c_beta(static_cast<double>(B) / static_cast<double>(M));
    return honest_product_sum < static_cast<double>(M - B) / (c * c);
}

bool zero_gap_condition(int i, const ScheduleBoundInputs& in) {
    check_inputs(in);
    return zero_gap_holds(compensated_sum(round_products(i, in).products), in.M, in.B);
}

} // namespace byzfl
