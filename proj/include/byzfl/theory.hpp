#pragma once

#include <span>
#include <vector>

#include "byzfl/clients.hpp"

namespace byzfl {

/// Per-step contraction factor of the squared distance to w*: 1 - 2 eta mu + eta^2 L^2 (1 + delta^2).
double gamma(double eta, double mu, double L_const, double delta);

enum class GammaClass { NonPositive, Contractive, NonContractive };
GammaClass classify_gamma(double gamma_val);

/// Robustness amplification (2 - 2 beta) / (1 - 2 beta); defined on [0, 1/2).
double c_beta(double beta);

struct EtaRange {
    double lower = 0.0; // open
    double upper = 0.0; // open
};

/// Learning rates with gamma < 1: (0, 2 mu / (L^2 (1 + delta^2))).
EtaRange stable_eta_range(double mu, double L_const, double delta);

/// The learning rate minimizing gamma, mu / (L^2 (1 + delta^2)), i.e. the midpoint of the stable range.
double gamma_minimizing_eta(double mu, double L_const, double delta);

/// gamma^K C_beta^2 < 1, evaluated exactly as written.
bool round_contracts(double gamma_val, int K, double beta);

/// Smallest K with gamma^K C_beta^2 < 1. Throws InvalidInput unless 0 < gamma < 1.
int min_K(double gamma_val, double beta);

struct TheoryParams {
    double eta = 0.0;
    double mu = 0.0;
    double L_const = 0.0;
    double delta = 0.0;
    int M = 1;
    int B = 0;
    int K = 1;
    double w1_gap_sq = 0.0;

    double beta() const { return static_cast<double>(B) / static_cast<double>(M); }
    void validate() const;
};

/// gamma^K C_beta^2: the per-round factor of the uniform-schedule envelope.
double contraction_factor(const TheoryParams& params);

/// (L/2) (gamma^K)^t C_beta^{2t} |w1 - w*|^2, the envelope on F(w^{t+1}) - F(w*).
double theorem1_bound(int t, const TheoryParams& params);

struct BoundSeries {
    std::vector<double> values; // index t = 0..T
    double contraction_factor = 0.0;
};
/// values[0] = (L/2) |w1 - w*|^2 and values[t + 1] = contraction_factor * values[t] exactly.
BoundSeries theorem1_series(int T, const TheoryParams& params);

/// Problem-side inputs of the general-schedule envelope.
struct ScheduleBoundInputs {
    const Schedule& schedule;
    std::span<const int> honest_ids;
    double mu = 0.0;
    double L_const = 0.0;
    double delta = 0.0;
    int M = 1;
    int B = 0;
    double L_prefactor = 0.0;
    double w1_gap_sq = 0.0;
};

/// prod_{k=1}^{K^i} gamma_m^{i,k} for one honest client in round i.
double client_round_product(int i, int m, const Schedule& schedule, double mu, double L_const, double delta);

/// (C_beta^2 / (M - B)) * sum_m products_m, written with the coefficient precomputed.
double round_multiplier(std::span<const double> honest_products, double coefficient);

struct Theorem2Series {
    std::vector<double> values; // index t = 0..T
    /// Round indices (1-based) in which some gamma_m^{i,k} was <= 0.
    std::vector<int> nonpositive_rounds;
    std::vector<double> multipliers; // index i = 1..T stored at i - 1
};

Theorem2Series theorem2_series(int T, const ScheduleBoundInputs& in);

struct Theorem2Bound {
    double value = 0.0;
    bool nonpositive_factor = false;
};
Theorem2Bound theorem2_bound(int t, const ScheduleBoundInputs& in);

/// sum_m prod_k gamma_m^{i,k} < (M - B) / C_beta^2.
bool zero_gap_holds(double honest_product_sum, int M, int B);
bool zero_gap_condition(int i, const ScheduleBoundInputs& in);

} // namespace byzfl
