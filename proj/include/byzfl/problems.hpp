#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "byzfl/rng.hpp"
#include "byzfl/robust_aggregation.hpp"

namespace byzfl {

/// One user's samples: inputs is S x p (one row per sample), targets has S entries.
struct Dataset {
    Eigen::MatrixXd inputs;
    Eigen::VectorXd targets;

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }
};

enum class LossKind { Ridge, Logistic };

struct LossSpec {
    LossKind kind = LossKind::Ridge;
    double lambda = 0.1;
};

struct FullGradient {};
struct Minibatch {
    int batch_size = 1;
};
struct RelativeNoise {
    double delta = 0.0;
};
using GradOracleMode = std::variant<FullGradient, Minibatch, RelativeNoise>;

struct SmoothnessConstants {
    double mu = 0.0;
    double L_const = 0.0;
    double delta = 0.0;
};

struct Optimum {
    ParamVector w_star;
    double F_star = 0.0;
};

/*
 * Federated least-squares or logistic objective with an L2 term:
 *   F_m(w) = (1/S_m) sum_s f(w, x_s, y_s) + (lambda/2)|w|^2
 *   F(w)   = sum_m (S_m / sum S) F_m(w)
 * with f = 0.5 (x.w - y)^2 for ridge and log(1 + e^{x.w}) - y x.w for logistic.
 * Ridge losses and full gradients are evaluated through cached second moments.
 * When every user holds the identical dataset, global values are computed as user 0's,
 * so local and global gradients agree bitwise.
 */
class Problem {
public:
    Problem(std::vector<Dataset> users, LossSpec loss, std::optional<Dataset> test_set = std::nullopt);

    int num_users() const { return static_cast<int>(users_.size()); }
    Eigen::Index dim() const { return dim_; }
    const LossSpec& loss() const { return loss_; }
    const Dataset& user(int m) const;
    double user_weight(int m) const;
    const std::vector<double>& user_weights() const { return weights_; }
    const std::optional<Dataset>& test_set() const { return test_set_; }
    bool equal_sample_counts() const;

    double local_loss(int m, const ParamVector& w) const;
    double global_loss(const ParamVector& w) const;
    ParamVector local_gradient(int m, const ParamVector& w) const;
    ParamVector global_gradient(const ParamVector& w) const;
    /// Gradient of the sample-average loss over the listed rows of user m (plus the L2 term).
    ParamVector subset_gradient(int m, const ParamVector& w, std::span<const Eigen::Index> rows) const;

    /// Ridge only: Hessian H = sum_m weight_m X_m^T X_m / S_m + lambda I and linear term b.
    const Eigen::MatrixXd& ridge_hessian() const { return hessian_; }
    const Eigen::VectorXd& ridge_linear_term() const { return linear_; }

    /// Fraction of test samples classified correctly (logistic problems with a test set).
    std::optional<double> test_accuracy(const ParamVector& w) const;

private:
    void check_user(int m) const;
    void check_dim(const ParamVector& w) const;

    std::vector<Dataset> users_;
    LossSpec loss_;
    std::optional<Dataset> test_set_;
    Eigen::Index dim_ = 0;
    std::vector<double> weights_;
    bool homogeneous_ = false;

    // Ridge caches: per-user X^T X / S, X^T y / S, y^T y / (2S).
    std::vector<Eigen::MatrixXd> gram_;
    std::vector<Eigen::VectorXd> moment_;
    std::vector<double> half_mean_sq_target_;
    Eigen::MatrixXd hessian_;
    Eigen::VectorXd linear_;
    double constant_ = 0.0;
};

/// Synthetic users. heterogeneity = 0 gives every user the identical dataset; larger
/// values blend each user's features and ground-truth weights towards independent draws.
/// A held-out test set of S_per_user samples is drawn from the shared distribution.
Problem make_synthetic(int p, int M, int S_per_user, std::uint64_t seed, double heterogeneity, LossSpec loss);

/// Reads one user's samples from CSV: every row is features..., label. A header row is
/// skipped when its first field is not numeric.
Dataset load_user_csv(const std::filesystem::path& path);

ParamVector local_stoch_grad(const Problem& problem, int m, const ParamVector& w, const GradOracleMode& mode,
                             RngStream& rng);

void validate_oracle_mode(const Problem& problem, const GradOracleMode& mode);

/// Relative noise level delta that the oracle guarantees (0 for full and minibatch gradients).
double oracle_delta(const GradOracleMode& mode);

/// Minibatch gradients do not satisfy the bounded relative variance assumption near w*.
bool oracle_violates_assumptions(const GradOracleMode& mode);

SmoothnessConstants constants(const Problem& problem, const GradOracleMode& mode = FullGradient{});

Optimum optimum(const Problem& problem);

/// Extreme eigenvalues of a symmetric positive definite matrix by power and inverse power iteration.
struct ExtremeEigenvalues {
    double smallest = 0.0;
    double largest = 0.0;
};
ExtremeEigenvalues extreme_eigenvalues(const Eigen::MatrixXd& spd, double rel_tol = 1e-8);
double largest_eigenvalue(const Eigen::MatrixXd& symmetric_psd, double rel_tol = 1e-8);

} // namespace byzfl
