#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace byzfl {

/// A p-dimensional model parameter or uploaded message.
using ParamVector = Eigen::VectorXd;

struct WeiszfeldConfig {
    double tol = 1e-10;
    int max_iters = 1000;
    /// Floor on per-point distances in the weights, relative to the input scale.
    double smoothing = 1e-10;

    void validate() const;
};

struct AggregateResult {
    ParamVector value;
    int iterations = 0;
    /// Sum of Euclidean distances from value to the inputs.
    double objective = 0.0;
    bool converged = true;
    /// Distance from zero to the (smoothed) subdifferential of the objective at value.
    double residual = 0.0;
};

/// Robustness constant of the geometric median when q of n points are corrupted.
struct RobustnessCert {
    std::size_t n = 0;
    std::size_t q = 0;
    double alpha = 0.0;
    double c_alpha = 2.0;
};

RobustnessCert make_robustness_cert(std::size_t n, std::size_t q);

double geomed_objective(std::span<const ParamVector> points, const ParamVector& z);

/*
 * Geometric median by Weiszfeld iteration started from the coordinate-wise mean.
 *
 * A strict majority of bitwise-identical inputs is returned as-is before any
 * iteration. Every step tests the input point nearest to the iterate for
 * optimality (the norm of the pull of the other points must not exceed its
 * multiplicity) and returns it exactly if it passes. An iterate that coincides
 * with a non-optimal input point is moved off it along the descent direction.
 * Iteration stops when both the step length and the residual are at most tol,
 * or after max_iters steps with converged = false.
 *
 * When objective_history is non-null it receives the objective at the start
 * point and after every step.
 */
AggregateResult geometric_median(std::span<const ParamVector> points, const WeiszfeldConfig& cfg = {},
                                 std::vector<double>* objective_history = nullptr);

ParamVector mean(std::span<const ParamVector> points);
ParamVector coordinate_median(std::span<const ParamVector> points);
ParamVector trimmed_mean(std::span<const ParamVector> points, double trim_fraction);

/// True iff the geometric median lies within C_alpha * radius of center, alpha = q / n.
/// Throws InvalidInput if q >= n / 2 or fewer than n - q points lie within radius of center.
bool ball_robustness_check(std::span<const ParamVector> points, const ParamVector& center, double radius,
                           std::size_t q, const WeiszfeldConfig& cfg = {});

struct GeometricMedianAgg {
    WeiszfeldConfig weiszfeld;
};
struct MeanAgg {};
struct CoordinateMedianAgg {};
struct TrimmedMeanAgg {
    double trim_fraction = 0.1;
};

using AggregatorSpec = std::variant<GeometricMedianAgg, MeanAgg, CoordinateMedianAgg, TrimmedMeanAgg>;

/// Runs the selected aggregator. Non-iterative rules report iterations = 0, converged = true,
/// and the geometric-median objective and residual of their output for comparison.
AggregateResult aggregate(const AggregatorSpec& spec, std::span<const ParamVector> points);

} // namespace byzfl
