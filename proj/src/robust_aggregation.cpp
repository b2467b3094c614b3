#include "byzfl/robust_aggregation.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <type_traits>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "byzfl/errors.hpp"

namespace byzfl {

namespace {

Eigen::Index check_points(std::span<const ParamVector> points) {
    if (points.empty()) {
        throw InvalidInput("aggregation needs at least one point");
    }
    const Eigen::Index dim = points.front().size();
    if (dim < 1) {
        throw InvalidInput("points must have dimension >= 1");
    }
    for (const auto& z : points) {
        if (z.size() != dim) {
            throw InvalidInput("dimension mismatch: expected " + std::to_string(dim) + ", got " +
                               std::to_string(z.size()));
        }
    }
    return dim;
}

bool bitwise_equal(const ParamVector& a, const ParamVector& b) {
    return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

// Index of a point shared bitwise by more than half of the inputs, or -1.
std::ptrdiff_t strict_majority_point(std::span<const ParamVector> points) {
    std::size_t candidate = 0;
    std::size_t votes = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (votes == 0) {
            candidate = i;
            votes = 1;
        } else if (bitwise_equal(points[i], points[candidate])) {
            ++votes;
        } else {
            --votes;
        }
    }
    const auto count = std::count_if(points.begin(), points.end(),
                                     [&](const ParamVector& z) { return bitwise_equal(z, points[candidate]); });
    return 2 * static_cast<std::size_t>(count) > points.size() ? static_cast<std::ptrdiff_t>(candidate) : -1;
}

struct Pull {
    Eigen::VectorXd direction; // sum of unit vectors from the other points towards x
    double inverse_distance_sum = 0.0;
    double multiplicity = 0.0; // points equal to x
    double objective = 0.0;
    double nearest = std::numeric_limits<double>::infinity();
    std::size_t nearest_index = 0;
};

Pull pull_at(std::span<const ParamVector> points, const ParamVector& x) {
    Pull pull;
    pull.direction = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = (x - points[i]).norm();
        pull.objective += d;
        if (d < pull.nearest) {
            pull.nearest = d;
            pull.nearest_index = i;
        }
        if (d == 0.0) {
            pull.multiplicity += 1.0;
        } else {
            pull.direction += (x - points[i]) / d;
            pull.inverse_distance_sum += 1.0 / d;
        }
    }
    return pull;
}

double residual_of(const Pull& pull) {
    return std::max(0.0, pull.direction.norm() - pull.multiplicity);
}

// Orthonormal basis (p x r) of the directions spanned by the inputs around origin.
Eigen::MatrixXd hull_basis(std::span<const ParamVector> points, const ParamVector& origin) {
    Eigen::MatrixXd offsets(origin.size(), static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        offsets.col(static_cast<Eigen::Index>(i)) = points[i] - origin;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(offsets);
    const Eigen::Index rank = qr.rank();
    Eigen::MatrixXd q = qr.householderQ();
    return q.leftCols(rank);
}

// Newton step of the objective restricted to the span of basis; empty if the
// reduced Hessian is singular.
std::optional<ParamVector> newton_point(std::span<const ParamVector> points, const ParamVector& x,
                                        const Eigen::VectorXd& gradient, const Eigen::MatrixXd& basis) {
    const Eigen::Index r = basis.cols();
    if (r == 0) {
        return std::nullopt;
    }
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(r, r);
    for (const auto& z : points) {
        const double d = (x - z).norm();
        const Eigen::VectorXd u = basis.transpose() * ((x - z) / d);
        hessian.noalias() -= (u * u.transpose()) / d;
        hessian.diagonal().array() += 1.0 / d;
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        return std::nullopt;
    }
    const Eigen::VectorXd step = ldlt.solve(basis.transpose() * gradient);
    if (!step.allFinite()) {
        return std::nullopt;
    }
    return ParamVector(x - basis * step);
}

double input_scale(std::span<const ParamVector> points, const ParamVector& center) {
    double scale = 0.0;
    for (const auto& z : points) {
        scale = std::max(scale, (z - center).norm());
    }
    return scale;
}

} // namespace

void WeiszfeldConfig::validate() const {
    if (!(tol > 0.0)) {
        throw InvalidInput("Weiszfeld tol must be > 0");
    }
    if (max_iters < 1) {
        throw InvalidInput("Weiszfeld max_iters must be >= 1");
    }
    if (!(smoothing >= 0.0)) {
        throw InvalidInput("Weiszfeld smoothing must be >= 0");
    }
}

RobustnessCert make_robustness_cert(std::size_t n, std::size_t q) {
    if (n == 0) {
        throw InvalidInput("robustness certificate needs at least one point");
    }
    if (2 * q >= n) {
        throw InvalidInput("geometric median has no robustness guarantee at or above half corruption (q = " +
                           std::to_string(q) + ", n = " + std::to_string(n) + ")");
    }
    RobustnessCert cert;
    cert.n = n;
    cert.q = q;
    cert.alpha = static_cast<double>(q) / static_cast<double>(n);
    cert.c_alpha = (2.0 - 2.0 * cert.alpha) / (1.0 - 2.0 * cert.alpha);
    return cert;
}

double geomed_objective(std::span<const ParamVector> points, const ParamVector& z) {
    const auto dim = check_points(points);
    if (z.size() != dim) {
        throw InvalidInput("dimension mismatch between points and evaluation point");
    }
    double total = 0.0;
    for (const auto& p : points) {
        total += (z - p).norm();
    }
    return total;
}

AggregateResult geometric_median(std::span<const ParamVector> points, const WeiszfeldConfig& cfg,
                                 std::vector<double>* objective_history) {
    check_points(points);
    cfg.validate();

    AggregateResult result;
    if (const auto idx = strict_majority_point(points); idx >= 0) {
        result.value = points[static_cast<std::size_t>(idx)];
        result.objective = geomed_objective(points, result.value);
        if (objective_history) {
            objective_history->push_back(result.objective);
        }
        return result;
    }

    ParamVector x = mean(points);
    const double nu = cfg.smoothing * input_scale(points, x);
    const Eigen::MatrixXd basis = hull_basis(points, x);
    double displacement = std::numeric_limits<double>::infinity();
    result.converged = false;

    for (int iter = 0;; ++iter) {
        const Pull pull = pull_at(points, x);
        if (objective_history) {
            objective_history->push_back(pull.objective);
        }
        result.iterations = iter;
        result.objective = pull.objective;

        // The nearest input point is optimal iff the pull of the other points does not exceed
        // its multiplicity. Testing it every step catches optima at data points, which the
        // plain iteration only approaches sublinearly.
        const ParamVector& anchor = points[pull.nearest_index];
        const Pull at_anchor = pull.multiplicity > 0.0 ? pull : pull_at(points, anchor);
        if (at_anchor.direction.norm() <= at_anchor.multiplicity) {
            if (objective_history && !bitwise_equal(x, anchor)) {
                objective_history->push_back(at_anchor.objective);
            }
            x = anchor;
            result.converged = true;
            result.residual = 0.0;
            result.objective = at_anchor.objective;
            break;
        }

        result.residual = residual_of(pull);
        if (displacement <= cfg.tol && result.residual <= cfg.tol) {
            result.converged = true;
            break;
        }
        if (iter == cfg.max_iters) {
            break;
        }
        ParamVector next;
        if (pull.multiplicity > 0.0) {
            // x coincides with a non-optimal input point: step along the descent direction.
            const double pull_norm = pull.direction.norm();
            const double step = (pull_norm - pull.multiplicity) / pull.inverse_distance_sum;
            next = x - (step / pull_norm) * pull.direction;
        } else {
            Eigen::VectorXd weighted = Eigen::VectorXd::Zero(x.size());
            double weight_sum = 0.0;
            for (const auto& z : points) {
                const double w = 1.0 / std::max((x - z).norm(), nu);
                weighted += w * z;
                weight_sum += w;
            }
            next = weighted / weight_sum;
            // Safeguarded Newton candidate: kept only if it beats the Weiszfeld point, so the
            // objective still never increases.
            if (const auto newton = newton_point(points, x, pull.direction, basis)) {
                const double newton_objective = geomed_objective(points, *newton);
                if (newton_objective <= pull.objective && newton_objective < geomed_objective(points, next)) {
                    next = *newton;
                }
            }
        }
        displacement = (next - x).norm();
        x = std::move(next);
    }

    result.value = std::move(x);
    return result;
}

ParamVector mean(std::span<const ParamVector> points) {
    const auto dim = check_points(points);
    // Identical inputs aggregate to themselves exactly; a rounded sum / n need not.
    if (std::all_of(points.begin(), points.end(), [&](const ParamVector& z) { return z == points[0]; })) {
        return points[0];
    }
    ParamVector sum = ParamVector::Zero(dim);
    for (const auto& z : points) {
        sum += z;
    }
    return sum / static_cast<double>(points.size());
}

ParamVector coordinate_median(std::span<const ParamVector> points) {
    const auto dim = check_points(points);
    const std::size_t n = points.size();
    ParamVector out(dim);
    std::vector<double> column(n);
    for (Eigen::Index j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = points[i][j];
        }
        std::sort(column.begin(), column.end());
        out[j] = (n % 2 == 1) ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    }
    return out;
}

ParamVector trimmed_mean(std::span<const ParamVector> points, double trim_fraction) {
    const auto dim = check_points(points);
    if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
        throw InvalidInput("trim_fraction must lie in [0, 0.5)");
    }
    const std::size_t n = points.size();
    const auto cut = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(n)));
    ParamVector out(dim);
    std::vector<double> column(n);
    for (Eigen::Index j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = points[i][j];
        }
        std::sort(column.begin(), column.end());
        if (column.front() == column.back()) {
            out[j] = column.front();
            continue;
        }
        double sum = 0.0;
        for (std::size_t i = cut; i < n - cut; ++i) {
            sum += column[i];
        }
        out[j] = sum / static_cast<double>(n - 2 * cut);
    }
    return out;
}

bool ball_robustness_check(std::span<const ParamVector> points, const ParamVector& center, double radius,
                           std::size_t q, const WeiszfeldConfig& cfg) {
    const auto dim = check_points(points);
    if (center.size() != dim) {
        throw InvalidInput("center dimension does not match the points");
    }
    const auto cert = make_robustness_cert(points.size(), q);
    const auto inside = std::count_if(points.begin(), points.end(),
                                      [&](const ParamVector& z) { return (z - center).norm() <= radius; });
    if (static_cast<std::size_t>(inside) + q < points.size()) {
        throw InvalidInput("fewer than n - q points lie within the stated radius of the center");
    }
    const auto gm = geometric_median(points, cfg);
    return (gm.value - center).norm() <= cert.c_alpha * radius;
}

AggregateResult aggregate(const AggregatorSpec& spec, std::span<const ParamVector> points) {
    if (const auto* gm = std::get_if<GeometricMedianAgg>(&spec)) {
        return geometric_median(points, gm->weiszfeld);
    }
    AggregateResult result;
    std::visit(
        [&](const auto& rule) {
            using Rule = std::decay_t<decltype(rule)>;
            if constexpr (std::is_same_v<Rule, MeanAgg>) {
                result.value = mean(points);
            } else if constexpr (std::is_same_v<Rule, CoordinateMedianAgg>) {
                result.value = coordinate_median(points);
            } else if constexpr (std::is_same_v<Rule, TrimmedMeanAgg>) {
                result.value = trimmed_mean(points, rule.trim_fraction);
            }
        },
        spec);
    const Pull pull = pull_at(points, result.value);
    result.objective = pull.objective;
    result.residual = residual_of(pull);
    return result;
}

} // namespace byzfl
