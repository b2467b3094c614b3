#include "byzfl/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "byzfl/errors.hpp"

namespace byzfl {

namespace {

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_mean_loss(const Dataset& data, const ParamVector& w) {
    const Eigen::VectorXd z = data.inputs * w;
    double total = 0.0;
    for (Eigen::Index s = 0; s < z.size(); ++s) {
        total += softplus(z[s]) - data.targets[s] * z[s];
    }
    return total / static_cast<double>(data.size());
}

ParamVector logistic_mean_gradient(const Dataset& data, const ParamVector& w) {
    Eigen::VectorXd residual = data.inputs * w;
    for (Eigen::Index s = 0; s < residual.size(); ++s) {
        residual[s] = sigmoid(residual[s]) - data.targets[s];
    }
    return data.inputs.transpose() * residual / static_cast<double>(data.size());
}

Eigen::VectorXd start_vector(Eigen::Index n) {
    RngStream rng(0x5EEDF00DULL, StreamKey{Purpose::Verification, 0xFFFFFFFFu, 0, 0});
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = rng.normal();
    }
    return v.normalized();
}

template <class ApplyFn>
double dominant_rayleigh(Eigen::Index n, ApplyFn apply, double rel_tol) {
    constexpr int kMaxIters = 1'000'000;
    Eigen::VectorXd v = start_vector(n);
    double rho = 0.0;
    for (int it = 0; it < kMaxIters; ++it) {
        Eigen::VectorXd av = apply(v);
        rho = v.dot(av);
        const double res = (av - rho * v).norm();
        const double norm = av.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        if (res <= rel_tol * std::abs(rho)) {
            break;
        }
        v = av / norm;
    }
    return rho;
}

} // namespace

Problem::Problem(std::vector<Dataset> users, LossSpec loss, std::optional<Dataset> test_set)
    : users_(std::move(users)), loss_(loss), test_set_(std::move(test_set)) {
    if (users_.empty()) {
        throw InvalidInput("a problem needs at least one user");
    }
    if (!(loss_.lambda >= 0.0) || !std::isfinite(loss_.lambda)) {
        throw InvalidInput("lambda must be a finite value >= 0");
    }
    if (loss_.kind == LossKind::Logistic && !(loss_.lambda > 0.0)) {
        throw InvalidInput("logistic problems need lambda > 0 for strong convexity");
    }
    dim_ = users_.front().dim();
    if (dim_ < 1) {
        throw InvalidInput("feature dimension must be >= 1");
    }
    auto check_dataset = [&](const Dataset& d, const char* what) {
        if (d.size() < 1) {
            throw InvalidInput(std::string(what) + " has no samples");
        }
        if (d.dim() != dim_) {
            throw InvalidInput(std::string(what) + " feature dimension differs from the first user");
        }
        if (d.targets.size() != d.size()) {
            throw InvalidInput(std::string(what) + " has a different number of targets and inputs");
        }
        if (!d.inputs.allFinite() || !d.targets.allFinite()) {
            throw InvalidInput(std::string(what) + " contains non-finite values");
        }
        if (loss_.kind == LossKind::Logistic) {
            for (Eigen::Index s = 0; s < d.targets.size(); ++s) {
                if (d.targets[s] != 0.0 && d.targets[s] != 1.0) {
                    throw InvalidInput(std::string(what) + " has logistic labels outside {0, 1}");
                }
            }
        }
    };
    double total = 0.0;
    for (const auto& d : users_) {
        check_dataset(d, "user dataset");
        total += static_cast<double>(d.size());
    }
    if (test_set_) {
        check_dataset(*test_set_, "test set");
    }
    for (const auto& d : users_) {
        weights_.push_back(static_cast<double>(d.size()) / total);
    }
    homogeneous_ = std::all_of(users_.begin(), users_.end(), [&](const Dataset& d) {
        return d.size() == users_[0].size() && (d.inputs.array() == users_[0].inputs.array()).all() &&
               (d.targets.array() == users_[0].targets.array()).all();
    });

    if (loss_.kind == LossKind::Ridge) {
        hessian_ = loss_.lambda * Eigen::MatrixXd::Identity(dim_, dim_);
        linear_ = Eigen::VectorXd::Zero(dim_);
        for (std::size_t m = 0; m < users_.size(); ++m) {
            const auto& d = users_[m];
            const double s = static_cast<double>(d.size());
            gram_.push_back(d.inputs.transpose() * d.inputs / s);
            moment_.push_back(d.inputs.transpose() * d.targets / s);
            half_mean_sq_target_.push_back(0.5 * d.targets.squaredNorm() / s);
            hessian_ += weights_[m] * gram_.back();
            linear_ += weights_[m] * moment_.back();
            constant_ += weights_[m] * half_mean_sq_target_.back();
        }
    }
}

void Problem::check_user(int m) const {
    if (m < 0 || m >= num_users()) {
        throw InvalidInput("user index " + std::to_string(m) + " out of range [0, " + std::to_string(num_users()) +
                           ")");
    }
}

void Problem::check_dim(const ParamVector& w) const {
    if (w.size() != dim_) {
        throw InvalidInput("parameter dimension " + std::to_string(w.size()) + " does not match problem dimension " +
                           std::to_string(dim_));
    }
}

const Dataset& Problem::user(int m) const {
    check_user(m);
    return users_[static_cast<std::size_t>(m)];
}

double Problem::user_weight(int m) const {
    check_user(m);
    return weights_[static_cast<std::size_t>(m)];
}

bool Problem::equal_sample_counts() const {
    return std::all_of(users_.begin(), users_.end(), [&](const Dataset& d) { return d.size() == users_[0].size(); });
}

double Problem::local_loss(int m, const ParamVector& w) const {
    check_user(m);
    check_dim(w);
    const auto idx = static_cast<std::size_t>(m);
    const double reg = 0.5 * loss_.lambda * w.squaredNorm();
    if (loss_.kind == LossKind::Ridge) {
        return 0.5 * w.dot(gram_[idx] * w) - moment_[idx].dot(w) + half_mean_sq_target_[idx] + reg;
    }
    return logistic_mean_loss(users_[idx], w) + reg;
}

double Problem::global_loss(const ParamVector& w) const {
    check_dim(w);
    if (homogeneous_) {
        return local_loss(0, w);
    }
    if (loss_.kind == LossKind::Ridge) {
        return 0.5 * w.dot(hessian_ * w) - linear_.dot(w) + constant_;
    }
    double total = 0.0;
    for (int m = 0; m < num_users(); ++m) {
        total += weights_[static_cast<std::size_t>(m)] * local_loss(m, w);
    }
    return total;
}

ParamVector Problem::local_gradient(int m, const ParamVector& w) const {
    check_user(m);
    check_dim(w);
    const auto idx = static_cast<std::size_t>(m);
    if (loss_.kind == LossKind::Ridge) {
        return gram_[idx] * w - moment_[idx] + loss_.lambda * w;
    }
    return logistic_mean_gradient(users_[idx], w) + loss_.lambda * w;
}

ParamVector Problem::global_gradient(const ParamVector& w) const {
    check_dim(w);
    if (homogeneous_) {
        return local_gradient(0, w);
    }
    if (loss_.kind == LossKind::Ridge) {
        return hessian_ * w - linear_;
    }
    ParamVector g = ParamVector::Zero(dim_);
    for (int m = 0; m < num_users(); ++m) {
        g += weights_[static_cast<std::size_t>(m)] * local_gradient(m, w);
    }
    return g;
}

ParamVector Problem::subset_gradient(int m, const ParamVector& w, std::span<const Eigen::Index> rows) const {
    check_user(m);
    check_dim(w);
    if (rows.empty()) {
        throw InvalidInput("subset gradient needs at least one row");
    }
    const auto& d = users_[static_cast<std::size_t>(m)];
    ParamVector g = ParamVector::Zero(dim_);
    for (const auto s : rows) {
        if (s < 0 || s >= d.size()) {
            throw InvalidInput("sample index out of range");
        }
        const double z = d.inputs.row(s).dot(w);
        const double r = loss_.kind == LossKind::Ridge ? z - d.targets[s] : sigmoid(z) - d.targets[s];
        g += r * d.inputs.row(s).transpose();
    }
    return g / static_cast<double>(rows.size()) + loss_.lambda * w;
}

std::optional<double> Problem::test_accuracy(const ParamVector& w) const {
    if (loss_.kind != LossKind::Logistic || !test_set_) {
        return std::nullopt;
    }
    check_dim(w);
    const Eigen::VectorXd z = test_set_->inputs * w;
    Eigen::Index correct = 0;
    for (Eigen::Index s = 0; s < z.size(); ++s) {
        const double predicted = z[s] > 0.0 ? 1.0 : 0.0;
        correct += predicted == test_set_->targets[s] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(z.size());
}

Problem make_synthetic(int p, int M, int S_per_user, std::uint64_t seed, double heterogeneity, LossSpec loss) {
    if (p < 1 || M < 1 || S_per_user < 1) {
        throw InvalidInput("synthetic problems need p, M and S_per_user >= 1");
    }
    if (!(heterogeneity >= 0.0 && heterogeneity <= 1.0)) {
        throw InvalidInput("heterogeneity must lie in [0, 1]");
    }
    const KeyedRng rng(seed);

    auto draw_weights = [&](RngStream& s) {
        Eigen::VectorXd w(p);
        for (int j = 0; j < p; ++j) {
            w[j] = s.normal();
        }
        return w;
    };
    auto draw_inputs = [&](RngStream& s) {
        Eigen::MatrixXd x(S_per_user, p);
        for (int r = 0; r < S_per_user; ++r) {
            for (int j = 0; j < p; ++j) {
                x(r, j) = s.normal();
            }
        }
        return x;
    };
    auto label = [&](const Eigen::MatrixXd& x, const Eigen::VectorXd& w, RngStream& s) {
        Eigen::VectorXd y(x.rows());
        const Eigen::VectorXd z = x * w;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (loss.kind == LossKind::Ridge) {
                y[r] = z[r] + 0.5 * s.normal();
            } else {
                y[r] = s.uniform() < sigmoid(z[r]) ? 1.0 : 0.0;
            }
        }
        return y;
    };

    auto shared_stream = rng.stream(Purpose::ProblemData, 0, 0, 0);
    const Eigen::VectorXd w_true = draw_weights(shared_stream);
    Dataset shared;
    shared.inputs = draw_inputs(shared_stream);
    shared.targets = label(shared.inputs, w_true, shared_stream);

    std::vector<Dataset> users;
    users.reserve(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        if (heterogeneity == 0.0) {
            users.push_back(shared);
            continue;
        }
        auto own = rng.stream(Purpose::ProblemData, 0, static_cast<std::uint32_t>(m) + 1, 0);
        const Eigen::VectorXd w_own = draw_weights(own);
        const Eigen::MatrixXd x_own = draw_inputs(own);
        Dataset d;
        d.inputs = (1.0 - heterogeneity) * shared.inputs + heterogeneity * x_own;
        const Eigen::VectorXd w_user = (1.0 - heterogeneity) * w_true + heterogeneity * w_own;
        d.targets = label(d.inputs, w_user, own);
        users.push_back(std::move(d));
    }

    auto test_stream = rng.stream(Purpose::ProblemData, 1, 0, 0);
    Dataset test;
    test.inputs = draw_inputs(test_stream);
    test.targets = label(test.inputs, w_true, test_stream);

    return Problem(std::move(users), loss, std::move(test));
}

Dataset load_user_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open CSV file " + path.string());
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::vector<double> values;
        std::stringstream fields(line);
        std::string field;
        bool numeric = true;
        while (std::getline(fields, field, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(field, &used));
                if (field.find_first_not_of(" \t", used) != std::string::npos) {
                    numeric = false;
                }
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw InvalidInput("non-numeric field in " + path.string() + ": " + line);
        }
        first = false;
        if (values.size() < 2) {
            throw InvalidInput("CSV rows need at least one feature and a label: " + path.string());
        }
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw InvalidInput("ragged CSV rows in " + path.string());
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw InvalidInput("CSV file has no samples: " + path.string());
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto p = static_cast<Eigen::Index>(rows.front().size()) - 1;
    Dataset d;
    d.inputs.resize(n, p);
    d.targets.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index j = 0; j < p; ++j) {
            d.inputs(r, j) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
        }
        d.targets[r] = rows[static_cast<std::size_t>(r)].back();
    }
    return d;
}

void validate_oracle_mode(const Problem& problem, const GradOracleMode& mode) {
    if (const auto* mb = std::get_if<Minibatch>(&mode)) {
        Eigen::Index smallest = problem.user(0).size();
        for (int m = 1; m < problem.num_users(); ++m) {
            smallest = std::min(smallest, problem.user(m).size());
        }
        if (mb->batch_size < 1 || mb->batch_size > smallest) {
            throw InvalidInput("minibatch size " + std::to_string(mb->batch_size) + " must lie in [1, " +
                               std::to_string(smallest) + "]");
        }
    } else if (const auto* rn = std::get_if<RelativeNoise>(&mode)) {
        if (!(rn->delta >= 0.0) || !std::isfinite(rn->delta)) {
            throw InvalidInput("relative noise delta must be a finite value >= 0");
        }
    }
}

double oracle_delta(const GradOracleMode& mode) {
    if (const auto* rn = std::get_if<RelativeNoise>(&mode)) {
        return rn->delta;
    }
    return 0.0;
}

bool oracle_violates_assumptions(const GradOracleMode& mode) {
    return std::holds_alternative<Minibatch>(mode);
}

ParamVector local_stoch_grad(const Problem& problem, int m, const ParamVector& w, const GradOracleMode& mode,
                             RngStream& rng) {
    if (std::holds_alternative<FullGradient>(mode)) {
        return problem.local_gradient(m, w);
    }
    if (const auto* mb = std::get_if<Minibatch>(&mode)) {
        const auto size = problem.user(m).size();
        if (mb->batch_size < 1 || mb->batch_size > size) {
            throw InvalidInput("minibatch size " + std::to_string(mb->batch_size) + " exceeds the " +
                               std::to_string(size) + " samples of user " + std::to_string(m));
        }
        // Partial Fisher-Yates: the first batch_size entries are a uniform sample without replacement.
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(size));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        for (std::size_t i = 0; i < static_cast<std::size_t>(mb->batch_size); ++i) {
            const auto j = i + rng.uniform_index(rows.size() - i);
            std::swap(rows[i], rows[j]);
        }
        return problem.subset_gradient(m, w, std::span(rows).first(static_cast<std::size_t>(mb->batch_size)));
    }
    const double delta = std::get<RelativeNoise>(mode).delta;
    ParamVector g = problem.global_gradient(w);
    if (delta == 0.0) {
        return g;
    }
    Eigen::VectorXd u(g.size());
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        u[j] = rng.normal();
    }
    u /= std::sqrt(static_cast<double>(u.size()));
    return g + (delta * g.norm()) * u;
}

double largest_eigenvalue(const Eigen::MatrixXd& a, double rel_tol) {
    if (a.rows() != a.cols() || a.rows() < 1) {
        throw InvalidInput("eigenvalue routines need a non-empty square matrix");
    }
    return dominant_rayleigh(
        a.rows(), [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, rel_tol);
}

ExtremeEigenvalues extreme_eigenvalues(const Eigen::MatrixXd& a, double rel_tol) {
    ExtremeEigenvalues out;
    out.largest = largest_eigenvalue(a, rel_tol);
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
        const double inv = dominant_rayleigh(
            a.rows(), [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return llt.solve(v); }, rel_tol);
        out.smallest = 1.0 / inv;
    } else {
        // Not positive definite: shift so the smallest eigenvalue becomes dominant.
        const Eigen::MatrixXd shifted = out.largest * Eigen::MatrixXd::Identity(a.rows(), a.cols()) - a;
        out.smallest = out.largest - largest_eigenvalue(shifted, rel_tol);
    }
    return out;
}

SmoothnessConstants constants(const Problem& problem, const GradOracleMode& mode) {
    SmoothnessConstants c;
    c.delta = oracle_delta(mode);
    const double lambda = problem.loss().lambda;
    if (problem.loss().kind == LossKind::Ridge) {
        const auto eig = extreme_eigenvalues(problem.ridge_hessian());
        c.mu = eig.smallest;
        c.L_const = std::max(eig.largest, eig.smallest);
        return c;
    }
    Eigen::MatrixXd curvature = Eigen::MatrixXd::Zero(problem.dim(), problem.dim());
    for (int m = 0; m < problem.num_users(); ++m) {
        const auto& d = problem.user(m);
        curvature += problem.user_weight(m) * (d.inputs.transpose() * d.inputs) / (4.0 * static_cast<double>(d.size()));
    }
    c.mu = lambda;
    c.L_const = largest_eigenvalue(curvature) + lambda;
    return c;
}

Optimum optimum(const Problem& problem) {
    Optimum opt;
    if (problem.loss().kind == LossKind::Ridge) {
        const auto& h = problem.ridge_hessian();
        const auto& b = problem.ridge_linear_term();
        const Eigen::LLT<Eigen::MatrixXd> llt(h);
        if (llt.info() != Eigen::Success) {
            throw SolverFailure("ridge Hessian is not positive definite", std::numeric_limits<double>::infinity());
        }
        const double target = 1e-12 * b.norm();
        ParamVector w = llt.solve(b);
        double residual = (h * w - b).norm();
        for (int refine = 0; refine < 10 && residual > target; ++refine) {
            w += llt.solve(b - h * w);
            residual = (h * w - b).norm();
        }
        if (residual > target) {
            throw SolverFailure("ridge normal equations did not reach relative residual 1e-12", residual);
        }
        opt.w_star = std::move(w);
    } else {
        constexpr int kMaxIters = 1'000'000;
        constexpr double kGradTol = 1e-10;
        const double step = 1.0 / constants(problem).L_const;
        ParamVector w = ParamVector::Zero(problem.dim());
        ParamVector g = problem.global_gradient(w);
        int it = 0;
        for (; it < kMaxIters && g.norm() > kGradTol; ++it) {
            w -= step * g;
            g = problem.global_gradient(w);
        }
        if (g.norm() > kGradTol) {
            throw SolverFailure("logistic gradient descent did not reach |grad F| <= 1e-10", g.norm());
        }
        opt.w_star = std::move(w);
    }
    opt.F_star = problem.global_loss(opt.w_star);
    return opt;
}

} // namespace byzfl
