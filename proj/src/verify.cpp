#include "byzfl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "byzfl/clients.hpp"
#include "byzfl/errors.hpp"
#include "byzfl/problems.hpp"
#include "byzfl/robust_aggregation.hpp"
#include "byzfl/rng.hpp"
#include "byzfl/server.hpp"
#include "byzfl/theory.hpp"

namespace byzfl {

namespace {

constexpr std::uint64_t kSuiteSeed = 20240601;

RngStream case_stream(std::uint32_t suite, std::uint32_t property, std::uint32_t index) {
    return KeyedRng(kSuiteSeed).stream(Purpose::Verification, suite, property, index);
}

int draw_int(RngStream& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
}

double draw_log_uniform(RngStream& rng, double lo_exp, double hi_exp) {
    return std::pow(10.0, lo_exp + (hi_exp - lo_exp) * rng.uniform());
}

ParamVector draw_normal(RngStream& rng, Eigen::Index d, double scale = 1.0) {
    ParamVector v(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        v[j] = scale * rng.normal();
    }
    return v;
}

ParamVector draw_direction(RngStream& rng, Eigen::Index d) {
    ParamVector v = draw_normal(rng, d);
    while (v.norm() == 0.0) {
        v = draw_normal(rng, d);
    }
    return v / v.norm();
}

std::string format_vector(const ParamVector& v) {
    std::ostringstream os;
    os.precision(17);
    os << "(";
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        os << (j ? ", " : "") << v[j];
    }
    os << ")";
    return os.str();
}

std::string format_points(const std::vector<ParamVector>& points) {
    std::string s = "{";
    for (std::size_t i = 0; i < points.size(); ++i) {
        s += (i ? ", " : "") + format_vector(points[i]);
    }
    return s + "}";
}

// Runs `check` on cases 0..count-1 and keeps the first counterexample.
PropertyResult run_property(const std::string& name, long count, const std::function<std::string(long)>& check) {
    PropertyResult result{name, true, 0, {}};
    for (long i = 0; i < count; ++i) {
        ++result.cases;
        std::string failure;
        try {
            failure = check(i);
        } catch (const std::exception& e) {
            failure = std::string("exception: ") + e.what();
        }
        if (!failure.empty()) {
            result.passed = false;
            result.detail = "case " + std::to_string(i) + ": " + failure;
            break;
        }
    }
    return result;
}

struct BallCase {
    std::vector<ParamVector> points;
    ParamVector center;
    double radius = 0.0;
    std::size_t q = 0;
};

BallCase draw_ball_case(RngStream& rng) {
    BallCase c;
    const int n = draw_int(rng, 1, 25);
    c.q = static_cast<std::size_t>(draw_int(rng, 0, (n - 1) / 2));
    const int d = draw_int(rng, 1, 16);
    c.center = draw_normal(rng, d, draw_log_uniform(rng, -2, 2));
    c.radius = draw_log_uniform(rng, -3, 2);
    for (int i = 0; i < n - static_cast<int>(c.q); ++i) {
        // Strictly inside the ball so rounding cannot push a point outside.
        const double rho = 0.999 * c.radius * std::pow(rng.uniform(), 1.0 / d);
        c.points.push_back(c.center + rho * draw_direction(rng, d));
    }
    for (std::size_t i = 0; i < c.q; ++i) {
        c.points.push_back(draw_log_uniform(rng, 0, 6) * draw_direction(rng, d));
    }
    return c;
}

// Minimum of the objective over a square grid around center; returns the minimizing node.
ParamVector grid_minimizer(const std::vector<ParamVector>& points, const ParamVector& center, double half_width,
                           int cells) {
    ParamVector best = center;
    double best_value = std::numeric_limits<double>::infinity();
    ParamVector z(2);
    for (int i = 0; i <= cells; ++i) {
        for (int j = 0; j <= cells; ++j) {
            z[0] = center[0] - half_width + 2.0 * half_width * i / cells;
            z[1] = center[1] - half_width + 2.0 * half_width * j / cells;
            const double v = geomed_objective(points, z);
            if (v < best_value) {
                best_value = v;
                best = z;
            }
        }
    }
    return best;
}

std::vector<PropertyResult> geomed_properties() {
    const WeiszfeldConfig cfg;
    std::vector<PropertyResult> out;

    out.push_back(run_property("geomed.ball_robustness", 10000, [&](long i) -> std::string {
        auto rng = case_stream(1, 1, static_cast<std::uint32_t>(i));
        const auto c = draw_ball_case(rng);
        const auto n = c.points.size();
        const auto result = geometric_median(c.points, cfg);
        const double bound = make_robustness_cert(n, c.q).c_alpha * c.radius;
        std::ostringstream why;
        why.precision(17);
        if (!ball_robustness_check(c.points, c.center, c.radius, c.q, cfg)) {
            why << "geomed at distance " << (result.value - c.center).norm() << " exceeds bound " << bound;
        } else if (c.center.size() == 2) {
            const ParamVector g = grid_minimizer(c.points, c.center, 1.05 * bound, 120);
            const double spacing = 2.0 * 1.05 * bound / 120.0 * std::sqrt(2.0);
            const double grid_obj = geomed_objective(c.points, g);
            const double slack = static_cast<double>(n) * cfg.tol + 1e-12 * grid_obj;
            if (result.objective > grid_obj + slack) {
                why << "objective " << result.objective << " exceeds grid minimum " << grid_obj;
            } else if ((g - c.center).norm() > bound + spacing) {
                why << "grid minimizer at distance " << (g - c.center).norm() << " exceeds bound " << bound;
            }
        } else {
            // Certificate in the frame centred on the ball: absolute coordinates far from the
            // cluster would add a rounding floor of about n * eps * |center| / radius.
            std::vector<ParamVector> centred = c.points;
            for (auto& pt : centred) {
                pt -= c.center;
            }
            const auto local = geometric_median(centred, cfg);
            if (!local.converged || local.residual > cfg.tol) {
                why << "certificate residual " << local.residual << " exceeds tol";
            } else if (local.value.norm() > bound) {
                why << "centred geomed at distance " << local.value.norm() << " exceeds bound " << bound;
            }
        }
        if (why.str().empty()) {
            return {};
        }
        return why.str() + "; q=" + std::to_string(c.q) + " center=" + format_vector(c.center) +
               " radius=" + std::to_string(c.radius) + " points=" + format_points(c.points);
    }));

    out.push_back(run_property("geomed.one_dimensional_median", 1000, [&](long i) -> std::string {
        auto rng = case_stream(1, 2, static_cast<std::uint32_t>(i));
        const int n = 2 * draw_int(rng, 0, 12) + 1;
        std::vector<ParamVector> points;
        for (int j = 0; j < n; ++j) {
            points.push_back(draw_normal(rng, 1, draw_log_uniform(rng, -1, 2)));
        }
        const double gm = geometric_median(points, cfg).value[0];
        const double med = coordinate_median(points)[0];
        if (std::abs(gm - med) > cfg.tol) {
            return "geomed " + std::to_string(gm) + " vs median " + std::to_string(med) + " points=" +
                   format_points(points);
        }
        return {};
    }));

    // Equivariance needs a unique minimizer: odd n in one dimension, otherwise n >= 3 points,
    // which are almost surely not collinear.
    auto draw_equivariance_points = [](RngStream& rng) {
        const int d = draw_int(rng, 1, 16);
        int n = draw_int(rng, 3, 25);
        if (d == 1 && n % 2 == 0) {
            ++n;
        }
        std::vector<ParamVector> points;
        for (int j = 0; j < n; ++j) {
            points.push_back(draw_normal(rng, d));
        }
        return points;
    };

    out.push_back(run_property("geomed.translation_equivariance", 1000, [&](long i) -> std::string {
        auto rng = case_stream(1, 3, static_cast<std::uint32_t>(i));
        auto points = draw_equivariance_points(rng);
        const ParamVector shift = draw_normal(rng, points[0].size());
        const ParamVector base = geometric_median(points, cfg).value;
        for (auto& pt : points) {
            pt += shift;
        }
        const ParamVector moved = geometric_median(points, cfg).value;
        const double err = (moved - (base + shift)).norm();
        if (err > 10.0 * cfg.tol) {
            return "error " + std::to_string(err) + " shift=" + format_vector(shift) + " points=" +
                   format_points(points);
        }
        return {};
    }));

    out.push_back(run_property("geomed.scaling_equivariance", 1000, [&](long i) -> std::string {
        auto rng = case_stream(1, 4, static_cast<std::uint32_t>(i));
        auto points = draw_equivariance_points(rng);
        const double s = draw_log_uniform(rng, -2, 2);
        const ParamVector base = geometric_median(points, cfg).value;
        for (auto& pt : points) {
            pt *= s;
        }
        const ParamVector scaled = geometric_median(points, cfg).value;
        const double err = (scaled - s * base).norm();
        if (err > 10.0 * s * cfg.tol) {
            return "error " + std::to_string(err) + " scale=" + std::to_string(s) + " points=" +
                   format_points(points);
        }
        return {};
    }));

    out.push_back(run_property("geomed.majority_exactness", 1000, [&](long i) -> std::string {
        auto rng = case_stream(1, 5, static_cast<std::uint32_t>(i));
        const int n = draw_int(rng, 1, 25);
        const int d = draw_int(rng, 1, 16);
        const int k = draw_int(rng, n / 2 + 1, n);
        const ParamVector shared = draw_normal(rng, d, 10.0);
        std::vector<ParamVector> points(static_cast<std::size_t>(k), shared);
        for (int j = k; j < n; ++j) {
            points.push_back(draw_normal(rng, d, draw_log_uniform(rng, 0, 6)));
        }
        // Interleave so the shared point is not always first.
        for (std::size_t j = points.size(); j > 1; --j) {
            std::swap(points[j - 1], points[rng.uniform_index(j)]);
        }
        const ParamVector gm = geometric_median(points, cfg).value;
        if (!(gm.array() == shared.array()).all()) {
            return "result " + format_vector(gm) + " differs from majority point " + format_vector(shared);
        }
        return {};
    }));

    out.push_back(run_property("geomed.monotone_descent", 1000, [&](long i) -> std::string {
        auto rng = case_stream(1, 6, static_cast<std::uint32_t>(i));
        const int n = draw_int(rng, 2, 25);
        const int d = draw_int(rng, 1, 16);
        std::vector<ParamVector> points;
        for (int j = 0; j < n; ++j) {
            points.push_back(draw_normal(rng, d, draw_log_uniform(rng, -1, 3)));
        }
        std::vector<double> history;
        geometric_median(points, cfg, &history);
        for (std::size_t j = 1; j < history.size(); ++j) {
            if (history[j] > history[j - 1] * (1.0 + 1e-12)) {
                return "objective rose from " + std::to_string(history[j - 1]) + " to " + std::to_string(history[j]) +
                       " at step " + std::to_string(j) + " points=" + format_points(points);
            }
        }
        return {};
    }));

    out.push_back(run_property("geomed.optimality", 1000, [&](long i) -> std::string {
        auto rng = case_stream(1, 7, static_cast<std::uint32_t>(i));
        const int n = draw_int(rng, 1, 25);
        const int d = draw_int(rng, 1, 16);
        std::vector<ParamVector> points;
        for (int j = 0; j < n; ++j) {
            points.push_back(draw_normal(rng, d, draw_log_uniform(rng, -1, 2)));
        }
        const auto result = geometric_median(points, cfg);
        const double slack = n * cfg.tol;
        std::vector<ParamVector> candidates = points;
        candidates.push_back(mean(points));
        for (int j = 0; j < 100; ++j) {
            candidates.push_back(result.value + draw_normal(rng, d, draw_log_uniform(rng, -6, 0)));
        }
        for (const auto& x : candidates) {
            const double fx = geomed_objective(points, x);
            if (result.objective > fx + slack) {
                return "objective " + std::to_string(result.objective) + " exceeds " + std::to_string(fx) + " at " +
                       format_vector(x) + " points=" + format_points(points);
            }
        }
        return {};
    }));

    return out;
}

Problem assumptions_problem(LossKind kind) {
    const double lambda = kind == LossKind::Ridge ? 0.3 : 0.1;
    return make_synthetic(8, 4, 50, 17, 0.5, LossSpec{kind, lambda});
}

std::string loss_label(LossKind kind) {
    return kind == LossKind::Ridge ? "ridge" : "logistic";
}

ParamVector central_difference(const std::function<double(const ParamVector&)>& f, const ParamVector& w) {
    constexpr double h = 1e-6;
    ParamVector g(w.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        ParamVector plus = w;
        ParamVector minus = w;
        plus[j] += h;
        minus[j] -= h;
        g[j] = (f(plus) - f(minus)) / (2.0 * h);
    }
    return g;
}

std::vector<PropertyResult> assumption_properties() {
    std::vector<PropertyResult> out;
    for (const LossKind kind : {LossKind::Ridge, LossKind::Logistic}) {
        const Problem problem = assumptions_problem(kind);
        const auto consts = constants(problem);
        const auto label = loss_label(kind);
        const auto suite_id = static_cast<std::uint32_t>(kind == LossKind::Ridge ? 10 : 20);

        out.push_back(run_property("assumptions." + label + ".gradient_finite_difference", 100,
                                   [&](long i) -> std::string {
            auto rng = case_stream(2, suite_id + 1, static_cast<std::uint32_t>(i));
            const ParamVector w = draw_normal(rng, problem.dim());
            const int m = draw_int(rng, 0, problem.num_users() - 1);
            const ParamVector g = problem.global_gradient(w);
            const ParamVector fd = central_difference([&](const ParamVector& x) { return problem.global_loss(x); }, w);
            const ParamVector gl = problem.local_gradient(m, w);
            const ParamVector fdl =
                central_difference([&](const ParamVector& x) { return problem.local_loss(m, x); }, w);
            const double err = (g - fd).norm() / std::max(g.norm(), 1.0);
            const double err_local = (gl - fdl).norm() / std::max(gl.norm(), 1.0);
            if (err > 1e-5 || err_local > 1e-5) {
                return "relative error " + std::to_string(std::max(err, err_local)) + " at w=" + format_vector(w);
            }
            return {};
        }));

        out.push_back(run_property("assumptions." + label + ".strong_convexity", 1000, [&](long i) -> std::string {
            auto rng = case_stream(2, suite_id + 2, static_cast<std::uint32_t>(i));
            const ParamVector a = draw_normal(rng, problem.dim(), 3.0);
            const ParamVector b = a + draw_normal(rng, problem.dim(), draw_log_uniform(rng, -3, 1));
            const double lhs = (problem.global_gradient(a) - problem.global_gradient(b)).dot(a - b);
            const double rhs = consts.mu * (a - b).squaredNorm();
            if (lhs < rhs * (1.0 - 1e-9)) {
                return "inner product " + std::to_string(lhs) + " below mu |d|^2 = " + std::to_string(rhs) +
                       " at w1=" + format_vector(a) + " w2=" + format_vector(b);
            }
            return {};
        }));

        out.push_back(run_property("assumptions." + label + ".smoothness", 1000, [&](long i) -> std::string {
            auto rng = case_stream(2, suite_id + 3, static_cast<std::uint32_t>(i));
            const ParamVector a = draw_normal(rng, problem.dim(), 3.0);
            const ParamVector b = a + draw_normal(rng, problem.dim(), draw_log_uniform(rng, -3, 1));
            const double lhs = (problem.global_gradient(a) - problem.global_gradient(b)).norm();
            const double rhs = consts.L_const * (a - b).norm();
            if (lhs > rhs * (1.0 + 1e-9)) {
                return "gradient change " + std::to_string(lhs) + " above L |d| = " + std::to_string(rhs) +
                       " at w1=" + format_vector(a) + " w2=" + format_vector(b);
            }
            return {};
        }));
    }

    out.push_back(run_property("assumptions.relative_noise_ratio", 3, [&](long i) -> std::string {
        const Problem problem = assumptions_problem(LossKind::Ridge);
        const double delta = 0.25 + 0.5 * static_cast<double>(i);
        const GradOracleMode mode = RelativeNoise{delta};
        auto rng = case_stream(2, 40, static_cast<std::uint32_t>(i));
        const ParamVector w = draw_normal(rng, problem.dim(), 2.0);
        const ParamVector g = problem.global_gradient(w);
        constexpr int samples = 100000;
        double sum = 0.0;
        for (int s = 0; s < samples; ++s) {
            sum += (local_stoch_grad(problem, s % problem.num_users(), w, mode, rng) - g).squaredNorm();
        }
        const double ratio = sum / samples / g.squaredNorm();
        if (std::abs(ratio - delta * delta) > 0.05 * delta * delta) {
            return "E|noise|^2/|grad|^2 = " + std::to_string(ratio) + " vs delta^2 = " + std::to_string(delta * delta);
        }
        return {};
    }));
    return out;
}

std::vector<PropertyResult> bound_properties() {
    std::vector<PropertyResult> out;

    out.push_back(run_property("bounds.theorem1_envelope", 20, [&](long i) -> std::string {
        auto rng = case_stream(3, 1, static_cast<std::uint32_t>(i));
        ExperimentConfig cfg;
        cfg.problem.p = draw_int(rng, 2, 6);
        cfg.problem.samples_per_user = draw_int(rng, 20, 60);
        cfg.problem.lambda = 0.5 + 1.5 * rng.uniform();
        cfg.problem.seed = static_cast<std::uint64_t>(i) + 1;
        cfg.M = draw_int(rng, 3, 20);
        cfg.B = draw_int(rng, 0, (cfg.M - 1) / 2);
        cfg.rounds = 30;
        cfg.seed = static_cast<std::uint64_t>(i) + 100;
        switch (draw_int(rng, 0, 3)) {
        case 0:
            cfg.attack = GaussianNoiseAttack{MeanMode::Zero, draw_log_uniform(rng, 0, 3)};
            break;
        case 1:
            cfg.attack = SignFlipAttack{draw_log_uniform(rng, 0, 3)};
            break;
        case 2:
            cfg.attack = ZeroVectorAttack{};
            break;
        default:
            cfg.attack = FixedVectorAttack{draw_normal(rng, cfg.problem.p, 1e3)};
            break;
        }
        const Problem problem = make_synthetic(cfg.problem.p, cfg.M, cfg.problem.samples_per_user, cfg.problem.seed,
                                               0.0, LossSpec{LossKind::Ridge, cfg.problem.lambda});
        const auto consts = constants(problem);
        const double eta = (0.2 + 0.8 * rng.uniform()) * stable_eta_range(consts.mu, consts.L_const, 0.0).upper;
        const double g = gamma(eta, consts.mu, consts.L_const, 0.0);
        const double beta = static_cast<double>(cfg.B) / cfg.M;
        cfg.rate = ConstantRate{eta};
        cfg.steps = ConstantSteps{min_K(g, beta) + draw_int(rng, 0, 2)};
        const auto result = run_experiment(cfg);
        for (const auto& r : result.trace) {
            if (!r.theorem1_bound) {
                return "missing bound at round " + std::to_string(r.t);
            }
            if (r.optimality_gap > *r.theorem1_bound + 1e-9) {
                return "round " + std::to_string(r.t) + ": gap " + std::to_string(r.optimality_gap) + " > bound " +
                       std::to_string(*r.theorem1_bound) + " (M=" + std::to_string(cfg.M) +
                       ", B=" + std::to_string(cfg.B) + ", eta=" + std::to_string(eta) + ")";
            }
        }
        return {};
    }));

    out.push_back(run_property("bounds.reduction_consistency", 200, [&](long i) -> std::string {
        auto rng = case_stream(3, 2, static_cast<std::uint32_t>(i));
        TheoryParams params;
        params.L_const = 0.5 + 4.0 * rng.uniform();
        params.mu = params.L_const * (0.05 + 0.95 * rng.uniform());
        params.delta = rng.uniform();
        params.eta = (0.05 + 0.9 * rng.uniform()) * stable_eta_range(params.mu, params.L_const, params.delta).upper;
        params.M = draw_int(rng, 1, 60);
        params.B = draw_int(rng, 0, (params.M - 1) / 2);
        params.K = draw_int(rng, 1, 12);
        params.w1_gap_sq = draw_log_uniform(rng, -2, 2);
        const Schedule schedule = Schedule::constant(params.K, params.eta);
        std::vector<int> honest;
        for (int m = 0; m < params.M - params.B; ++m) {
            honest.push_back(m);
        }
        const ScheduleBoundInputs inputs{schedule, honest, params.mu, params.L_const, params.delta,
                                         params.M, params.B, params.L_const, params.w1_gap_sq};
        const auto general = theorem2_series(100, inputs).values;
        const auto uniform = theorem1_series(100, params).values;
        for (int t = 0; t <= 100; ++t) {
            const double a = general[static_cast<std::size_t>(t)];
            const double b = uniform[static_cast<std::size_t>(t)];
            if (std::abs(a - b) > 1e-12 * std::abs(b)) {
                return "t=" + std::to_string(t) + ": general " + std::to_string(a) + " vs uniform " + std::to_string(b);
            }
        }
        return {};
    }));

    out.push_back(run_property("bounds.min_K_exhaustive", 1000, [&](long i) -> std::string {
        auto rng = case_stream(3, 3, static_cast<std::uint32_t>(i));
        const double g = 0.01 + 0.989 * rng.uniform();
        const double beta = 0.45 * rng.uniform();
        const double c = (2.0 - 2.0 * beta) / (1.0 - 2.0 * beta);
        int first = -1;
        for (int K = 1; K <= 10000; ++K) {
            if (std::pow(g, K) * c * c < 1.0) {
                first = K;
                break;
            }
        }
        const int got = min_K(g, beta);
        if (got != first) {
            return "gamma=" + std::to_string(g) + " beta=" + std::to_string(beta) + ": min_K " + std::to_string(got) +
                   " vs scan " + std::to_string(first);
        }
        return {};
    }));

    out.push_back(run_property("bounds.c_beta_increasing", 1, [&](long) -> std::string {
        if (c_beta(0.0) != 2.0) {
            return "c_beta(0) != 2";
        }
        double prev = c_beta(0.0);
        for (int j = 1; j < 5000; ++j) {
            const double v = c_beta(0.5 * j / 5000.0);
            if (!(v > prev)) {
                return "not increasing at beta=" + std::to_string(0.5 * j / 5000.0);
            }
            prev = v;
        }
        return {};
    }));

    out.push_back(run_property("bounds.gamma_vertex", 100, [&](long i) -> std::string {
        auto rng = case_stream(3, 5, static_cast<std::uint32_t>(i));
        const double L = 0.5 + 4.0 * rng.uniform();
        const double mu = L * (0.05 + 0.95 * rng.uniform());
        const double delta = rng.uniform();
        const double vertex = mu / (L * L * (1.0 + delta * delta));
        const double minimum = 1.0 - mu * mu / (L * L * (1.0 + delta * delta));
        if (std::abs(gamma(vertex, mu, L, delta) - minimum) > 1e-12) {
            return "minimum value mismatch";
        }
        for (int j = 0; j <= 2000; ++j) {
            const double eta = 2.0 * vertex * j / 2000.0;
            if (gamma(eta, mu, L, delta) < minimum - 1e-12) {
                return "gamma below vertex value at eta=" + std::to_string(eta);
            }
        }
        return {};
    }));

    return out;
}

} // namespace

std::vector<PropertyResult> verify_geomed_suite() {
    return geomed_properties();
}

std::vector<PropertyResult> verify_assumptions_suite() {
    return assumption_properties();
}

std::vector<PropertyResult> verify_bounds_suite() {
    return bound_properties();
}

int run_verify_suites(const std::string& suite, std::ostream& out) {
    std::vector<PropertyResult> results;
    auto append = [&](std::vector<PropertyResult> more) {
        results.insert(results.end(), more.begin(), more.end());
    };
    if (suite == "geomed" || suite == "all") {
        append(verify_geomed_suite());
    }
    if (suite == "assumptions" || suite == "all") {
        append(verify_assumptions_suite());
    }
    if (suite == "bounds" || suite == "all") {
        append(verify_bounds_suite());
    }
    if (results.empty()) {
        throw ConfigError("unknown suite \"" + suite + "\"; expected geomed, assumptions, bounds or all");
    }
    bool all_passed = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases)\n";
        if (!r.passed) {
            out << "  counterexample: " << r.detail << "\n";
            all_passed = false;
        }
    }
    return all_passed ? 0 : 1;
}

} // namespace byzfl
