#include "byzfl/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

#include "byzfl/errors.hpp"

namespace byzfl {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects any key that was not declared.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path, std::initializer_list<const char*> allowed)
        : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(where() + " must be a JSON object");
        }
        for (const char* key : allowed) {
            allowed_.insert(key);
        }
        for (const auto& item : obj_.items()) {
            if (allowed_.count(item.key()) == 0) {
                throw ConfigError("unknown config key " + where(item.key()));
            }
        }
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const json& raw(const char* key) const { return obj_.at(key); }

    double number(const char* key, double fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const json& v = obj_.at(key);
        if (!v.is_number()) {
            throw ConfigError(where(key) + " must be a number");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            throw ConfigError(where(key) + " must be finite");
        }
        return x;
    }

    long long integer(const char* key, long long fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const json& v = obj_.at(key);
        if (v.is_number_integer()) {
            return v.get<long long>();
        }
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9.0e15) {
                return static_cast<long long>(x);
            }
        }
        throw ConfigError(where(key) + " must be an integer");
    }

    std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const json& v = obj_.at(key);
        if (v.is_number_unsigned()) {
            return v.get<std::uint64_t>();
        }
        const long long x = integer(key, 0);
        if (x < 0) {
            throw ConfigError(where(key) + " must be >= 0");
        }
        return static_cast<std::uint64_t>(x);
    }

    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        if (!obj_.at(key).is_boolean()) {
            throw ConfigError(where(key) + " must be true or false");
        }
        return obj_.at(key).get<bool>();
    }

    std::string string(const char* key, const std::string& fallback) const {
        if (!has(key)) {
            return fallback;
        }
        if (!obj_.at(key).is_string()) {
            throw ConfigError(where(key) + " must be a string");
        }
        return obj_.at(key).get<std::string>();
    }

    std::vector<double> numbers(const char* key) const {
        std::vector<double> out;
        if (!has(key)) {
            return out;
        }
        const json& v = obj_.at(key);
        if (!v.is_array()) {
            throw ConfigError(where(key) + " must be an array of numbers");
        }
        for (const auto& x : v) {
            if (!x.is_number() || !std::isfinite(x.get<double>())) {
                throw ConfigError(where(key) + " must contain only finite numbers");
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    std::vector<int> integers(const char* key) const {
        std::vector<int> out;
        for (const double x : numbers(key)) {
            if (x != std::floor(x) || std::abs(x) > 1e9) {
                throw ConfigError(where(key) + " must contain only integers");
            }
            out.push_back(static_cast<int>(x));
        }
        return out;
    }

    std::string where(const std::string& key = {}) const {
        if (key.empty()) {
            return path_.empty() ? "<root>" : path_;
        }
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> allowed_;
};

int to_int(long long v, const std::string& where) {
    if (v < -1000000000LL || v > 1000000000LL) {
        throw ConfigError(where + " is out of range");
    }
    return static_cast<int>(v);
}

std::string kind_of(const json& obj, const std::string& path, const std::string& fallback) {
    if (!obj.is_object()) {
        throw ConfigError(path + " must be a JSON object");
    }
    if (!obj.contains("kind")) {
        return fallback;
    }
    if (!obj.at("kind").is_string()) {
        throw ConfigError(path + ".kind must be a string");
    }
    return obj.at("kind").get<std::string>();
}

ProblemConfig parse_problem(const json& obj) {
    const ObjectReader r(obj, "problem",
                         {"loss", "lambda", "p", "samples_per_user", "heterogeneity", "seed", "csv_files"});
    ProblemConfig cfg;
    const std::string loss = r.string("loss", "ridge");
    if (loss == "ridge") {
        cfg.loss = LossKind::Ridge;
    } else if (loss == "logistic") {
        cfg.loss = LossKind::Logistic;
    } else {
        throw ConfigError("problem.loss must be \"ridge\" or \"logistic\", got \"" + loss + "\"");
    }
    cfg.lambda = r.number("lambda", cfg.lambda);
    cfg.p = to_int(r.integer("p", cfg.p), "problem.p");
    cfg.samples_per_user = to_int(r.integer("samples_per_user", cfg.samples_per_user), "problem.samples_per_user");
    cfg.heterogeneity = r.number("heterogeneity", cfg.heterogeneity);
    cfg.seed = r.unsigned_integer("seed", cfg.seed);
    if (r.has("csv_files")) {
        const json& files = r.raw("csv_files");
        if (!files.is_array()) {
            throw ConfigError("problem.csv_files must be an array of paths");
        }
        for (const auto& f : files) {
            if (!f.is_string()) {
                throw ConfigError("problem.csv_files must contain only strings");
            }
            cfg.csv_files.push_back(f.get<std::string>());
        }
    }
    return cfg;
}

AttackKind parse_attack(const json& obj) {
    const std::string kind = kind_of(obj, "attack", "gaussian");
    if (kind == "gaussian") {
        const ObjectReader r(obj, "attack", {"kind", "mean_mode", "sigma"});
        GaussianNoiseAttack a;
        const std::string mode = r.string("mean_mode", "zero");
        if (mode == "zero") {
            a.mean_mode = MeanMode::Zero;
        } else if (mode == "honest_center") {
            a.mean_mode = MeanMode::HonestCenter;
        } else {
            throw ConfigError("attack.mean_mode must be \"zero\" or \"honest_center\"");
        }
        a.sigma = r.number("sigma", a.sigma);
        if (a.sigma < 0.0) {
            throw ConfigError("attack.sigma must be >= 0");
        }
        return a;
    }
    if (kind == "sign_flip") {
        const ObjectReader r(obj, "attack", {"kind", "scale"});
        return SignFlipAttack{r.number("scale", 1.0)};
    }
    if (kind == "zero") {
        const ObjectReader r(obj, "attack", {"kind"});
        return ZeroVectorAttack{};
    }
    if (kind == "fixed") {
        const ObjectReader r(obj, "attack", {"kind", "vector"});
        if (!r.has("vector")) {
            throw ConfigError("attack.vector is required for kind \"fixed\"");
        }
        const auto v = r.numbers("vector");
        FixedVectorAttack a;
        a.v = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        return a;
    }
    throw ConfigError("attack.kind must be one of gaussian, sign_flip, zero, fixed; got \"" + kind + "\"");
}

AggregatorSpec parse_aggregator(const json& obj) {
    const std::string kind = kind_of(obj, "aggregator", "geomed");
    if (kind == "geomed") {
        const ObjectReader r(obj, "aggregator", {"kind", "tol", "max_iters", "smoothing"});
        GeometricMedianAgg a;
        a.weiszfeld.tol = r.number("tol", a.weiszfeld.tol);
        a.weiszfeld.max_iters = to_int(r.integer("max_iters", a.weiszfeld.max_iters), "aggregator.max_iters");
        a.weiszfeld.smoothing = r.number("smoothing", a.weiszfeld.smoothing);
        return a;
    }
    if (kind == "mean") {
        const ObjectReader r(obj, "aggregator", {"kind"});
        return MeanAgg{};
    }
    if (kind == "coordinate_median") {
        const ObjectReader r(obj, "aggregator", {"kind"});
        return CoordinateMedianAgg{};
    }
    if (kind == "trimmed_mean") {
        const ObjectReader r(obj, "aggregator", {"kind", "trim_fraction"});
        return TrimmedMeanAgg{r.number("trim_fraction", 0.1)};
    }
    throw ConfigError("aggregator.kind must be one of geomed, mean, coordinate_median, trimmed_mean; got \"" + kind +
                      "\"");
}

StepsSpec parse_steps(const json& obj) {
    const std::string kind = kind_of(obj, "schedule.steps", "constant");
    if (kind == "constant") {
        const ObjectReader r(obj, "schedule.steps", {"kind", "K"});
        ConstantSteps s;
        if (r.has("K") && !(r.raw("K").is_string() && r.raw("K").get<std::string>() == "auto")) {
            if (r.raw("K").is_string()) {
                throw ConfigError("schedule.steps.K must be an integer or \"auto\"");
            }
            s.K = to_int(r.integer("K", 0), "schedule.steps.K");
        }
        return s;
    }
    if (kind == "cycle") {
        const ObjectReader r(obj, "schedule.steps", {"kind", "values"});
        return CycleSteps{r.integers("values")};
    }
    if (kind == "floor_decay" || kind == "linear_decay") {
        const ObjectReader r(obj, "schedule.steps", {"kind", "K1", "E"});
        const int K1 = to_int(r.integer("K1", 8), "schedule.steps.K1");
        const int E = to_int(r.integer("E", 4000), "schedule.steps.E");
        if (K1 < 0 || E < 1) {
            throw ConfigError("schedule.steps needs K1 >= 0 and E >= 1");
        }
        if (kind == "floor_decay") {
            return FloorDecaySteps{K1, E};
        }
        return LinearDecaySteps{K1, E};
    }
    throw ConfigError("schedule.steps.kind must be one of constant, cycle, floor_decay, linear_decay; got \"" + kind +
                      "\"");
}

RateSpec parse_rate(const json& obj) {
    const std::string kind = kind_of(obj, "schedule.rate", "constant");
    if (kind == "constant") {
        const ObjectReader r(obj, "schedule.rate", {"kind", "eta"});
        ConstantRate c;
        if (r.has("eta") && !(r.raw("eta").is_string() && r.raw("eta").get<std::string>() == "auto")) {
            if (r.raw("eta").is_string()) {
                throw ConfigError("schedule.rate.eta must be a number or \"auto\"");
            }
            c.eta = r.number("eta", 0.0);
        }
        return c;
    }
    if (kind == "per_client_range") {
        const ObjectReader r(obj, "schedule.rate", {"kind", "low", "high"});
        PerClientRange range;
        range.low = r.number("low", range.low);
        range.high = r.number("high", range.high);
        return range;
    }
    if (kind == "per_client") {
        const ObjectReader r(obj, "schedule.rate", {"kind", "values"});
        return PerClientRates{r.numbers("values")};
    }
    throw ConfigError("schedule.rate.kind must be one of constant, per_client_range, per_client; got \"" + kind + "\"");
}

GradOracleMode parse_oracle(const json& obj) {
    const std::string kind = kind_of(obj, "oracle", "full");
    if (kind == "full") {
        const ObjectReader r(obj, "oracle", {"kind"});
        return FullGradient{};
    }
    if (kind == "minibatch") {
        const ObjectReader r(obj, "oracle", {"kind", "batch_size"});
        const int b = to_int(r.integer("batch_size", 32), "oracle.batch_size");
        if (b < 1) {
            throw ConfigError("oracle.batch_size must be >= 1");
        }
        return Minibatch{b};
    }
    if (kind == "relative_noise") {
        const ObjectReader r(obj, "oracle", {"kind", "delta"});
        const double delta = r.number("delta", 0.0);
        if (delta < 0.0) {
            throw ConfigError("oracle.delta must be >= 0");
        }
        return RelativeNoise{delta};
    }
    throw ConfigError("oracle.kind must be one of full, minibatch, relative_noise; got \"" + kind + "\"");
}

json attack_json(const AttackKind& attack) {
    if (const auto* g = std::get_if<GaussianNoiseAttack>(&attack)) {
        return {{"kind", "gaussian"},
                {"mean_mode", g->mean_mode == MeanMode::Zero ? "zero" : "honest_center"},
                {"sigma", g->sigma}};
    }
    if (const auto* s = std::get_if<SignFlipAttack>(&attack)) {
        return {{"kind", "sign_flip"}, {"scale", s->scale}};
    }
    if (std::holds_alternative<ZeroVectorAttack>(attack)) {
        return {{"kind", "zero"}};
    }
    const auto& v = std::get<FixedVectorAttack>(attack).v;
    return {{"kind", "fixed"}, {"vector", std::vector<double>(v.data(), v.data() + v.size())}};
}

json aggregator_json(const AggregatorSpec& spec) {
    if (const auto* g = std::get_if<GeometricMedianAgg>(&spec)) {
        return {{"kind", "geomed"},
                {"tol", g->weiszfeld.tol},
                {"max_iters", g->weiszfeld.max_iters},
                {"smoothing", g->weiszfeld.smoothing}};
    }
    if (const auto* t = std::get_if<TrimmedMeanAgg>(&spec)) {
        return {{"kind", "trimmed_mean"}, {"trim_fraction", t->trim_fraction}};
    }
    return {{"kind", aggregator_name(spec)}};
}

json steps_json(const StepsSpec& steps) {
    if (const auto* c = std::get_if<ConstantSteps>(&steps)) {
        return {{"kind", "constant"}, {"K", c->K ? json(*c->K) : json("auto")}};
    }
    if (const auto* c = std::get_if<CycleSteps>(&steps)) {
        return {{"kind", "cycle"}, {"values", c->values}};
    }
    if (const auto* d = std::get_if<FloorDecaySteps>(&steps)) {
        return {{"kind", "floor_decay"}, {"K1", d->K1}, {"E", d->E}};
    }
    const auto& d = std::get<LinearDecaySteps>(steps);
    return {{"kind", "linear_decay"}, {"K1", d.K1}, {"E", d.E}};
}

json rate_json(const RateSpec& rate) {
    if (const auto* c = std::get_if<ConstantRate>(&rate)) {
        return {{"kind", "constant"}, {"eta", c->eta ? json(*c->eta) : json("auto")}};
    }
    if (const auto* r = std::get_if<PerClientRange>(&rate)) {
        return {{"kind", "per_client_range"}, {"low", r->low}, {"high", r->high}};
    }
    return {{"kind", "per_client"}, {"values", std::get<PerClientRates>(rate).values}};
}

json oracle_json(const GradOracleMode& oracle) {
    if (const auto* b = std::get_if<Minibatch>(&oracle)) {
        return {{"kind", "minibatch"}, {"batch_size", b->batch_size}};
    }
    if (const auto* n = std::get_if<RelativeNoise>(&oracle)) {
        return {{"kind", "relative_noise"}, {"delta", n->delta}};
    }
    return {{"kind", "full"}};
}

} // namespace

ExperimentConfig parse_config(const json& doc) {
    const ObjectReader r(doc, "", {"problem", "M", "beta", "byzantine", "attack", "aggregator", "schedule", "oracle",
                                   "rounds", "seed", "init", "override_halfplus"});
    ExperimentConfig cfg;
    if (r.has("problem")) {
        cfg.problem = parse_problem(r.raw("problem"));
    }
    cfg.M = to_int(r.integer("M", cfg.M), "M");
    if (r.has("beta") && r.has("byzantine")) {
        throw ConfigError("give either beta or byzantine, not both");
    }
    if (r.has("byzantine")) {
        cfg.B = to_int(r.integer("byzantine", 0), "byzantine");
    } else {
        const double beta = r.number("beta", 0.2);
        if (!(beta >= 0.0 && beta <= 1.0)) {
            throw ConfigError("beta must lie in [0, 1]");
        }
        cfg.B = static_cast<int>(std::lround(beta * cfg.M));
    }
    if (r.has("attack")) {
        cfg.attack = parse_attack(r.raw("attack"));
    }
    if (r.has("aggregator")) {
        cfg.aggregator = parse_aggregator(r.raw("aggregator"));
    }
    if (r.has("schedule")) {
        const json& s = r.raw("schedule");
        const ObjectReader sr(s, "schedule", {"steps", "rate"});
        if (sr.has("steps")) {
            cfg.steps = parse_steps(sr.raw("steps"));
        }
        if (sr.has("rate")) {
            cfg.rate = parse_rate(sr.raw("rate"));
        }
    }
    if (r.has("oracle")) {
        cfg.oracle = parse_oracle(r.raw("oracle"));
    }
    cfg.rounds = to_int(r.integer("rounds", cfg.rounds), "rounds");
    cfg.seed = r.unsigned_integer("seed", cfg.seed);
    const std::string init = r.string("init", "zero");
    if (init == "zero") {
        cfg.init = InitKind::Zero;
    } else if (init == "random") {
        cfg.init = InitKind::Random;
    } else {
        throw ConfigError("init must be \"zero\" or \"random\"");
    }
    cfg.override_halfplus = r.boolean("override_halfplus", false);
    cfg.validate();
    return cfg;
}

json to_json(const ExperimentConfig& config) {
    json problem = {{"loss", config.problem.loss == LossKind::Ridge ? "ridge" : "logistic"},
                    {"lambda", config.problem.lambda},
                    {"p", config.problem.p},
                    {"samples_per_user", config.problem.samples_per_user},
                    {"heterogeneity", config.problem.heterogeneity},
                    {"seed", config.problem.seed},
                    {"csv_files", config.problem.csv_files}};
    return {{"problem", problem},
            {"M", config.M},
            {"byzantine", config.B},
            {"attack", attack_json(config.attack)},
            {"aggregator", aggregator_json(config.aggregator)},
            {"schedule", {{"steps", steps_json(config.steps)}, {"rate", rate_json(config.rate)}}},
            {"oracle", oracle_json(config.oracle)},
            {"rounds", config.rounds},
            {"seed", config.seed},
            {"init", config.init == InitKind::Zero ? "zero" : "random"},
            {"override_halfplus", config.override_halfplus}};
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

AggregatorSpec parse_aggregator_name(const std::string& name) {
    if (name == "geomed") {
        return GeometricMedianAgg{};
    }
    if (name == "mean") {
        return MeanAgg{};
    }
    if (name == "coordinate_median") {
        return CoordinateMedianAgg{};
    }
    const std::string prefix = "trimmed_mean";
    if (name.rfind(prefix, 0) == 0) {
        if (name.size() == prefix.size()) {
            return TrimmedMeanAgg{};
        }
        if (name[prefix.size()] == ':') {
            try {
                return TrimmedMeanAgg{std::stod(name.substr(prefix.size() + 1))};
            } catch (const std::exception&) {
            }
        }
    }
    throw ConfigError("unknown aggregator \"" + name + "\"");
}

std::string aggregator_name(const AggregatorSpec& spec) {
    return std::visit(
        [](const auto& a) -> std::string {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, GeometricMedianAgg>) {
                return "geomed";
            } else if constexpr (std::is_same_v<T, MeanAgg>) {
                return "mean";
            } else if constexpr (std::is_same_v<T, CoordinateMedianAgg>) {
                return "coordinate_median";
            } else {
                return "trimmed_mean";
            }
        },
        spec);
}

} // namespace byzfl
