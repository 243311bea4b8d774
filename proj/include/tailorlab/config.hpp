#pragma once

// Strict JSON run configuration. Every object is read through a Node that
// records which keys were consumed; anything left over is rejected with its
// full field path.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tailorlab/analysis.hpp"
#include "tailorlab/core.hpp"
#include "tailorlab/datagen.hpp"
#include "tailorlab/designs.hpp"
#include "tailorlab/error.hpp"

namespace tailorlab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Analysis block

struct ContrastsSpec {
    std::vector<Factor> factors;
    Correction correction = Correction::none;
};

struct IpwSpec {
    std::vector<AdaptiveIntervention> regimes;
    bool normalized = true;
};

struct QuadraticSpec {
    std::size_t points = 25;  // plot-data resolution
};

struct ElbowSpec {
    Feature feature;
    std::vector<Week> times;
    std::optional<double> success_threshold;
};

struct ConditionalMeanSpec {
    Feature feature;
    std::vector<double> cutoffs;
    Week week = 0;
};

struct CutoffCostSpec {
    Feature feature;
    Week week = 0;
    std::vector<double> grid;
};

struct ModerationSpec {
    std::vector<Feature> candidates;
    Week week = 0;
};

struct PositivitySpec {
    Feature feature;
    Week week = 0;
    std::vector<double> grid;
    std::size_t m = 0;
};

using EstimatorVariant = std::variant<ContrastsSpec, IpwSpec, QuadraticSpec, ElbowSpec, ConditionalMeanSpec,
                                      CutoffCostSpec, ModerationSpec, PositivitySpec>;

inline std::string_view estimator_type(const EstimatorVariant& v) {
    static constexpr std::string_view names[] = {"contrasts",   "ipw",        "quadratic",  "elbow",
                                                 "conditional_mean", "cutoff_cost", "moderation", "positivity"};
    return names[v.index()];
}

/// Estimators that need randomized rescue decisions to be meaningful.
inline bool is_causal(const EstimatorVariant& v) {
    return std::holds_alternative<IpwSpec>(v) || std::holds_alternative<ModerationSpec>(v);
}

struct EstimatorSpec {
    std::string name;  // output file stem; defaults to the type
    std::optional<OutcomeScale> outcome;  // overrides the analysis-level outcome
    EstimatorVariant spec;
};

struct AnalysisConfig {
    OutcomeScale outcome = OutcomeScale::raw;
    std::size_t bootstrap = 1000;
    double delta = 0.02;
    std::optional<double> kappa;  // recompute Y_adj before analysis
    double w_fp = 1.0;
    double w_fn = 1.0;
    std::vector<EstimatorSpec> estimators;
};

struct McConfig {
    std::size_t replicates = 1000;
    double alpha = 0.05;
    std::vector<std::size_t> n_grid;
    double target_power = 0.8;
    std::size_t contrast = 0;
    std::size_t reference_n = 0;
    Correction correction = Correction::none;
    std::vector<AdaptiveIntervention> regimes;
    bool ipw_normalized = true;
};

struct RunConfig {
    std::optional<ScenarioParams> scenario;
    std::optional<DesignSpec> design;
    std::optional<AnalysisConfig> analysis;
    std::optional<McConfig> mc;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

// ---------------------------------------------------------------------------
// Strict reader

class Node {
public:
    Node(const json& value, std::string path) : value_(&value), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }
    const json& value() const noexcept { return *value_; }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what); }

    bool has(const std::string& key) const {
        require_object();
        return value_->contains(key);
    }

    Node child(const std::string& key) const {
        require_object();
        used_.insert(key);
        auto it = value_->find(key);
        if (it == value_->end()) Node(*value_, join(key)).fail("missing required field");
        return Node(*it, join(key));
    }

    std::optional<Node> optional_child(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return child(key);
    }

    std::vector<Node> items() const {
        if (!value_->is_array()) fail("expected an array");
        std::vector<Node> out;
        for (std::size_t i = 0; i < value_->size(); ++i) {
            out.emplace_back((*value_)[i], path_ + "[" + std::to_string(i) + "]");
        }
        return out;
    }

    double number() const {
        if (!value_->is_number()) fail("expected a number");
        return value_->get<double>();
    }

    long long integer() const {
        if (value_->is_number_integer()) return value_->get<long long>();
        if (value_->is_number_float()) {
            const double d = value_->get<double>();
            if (std::floor(d) == d && std::abs(d) < 9.0e15) return static_cast<long long>(d);
        }
        fail("expected an integer");
    }

    std::uint64_t unsigned_integer() const {
        if (value_->is_number_unsigned()) return value_->get<std::uint64_t>();
        const long long v = integer();
        if (v < 0) fail("expected a non-negative integer");
        return static_cast<std::uint64_t>(v);
    }

    std::size_t count() const { return static_cast<std::size_t>(unsigned_integer()); }

    std::string string() const {
        if (!value_->is_string()) fail("expected a string");
        return value_->get<std::string>();
    }

    bool boolean() const {
        if (!value_->is_boolean()) fail("expected true or false");
        return value_->get<bool>();
    }

    // Convenience accessors with defaults.
    double number(const std::string& key, double fallback) const {
        return has(key) ? child(key).number() : (used_.insert(key), fallback);
    }
    long long integer(const std::string& key, long long fallback) const {
        return has(key) ? child(key).integer() : (used_.insert(key), fallback);
    }
    std::size_t count(const std::string& key, std::size_t fallback) const {
        return has(key) ? child(key).count() : (used_.insert(key), fallback);
    }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? child(key).string() : (used_.insert(key), fallback);
    }
    bool boolean(const std::string& key, bool fallback) const {
        return has(key) ? child(key).boolean() : (used_.insert(key), fallback);
    }

    std::vector<double> numbers() const {
        std::vector<double> out;
        for (const auto& n : items()) out.push_back(n.number());
        return out;
    }

    std::vector<Week> weeks() const {
        std::vector<Week> out;
        for (const auto& n : items()) {
            const auto v = n.integer();
            if (v < 1 || v > 100000) n.fail("expected a week number >= 1");
            out.push_back(static_cast<Week>(v));
        }
        return out;
    }

    Week week() const {
        const auto v = integer();
        if (v < 1 || v > 100000) fail("expected a week number >= 1");
        return static_cast<Week>(v);
    }

    /// Rejects keys that were never read.
    void finish() const {
        require_object();
        for (const auto& [key, v] : value_->items()) {
            if (!used_.count(key)) throw ConfigError(join(key) + ": unknown field");
        }
    }

    void require_object() const {
        if (!value_->is_object()) fail("expected an object");
    }

private:
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* value_;
    std::string path_;
    mutable std::set<std::string> used_;
};

namespace detail {

/// Runs a parser that may throw plain ConfigErrors from library validation and
/// prefixes them with the field path.
template <class F>
auto at_field(const Node& node, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (what.rfind(node.path(), 0) == 0) throw;
        throw ConfigError(node.path() + ": " + what);
    } catch (const CoverageError& e) {
        throw ConfigError(node.path() + ": " + e.what());
    }
}

inline Feature parse_feature(const Node& node) {
    return at_field(node, [&] {
        if (node.value().is_string()) {
            const auto text = node.string();
            const auto parts = split(text, ':');
            if (parts.size() != 3) node.fail("feature text must look like variable:aggregation:direction");
            return Feature{std::string(parts[0]), parse_aggregation(parts[1]), parse_direction(parts[2])};
        }
        Feature f;
        f.variable = node.child("variable").string();
        f.aggregation = parse_aggregation(node.string("aggregation", "mean"));
        f.direction = parse_direction(node.string("direction", "below"));
        node.finish();
        if (!is_valid_id(f.variable)) node.fail("invalid variable id '" + f.variable + "'");
        return f;
    });
}

inline TailoringRule parse_rule_node(const Node& node) {
    return at_field(node, [&] { return parse_rule(node.string()); });
}

inline AdaptiveIntervention parse_regime(const Node& node) {
    AdaptiveIntervention adi{node.string("initial_treatment", "initial"), parse_rule_node(node.child("rule")),
                             node.child("rescue_option").string()};
    node.finish();
    return adi;
}

inline std::vector<AdaptiveIntervention> parse_regimes(const Node& node) {
    std::vector<AdaptiveIntervention> out;
    for (const auto& item : node.items()) out.push_back(parse_regime(item));
    return out;
}

inline Correction parse_correction(const Node& node) {
    const auto text = node.string();
    if (text == "none") return Correction::none;
    if (text == "bonferroni") return Correction::bonferroni;
    node.fail("unknown correction '" + text + "' (expected none, bonferroni)");
}

inline ScenarioParams parse_scenario(const Node& node) {
    ScenarioParams p;
    p.horizon = static_cast<Week>(node.integer("horizon", p.horizon));
    p.n = node.count("n", p.n);
    if (node.has("decision_weeks")) p.decision_weeks = node.child("decision_weeks").weeks();
    for (const auto& v : node.child("variables").items()) {
        VariableParams vp;
        vp.id = v.child("id").string();
        vp.mu = v.number("mu", 0.0);
        vp.beta_s = v.number("beta_s", 0.0);
        vp.phi = v.number("phi", 0.0);
        vp.sigma_eps = v.number("sigma_eps", 1.0);
        v.finish();
        p.variables.push_back(vp);
    }
    if (auto o = node.optional_child("outcome")) {
        p.outcome.alpha0 = o->number("alpha0", 0.0);
        p.outcome.alpha_s = o->number("alpha_s", 0.0);
        p.outcome.sigma_y = o->number("sigma_y", 1.0);
        o->finish();
    }
    for (const auto& r : node.child("rescue_options").items()) {
        RescueParams rp;
        rp.id = r.child("id").string();
        rp.theta0 = r.number("theta0", 0.0);
        rp.theta_s = r.number("theta_s", 0.0);
        rp.lambda = r.number("lambda", 0.0);
        r.finish();
        p.rescue_options.push_back(rp);
    }
    p.kappa = node.number("kappa", 0.0);
    p.success_threshold = node.number("success_threshold", 0.0);
    node.finish();
    at_field(node, [&] { p.validate(); });
    return p;
}

inline TimeAllocation parse_allocation(const Node& node) {
    const auto text = node.string();
    if (text == "upfront") return TimeAllocation::upfront;
    if (text == "sequential") return TimeAllocation::sequential;
    node.fail("unknown allocation '" + text + "' (expected upfront, sequential)");
}

inline DesignSpec parse_design(const Node& node) {
    const auto type = node.child("type").string();
    DesignSpec spec;
    if (node.has("block_size")) spec.block_size = node.child("block_size").count();
    if (type == "cutoff_trial") {
        CutoffTrial d;
        d.feature = parse_feature(node.child("feature"));
        d.cutoffs = node.child("cutoffs").numbers();
        d.decision_week = node.has("decision_week") ? node.child("decision_week").week() : 4;
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "decision_time_trial") {
        DecisionTimeTrial d;
        d.feature = parse_feature(node.child("feature"));
        d.cutoff = node.child("cutoff").number();
        d.times = node.child("times").weeks();
        if (node.has("allocation")) d.allocation = parse_allocation(node.child("allocation"));
        if (node.has("probabilities")) d.probabilities = node.child("probabilities").numbers();
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "factorial_cutoff_time") {
        FactorialCutoffTime d;
        d.feature = parse_feature(node.child("feature"));
        d.cutoffs = node.child("cutoffs").numbers();
        d.times = node.child("times").weeks();
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "hybrid_factorial_smart") {
        HybridFactorialSmart d;
        d.feature = parse_feature(node.child("feature"));
        d.cutoffs = node.child("cutoffs").numbers();
        d.times = node.child("times").weeks();
        for (const auto& o : node.child("rescue_options").items()) d.rescue_options.push_back(o.string());
        spec.variant = d;
    } else if (type == "variable_trial") {
        VariableTrial d;
        for (const auto& r : node.child("rules").items()) d.rules.push_back(parse_rule_node(r));
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "singly_randomized_rescue") {
        SinglyRandomizedRescue d;
        if (node.has("decision_week")) d.decision_week = node.child("decision_week").week();
        d.probability = node.number("probability", d.probability);
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "unrestricted_smart") {
        UnrestrictedSmart d;
        d.times = node.child("times").weeks();
        d.probabilities = node.child("probabilities").numbers();
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "full_cross") {
        FullCross d;
        for (const auto& v : node.child("variables").items()) {
            VariableOption opt;
            opt.name = v.child("name").string();
            for (const auto& f : v.child("features").items()) opt.features.push_back(parse_feature(f));
            for (const auto& level : v.child("cutoff_levels").items()) opt.cutoff_levels.push_back(level.numbers());
            v.finish();
            d.variables.push_back(opt);
        }
        d.times = node.child("times").weeks();
        d.rescue_option = node.child("rescue_option").string();
        spec.variant = d;
    } else if (type == "initial_only") {
        spec.variant = InitialOnly{};
    } else {
        node.child("type").fail("unknown design type '" + type + "'");
    }
    node.finish();
    at_field(node, [&] { validate_design(spec); });
    return spec;
}

inline EstimatorSpec parse_estimator(const Node& node) {
    const auto type = node.child("type").string();
    EstimatorSpec e;
    e.name = node.string("name", type);
    if (!is_valid_id(e.name)) node.child("name").fail("name must be a valid file stem");
    if (node.has("outcome")) {
        const auto o = node.child("outcome");
        e.outcome = at_field(o, [&] { return parse_outcome_scale(o.string()); });
    }
    if (type == "contrasts") {
        ContrastsSpec s;
        for (const auto& f : node.child("factors").items()) {
            s.factors.push_back(at_field(f, [&] { return parse_factor(f.string()); }));
        }
        if (s.factors.empty()) node.child("factors").fail("must not be empty");
        if (node.has("correction")) s.correction = parse_correction(node.child("correction"));
        e.spec = s;
    } else if (type == "ipw") {
        IpwSpec s;
        s.regimes = parse_regimes(node.child("regimes"));
        if (s.regimes.empty()) node.child("regimes").fail("must not be empty");
        s.normalized = node.boolean("normalized", true);
        e.spec = s;
    } else if (type == "quadratic") {
        QuadraticSpec s;
        s.points = node.count("points", s.points);
        if (s.points < 2) node.child("points").fail("must be >= 2");
        e.spec = s;
    } else if (type == "elbow") {
        ElbowSpec s;
        s.feature = parse_feature(node.child("feature"));
        s.times = node.child("times").weeks();
        if (s.times.empty()) node.child("times").fail("must not be empty");
        if (node.has("success_threshold")) s.success_threshold = node.child("success_threshold").number();
        e.spec = s;
    } else if (type == "conditional_mean") {
        ConditionalMeanSpec s;
        s.feature = parse_feature(node.child("feature"));
        s.cutoffs = node.child("cutoffs").numbers();
        if (s.cutoffs.empty()) node.child("cutoffs").fail("must not be empty");
        s.week = node.child("week").week();
        e.spec = s;
    } else if (type == "cutoff_cost") {
        CutoffCostSpec s;
        s.feature = parse_feature(node.child("feature"));
        s.week = node.child("week").week();
        s.grid = node.child("grid").numbers();
        if (s.grid.empty()) node.child("grid").fail("must not be empty");
        e.spec = s;
    } else if (type == "moderation") {
        ModerationSpec s;
        for (const auto& f : node.child("candidates").items()) s.candidates.push_back(parse_feature(f));
        if (s.candidates.empty()) node.child("candidates").fail("must not be empty");
        s.week = node.child("week").week();
        e.spec = s;
    } else if (type == "positivity") {
        PositivitySpec s;
        s.feature = parse_feature(node.child("feature"));
        s.week = node.child("week").week();
        s.grid = node.child("grid").numbers();
        if (s.grid.empty()) node.child("grid").fail("must not be empty");
        s.m = node.count("m", 0);
        e.spec = s;
    } else {
        node.child("type").fail("unknown estimator type '" + type + "'");
    }
    node.finish();
    return e;
}

inline AnalysisConfig parse_analysis(const Node& node) {
    AnalysisConfig a;
    if (node.has("outcome")) {
        const auto o = node.child("outcome");
        a.outcome = at_field(o, [&] { return parse_outcome_scale(o.string()); });
    }
    a.bootstrap = node.count("bootstrap", a.bootstrap);
    a.delta = node.number("delta", a.delta);
    if (!(a.delta >= 0.0)) node.child("delta").fail("must be >= 0");
    if (node.has("kappa")) {
        a.kappa = node.child("kappa").number();
        if (!(*a.kappa >= 0.0)) node.child("kappa").fail("must be >= 0");
    }
    a.w_fp = node.number("w_fp", a.w_fp);
    a.w_fn = node.number("w_fn", a.w_fn);
    if (!(a.w_fp >= 0.0)) node.child("w_fp").fail("must be >= 0");
    if (!(a.w_fn >= 0.0)) node.child("w_fn").fail("must be >= 0");
    std::set<std::string> names;
    for (const auto& item : node.child("estimators").items()) {
        a.estimators.push_back(parse_estimator(item));
        if (!names.insert(a.estimators.back().name).second) {
            item.fail("duplicate estimator name '" + a.estimators.back().name + "'; set a distinct \"name\"");
        }
    }
    node.finish();
    return a;
}

inline McConfig parse_mc(const Node& node) {
    McConfig m;
    m.replicates = node.count("replicates", m.replicates);
    if (m.replicates < 1) node.child("replicates").fail("must be >= 1");
    m.alpha = node.number("alpha", m.alpha);
    if (!(m.alpha > 0.0 && m.alpha < 1.0)) node.child("alpha").fail("must lie in (0,1)");
    if (node.has("n_grid")) {
        const auto g = node.child("n_grid");
        for (const auto& item : g.items()) m.n_grid.push_back(item.count());
        for (std::size_t i = 0; i < m.n_grid.size(); ++i) {
            if (m.n_grid[i] < 2) g.fail("sample sizes must be >= 2");
            if (i > 0 && m.n_grid[i] <= m.n_grid[i - 1]) g.fail("must be strictly increasing");
        }
    }
    m.target_power = node.number("target_power", m.target_power);
    if (!(m.target_power > 0.0 && m.target_power < 1.0)) node.child("target_power").fail("must lie in (0,1)");
    m.contrast = node.count("contrast", m.contrast);
    m.reference_n = node.count("reference_n", m.reference_n);
    if (node.has("correction")) m.correction = parse_correction(node.child("correction"));
    if (node.has("regimes")) m.regimes = parse_regimes(node.child("regimes"));
    m.ipw_normalized = node.boolean("ipw_normalized", true);
    node.finish();
    return m;
}

inline void check_feature(const Node& node, const ScenarioParams& s, const Feature& f) {
    for (const auto& v : s.variables) {
        if (v.id == f.variable) return;
    }
    node.fail("unknown variable id '" + f.variable + "'");
}

inline void check_week(const Node& node, const ScenarioParams& s, Week k) {
    if (k < 1 || k > s.horizon) node.fail("week " + std::to_string(k) + " outside horizon 1.." + std::to_string(s.horizon));
}

inline void check_regime(const Node& node, const ScenarioParams& s, const AdaptiveIntervention& adi) {
    for (std::size_t i = 0; i < adi.rule.size(); ++i) check_feature(node, s, adi.rule.condition(i).feature);
    check_week(node, s, adi.rule.decision_week());
    at_field(node, [&] { (void)s.rescue_index(adi.rescue_option); });
}

/// Cross-block consistency between the analysis block and a scenario.
inline void check_analysis(const Node& node, const ScenarioParams& s, const AnalysisConfig& a) {
    const auto items = node.child("estimators").items();
    for (std::size_t i = 0; i < a.estimators.size(); ++i) {
        const auto& where = items[i];
        std::visit(
            [&](const auto& e) {
                using T = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<T, IpwSpec>) {
                    const auto regimes = where.child("regimes").items();
                    for (std::size_t r = 0; r < e.regimes.size(); ++r) check_regime(regimes[r], s, e.regimes[r]);
                } else if constexpr (std::is_same_v<T, ElbowSpec>) {
                    check_feature(where.child("feature"), s, e.feature);
                    for (Week t : e.times) check_week(where.child("times"), s, t);
                } else if constexpr (std::is_same_v<T, ModerationSpec>) {
                    const auto c = where.child("candidates").items();
                    for (std::size_t k = 0; k < e.candidates.size(); ++k) check_feature(c[k], s, e.candidates[k]);
                    check_week(where.child("week"), s, e.week);
                } else if constexpr (std::is_same_v<T, ContrastsSpec> || std::is_same_v<T, QuadraticSpec>) {
                    // checked against the records at run time
                } else {
                    check_feature(where.child("feature"), s, e.feature);
                    check_week(where.child("week"), s, e.week);
                }
            },
            a.estimators[i].spec);
    }
}

/// Converts a parse error position into a line and column.
inline std::string locate(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::string what = e.what();
        // Drop the library's "[json.exception.parse_error.101] " prefix.
        if (auto pos = what.find("] "); pos != std::string::npos) what = what.substr(pos + 2);
        throw ConfigError(source + ": invalid JSON at " + detail::locate(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + what);
    }
}

inline RunConfig parse_config(const json& doc) {
    Node root(doc, "");
    root.require_object();
    RunConfig cfg;
    if (root.has("seed")) cfg.seed = root.child("seed").unsigned_integer();
    if (root.has("out")) cfg.out = root.child("out").string();
    if (auto n = root.optional_child("scenario")) cfg.scenario = detail::parse_scenario(*n);
    if (auto n = root.optional_child("design")) cfg.design = detail::parse_design(*n);
    if (auto n = root.optional_child("analysis")) cfg.analysis = detail::parse_analysis(*n);
    if (auto n = root.optional_child("mc")) cfg.mc = detail::parse_mc(*n);
    root.finish();

    if (cfg.scenario && cfg.design) {
        const auto node = root.child("design");
        auto known_option = [&](const Node& n) {
            if (n.value().is_string()) detail::at_field(n, [&] { (void)cfg.scenario->rescue_index(n.string()); });
        };
        if (node.has("rescue_option")) known_option(node.child("rescue_option"));
        if (node.has("rescue_options") && node.child("rescue_options").value().is_array()) {
            for (const auto& o : node.child("rescue_options").items()) known_option(o);
        }
        detail::at_field(node, [&] { check_design_coverage(*cfg.scenario, *cfg.design); });
    }
    if (cfg.scenario && cfg.analysis) detail::check_analysis(root.child("analysis"), *cfg.scenario, *cfg.analysis);
    if (cfg.scenario && cfg.mc) {
        const auto node = root.child("mc");
        if (!cfg.mc->regimes.empty()) {
            const auto items = node.child("regimes").items();
            for (std::size_t i = 0; i < cfg.mc->regimes.size(); ++i) {
                detail::check_regime(items[i], *cfg.scenario, cfg.mc->regimes[i]);
                detail::at_field(items[i], [&] { (void)cfg.scenario->week_index(cfg.mc->regimes[i].rule.decision_week()); });
            }
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(parse_json_text(buf.str(), path));
}

}  // namespace tailorlab
