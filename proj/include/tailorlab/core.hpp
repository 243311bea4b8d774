#pragma once

// Domain types shared across the toolkit and the deterministic tailoring
// logic that maps an observed trajectory to a response classification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailorlab/error.hpp"
#include "tailorlab/format.hpp"

namespace tailorlab {

using Week = int;

/// Ids are used verbatim in CSV headers and path encodings.
inline bool is_valid_id(std::string_view id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](char ch) {
        return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
               ch == '-';
    });
}

/// Weekly values of every observed variable over weeks 1..T. Storage is
/// variable-major; the variable id list is shared by all trajectories of a
/// population.
class ObservedTrajectory {
public:
    ObservedTrajectory() = default;

    ObservedTrajectory(std::shared_ptr<const std::vector<std::string>> variables, Week horizon,
                       std::vector<double> values)
        : variables_(std::move(variables)), horizon_(horizon), values_(std::move(values)) {
        if (!variables_) throw ConfigError("trajectory without variable list");
        if (horizon_ < 1) throw ConfigError("trajectory horizon must be >= 1");
        if (values_.size() != variables_->size() * static_cast<std::size_t>(horizon_)) {
            throw ConfigError("trajectory value count does not match variables x horizon");
        }
        for (double v : values_) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("trajectory values must be finite and >= 0");
        }
    }

    Week horizon() const noexcept { return horizon_; }
    const std::vector<std::string>& variables() const noexcept { return *variables_; }
    const std::shared_ptr<const std::vector<std::string>>& variable_list() const noexcept { return variables_; }

    std::size_t index_of(std::string_view id) const {
        const auto& vars = *variables_;
        for (std::size_t i = 0; i < vars.size(); ++i) {
            if (vars[i] == id) return i;
        }
        throw ConfigError("unknown variable id '" + std::string(id) + "'");
    }

    /// Weeks 1..T of one variable.
    std::span<const double> series(std::size_t variable) const {
        return {values_.data() + variable * static_cast<std::size_t>(horizon_), static_cast<std::size_t>(horizon_)};
    }

    double at(std::size_t variable, Week week) const { return series(variable)[static_cast<std::size_t>(week - 1)]; }

    const std::vector<double>& raw() const noexcept { return values_; }

private:
    std::shared_ptr<const std::vector<std::string>> variables_;
    Week horizon_ = 0;
    std::vector<double> values_;
};

enum class Aggregation { mean_rate, cumulative_sum, running_max, last_value };
enum class Direction { below_is_nonresponse, above_is_nonresponse };
enum class Response { responder, nonresponder };

inline std::string_view to_string(Aggregation a) {
    switch (a) {
        case Aggregation::mean_rate: return "mean";
        case Aggregation::cumulative_sum: return "sum";
        case Aggregation::running_max: return "max";
        case Aggregation::last_value: return "last";
    }
    return "?";
}

inline std::string_view to_string(Direction d) {
    return d == Direction::below_is_nonresponse ? "below" : "above";
}

inline Aggregation parse_aggregation(std::string_view text) {
    if (text == "mean") return Aggregation::mean_rate;
    if (text == "sum") return Aggregation::cumulative_sum;
    if (text == "max") return Aggregation::running_max;
    if (text == "last") return Aggregation::last_value;
    throw ConfigError("unknown aggregation '" + std::string(text) + "' (expected mean, sum, max, last)");
}

inline Direction parse_direction(std::string_view text) {
    if (text == "below") return Direction::below_is_nonresponse;
    if (text == "above") return Direction::above_is_nonresponse;
    throw ConfigError("unknown direction '" + std::string(text) + "' (expected below, above)");
}

/// Which variable to summarize and how; the cutoff-free part of a condition.
struct Feature {
    std::string variable;
    Aggregation aggregation = Aggregation::mean_rate;
    Direction direction = Direction::below_is_nonresponse;

    bool operator==(const Feature&) const = default;
};

struct AtomicCondition {
    Feature feature;
    double cutoff = 0.0;

    bool operator==(const AtomicCondition&) const = default;
};

/// Decision week plus a single condition or a conjunction of two.
class TailoringRule {
public:
    TailoringRule(Week decision_week, AtomicCondition first, std::optional<AtomicCondition> second = std::nullopt)
        : decision_week_(decision_week), first_(std::move(first)), second_(std::move(second)) {
        if (decision_week_ < 1) throw ConfigError("decision week must be >= 1");
        check(first_);
        if (second_) {
            check(*second_);
            if (second_->feature.variable == first_.feature.variable) {
                throw ConfigError("conjunction must combine two distinct variables");
            }
        }
    }

    Week decision_week() const noexcept { return decision_week_; }
    const AtomicCondition& first() const noexcept { return first_; }
    const std::optional<AtomicCondition>& second() const noexcept { return second_; }
    bool is_conjunction() const noexcept { return second_.has_value(); }

    std::size_t size() const noexcept { return second_ ? 2 : 1; }
    const AtomicCondition& condition(std::size_t i) const { return i == 0 ? first_ : *second_; }

    bool operator==(const TailoringRule&) const = default;

private:
    static void check(const AtomicCondition& c) {
        if (!std::isfinite(c.cutoff)) throw ConfigError("cutoff must be finite");
        if (!is_valid_id(c.feature.variable)) throw ConfigError("invalid variable id '" + c.feature.variable + "'");
    }

    Week decision_week_;
    AtomicCondition first_;
    std::optional<AtomicCondition> second_;
};

struct AdaptiveIntervention {
    std::string initial_treatment = "initial";
    TailoringRule rule;
    std::string rescue_option;
};

/// Summary of one variable over weeks 1..K.
inline double aggregate_feature(const ObservedTrajectory& trajectory, const Feature& feature, Week k) {
    if (k < 1 || k > trajectory.horizon()) {
        throw ConfigError("decision week " + std::to_string(k) + " outside trajectory horizon 1.." +
                          std::to_string(trajectory.horizon()));
    }
    const auto window = trajectory.series(trajectory.index_of(feature.variable)).first(static_cast<std::size_t>(k));
    switch (feature.aggregation) {
        case Aggregation::cumulative_sum: return std::accumulate(window.begin(), window.end(), 0.0);
        case Aggregation::mean_rate: return std::accumulate(window.begin(), window.end(), 0.0) / k;
        case Aggregation::running_max: return *std::max_element(window.begin(), window.end());
        case Aggregation::last_value: return window.back();
    }
    return 0.0;
}

inline double aggregate_feature(const ObservedTrajectory& trajectory, const AtomicCondition& condition, Week k) {
    return aggregate_feature(trajectory, condition.feature, k);
}

/// Strict inequality on both sides: a value equal to the cutoff never
/// signals nonresponse.
inline bool signals_nonresponse(double value, Direction direction, double cutoff) noexcept {
    return direction == Direction::below_is_nonresponse ? value < cutoff : value > cutoff;
}

inline bool condition_holds(const ObservedTrajectory& trajectory, const AtomicCondition& condition, Week k) {
    return signals_nonresponse(aggregate_feature(trajectory, condition, k), condition.feature.direction,
                               condition.cutoff);
}

inline Response classify_response(const ObservedTrajectory& trajectory, const TailoringRule& rule) {
    const Week k = rule.decision_week();
    bool nonresponse = condition_holds(trajectory, rule.first(), k);
    if (nonresponse && rule.second()) nonresponse = condition_holds(trajectory, *rule.second(), k);
    return nonresponse ? Response::nonresponder : Response::responder;
}

inline bool is_nonresponder(const ObservedTrajectory& trajectory, const TailoringRule& rule) {
    return classify_response(trajectory, rule) == Response::nonresponder;
}

// Canonical text forms. These appear in dataset columns and are parsed back,
// e.g. "app:mean:below:2@4" or "cannabis:mean:above:1&app:mean:below:1@4".

inline std::string to_string(const Feature& f) {
    return f.variable + ":" + std::string(to_string(f.aggregation)) + ":" + std::string(to_string(f.direction));
}

inline std::string to_string(const AtomicCondition& c) { return to_string(c.feature) + ":" + format_double(c.cutoff); }

/// Conditions without the decision week.
inline std::string condition_text(const TailoringRule& r) {
    std::string out = to_string(r.first());
    if (r.second()) out += "&" + to_string(*r.second());
    return out;
}

inline std::string cutoff_text(const TailoringRule& r) {
    std::string out = format_double(r.first().cutoff);
    if (r.second()) out += "/" + format_double(r.second()->cutoff);
    return out;
}

inline std::string to_string(const TailoringRule& r) { return condition_text(r) + "@" + std::to_string(r.decision_week()); }

namespace detail {

inline std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

inline AtomicCondition parse_condition(std::string_view text) {
    auto parts = split(text, ':');
    if (parts.size() != 4) throw ConfigError("malformed condition '" + std::string(text) + "'");
    AtomicCondition c;
    c.feature.variable = std::string(parts[0]);
    c.feature.aggregation = parse_aggregation(parts[1]);
    c.feature.direction = parse_direction(parts[2]);
    try {
        c.cutoff = parse_double(parts[3], "condition cutoff");
    } catch (const SchemaError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

}  // namespace detail

inline TailoringRule parse_rule(std::string_view text) {
    const auto at = text.rfind('@');
    if (at == std::string_view::npos) throw ConfigError("rule '" + std::string(text) + "' lacks @week");
    Week k = 0;
    try {
        k = static_cast<Week>(parse_int(text.substr(at + 1), "rule decision week"));
    } catch (const SchemaError& e) {
        throw ConfigError(e.what());
    }
    auto conds = detail::split(text.substr(0, at), '&');
    if (conds.size() > 2) throw ConfigError("rule '" + std::string(text) + "' has more than two conditions");
    if (conds.size() == 2) return TailoringRule(k, detail::parse_condition(conds[0]), detail::parse_condition(conds[1]));
    return TailoringRule(k, detail::parse_condition(conds[0]));
}

}  // namespace tailorlab
