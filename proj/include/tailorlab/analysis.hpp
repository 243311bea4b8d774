#pragma once

// Estimators for trial records: marginal arm contrasts, inverse-probability
// weighted regime values, the quadratic decision-time model, and the
// correlational diagnostics (conditional means, ROC AUC elbow, cutoff cost
// scan, moderation, positivity).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tailorlab/core.hpp"
#include "tailorlab/datagen.hpp"
#include "tailorlab/designs.hpp"
#include "tailorlab/error.hpp"
#include "tailorlab/format.hpp"
#include "tailorlab/rng.hpp"
#include "tailorlab/stats.hpp"

namespace tailorlab {

inline constexpr std::string_view kCorrelationalCaveat =
    "correlational: describes outcomes under the initial treatment only and does not identify the effect of "
    "rescue or of the tailoring choice";
inline constexpr std::string_view kElbowCaveat =
    "correlational: predictive strength by week does not show how rescue effectiveness changes with the "
    "decision time";
inline constexpr std::string_view kEqualCostWarning =
    "equal misclassification costs assumed: a false positive weighs the same as a false negative";

inline double outcome_of(const TrialRecord& r, OutcomeScale scale) {
    switch (scale) {
        case OutcomeScale::raw: return r.y;
        case OutcomeScale::binary: return r.y_bin;
        case OutcomeScale::cost_adjusted: return r.y_adj;
    }
    return r.y;
}

inline std::string_view to_string(OutcomeScale s) {
    switch (s) {
        case OutcomeScale::raw: return "y";
        case OutcomeScale::binary: return "y_bin";
        case OutcomeScale::cost_adjusted: return "y_adj";
    }
    return "?";
}

inline OutcomeScale parse_outcome_scale(std::string_view text) {
    if (text == "y") return OutcomeScale::raw;
    if (text == "y_bin") return OutcomeScale::binary;
    if (text == "y_adj") return OutcomeScale::cost_adjusted;
    throw ConfigError("unknown outcome '" + std::string(text) + "' (expected y, y_bin, y_adj)");
}

namespace detail {

inline void require_initial_only(const std::vector<TrialRecord>& records, std::string_view estimator) {
    for (const auto& r : records) {
        if (r.rescued) {
            throw AnalysisError(std::string(estimator),
                                "requires initial-treatment-only records, participant " +
                                    std::to_string(r.participant_id) + " received rescue");
        }
    }
}

/// Orders labels numerically when both parse as numbers, else lexically.
inline bool label_less(const std::string& a, const std::string& b) {
    double x = 0.0, y = 0.0;
    auto ra = std::from_chars(a.data(), a.data() + a.size(), x);
    auto rb = std::from_chars(b.data(), b.data() + b.size(), y);
    const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size();
    const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size();
    if (na && nb && x != y) return x < y;
    if (na != nb) return na;
    return a < b;
}

inline bool key_less(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        if (a[i] != b[i]) return label_less(a[i], b[i]);
    }
    return a.size() < b.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Marginal arm contrasts

enum class Factor { cutoff, time, variable, rescue, rule };

inline std::string_view to_string(Factor f) {
    switch (f) {
        case Factor::cutoff: return "cutoff";
        case Factor::time: return "time";
        case Factor::variable: return "variable";
        case Factor::rescue: return "rescue";
        case Factor::rule: return "rule";
    }
    return "?";
}

inline Factor parse_factor(std::string_view text) {
    if (text == "cutoff") return Factor::cutoff;
    if (text == "time") return Factor::time;
    if (text == "variable") return Factor::variable;
    if (text == "rescue") return Factor::rescue;
    if (text == "rule") return Factor::rule;
    throw ConfigError("unknown grouping factor '" + std::string(text) + "'");
}

inline const std::optional<std::string>& factor_label(const TrialRecord& r, Factor f) {
    switch (f) {
        case Factor::cutoff: return r.arms.cutoff;
        case Factor::time: return r.arms.time;
        case Factor::variable: return r.arms.variable;
        case Factor::rescue: return r.arms.rescue;
        case Factor::rule: return r.rule;
    }
    return r.rule;
}

enum class Correction { none, bonferroni };

struct GroupSummary {
    std::string label;
    std::size_t n = 0;
    double mean = 0.0;
    double se = 0.0;
    bool empty = false;
    // Within-arm description only; never contrasted across arms.
    std::size_t nonresponders = 0;
    std::optional<double> nonresponder_share;
    std::optional<double> responder_mean;
    std::optional<double> nonresponder_mean;
};

struct PairwiseContrast {
    std::string first;
    std::string second;
    double difference = 0.0;  // mean(first) - mean(second)
    double se = 0.0;
    double df = 0.0;
    double p = 1.0;
    double p_adjusted = 1.0;
};

struct ContrastTable {
    std::vector<Factor> factors;
    OutcomeScale outcome = OutcomeScale::raw;
    std::vector<GroupSummary> groups;
    std::vector<PairwiseContrast> contrasts;
    std::vector<std::string> warnings;
};

/// Group means pool responders and nonresponders. `expected_levels` lists
/// group labels that should exist; missing ones are reported empty and left
/// out of the pairwise contrasts.
inline ContrastTable arm_contrasts(const std::vector<TrialRecord>& records, const std::vector<Factor>& factors,
                                   OutcomeScale outcome = OutcomeScale::raw, Correction correction = Correction::none,
                                   const std::vector<std::string>& expected_levels = {}) {
    if (factors.empty()) throw ConfigError("arm_contrasts needs at least one grouping factor");
    ContrastTable table;
    table.factors = factors;
    table.outcome = outcome;

    struct Acc {
        std::vector<std::string> key;
        std::vector<double> values, responder_values, nonresponder_values;
    };
    std::map<std::string, Acc> groups;
    for (const auto& r : records) {
        std::vector<std::string> key;
        for (Factor f : factors) {
            const auto& label = factor_label(r, f);
            if (!label) {
                throw ConfigError("record " + std::to_string(r.participant_id) + " lacks grouping factor '" +
                                  std::string(to_string(f)) + "'");
            }
            key.push_back(*label);
        }
        std::string joined;
        for (std::size_t i = 0; i < key.size(); ++i) joined += (i ? "|" : "") + key[i];
        auto& acc = groups[joined];
        acc.key = key;
        const double v = outcome_of(r, outcome);
        acc.values.push_back(v);
        if (r.responder) (*r.responder ? acc.responder_values : acc.nonresponder_values).push_back(v);
    }
    for (const auto& level : expected_levels) {
        if (!groups.count(level)) {
            auto& acc = groups[level];
            for (auto part : detail::split(level, '|')) acc.key.emplace_back(part);
        }
    }

    std::vector<const std::pair<const std::string, Acc>*> ordered;
    for (const auto& g : groups) ordered.push_back(&g);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](auto* a, auto* b) { return detail::key_less(a->second.key, b->second.key); });

    std::vector<const Acc*> live;
    for (auto* g : ordered) {
        const Acc& acc = g->second;
        GroupSummary s;
        s.label = g->first;
        s.n = acc.values.size();
        s.empty = acc.values.empty();
        if (s.empty) {
            s.mean = std::nan("");
            s.se = std::nan("");
            table.warnings.push_back("group '" + s.label + "' is empty and excluded from contrasts");
        } else {
            s.mean = stats::mean(acc.values);
            s.se = std::sqrt(stats::variance(acc.values) / static_cast<double>(s.n));
            const std::size_t classified = acc.responder_values.size() + acc.nonresponder_values.size();
            s.nonresponders = acc.nonresponder_values.size();
            if (classified > 0) {
                s.nonresponder_share = static_cast<double>(s.nonresponders) / static_cast<double>(classified);
            }
            if (!acc.responder_values.empty()) s.responder_mean = stats::mean(acc.responder_values);
            if (!acc.nonresponder_values.empty()) s.nonresponder_mean = stats::mean(acc.nonresponder_values);
            if (s.n < 2) table.warnings.push_back("group '" + s.label + "' has a single record; its SE is undefined");
        }
        table.groups.push_back(s);
        live.push_back(s.empty ? nullptr : &acc);
    }

    for (std::size_t i = 0; i < table.groups.size(); ++i) {
        if (!live[i]) continue;
        for (std::size_t j = i + 1; j < table.groups.size(); ++j) {
            if (!live[j]) continue;
            const auto w = stats::welch(live[i]->values, live[j]->values);
            table.contrasts.push_back({table.groups[i].label, table.groups[j].label, w.difference, w.se, w.df, w.p, w.p});
        }
    }
    if (correction == Correction::bonferroni) {
        const double m = static_cast<double>(table.contrasts.size());
        for (auto& c : table.contrasts) c.p_adjusted = std::min(1.0, c.p * m);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Correlational conditional mean

struct CorrelationalMean {
    std::optional<double> value;  // empty when no participant meets the condition
    std::size_t n = 0;
    std::string caveat{kCorrelationalCaveat};
};

/// Mean outcome among participants whose aggregated variable signals
/// nonresponse at K (O < c for below-is-nonresponse features).
inline CorrelationalMean conditional_mean_below_cutoff(const std::vector<TrialRecord>& records, const Feature& feature,
                                                       double cutoff, Week k,
                                                       OutcomeScale outcome = OutcomeScale::raw) {
    detail::require_initial_only(records, "conditional_mean");
    CorrelationalMean out;
    double sum = 0.0;
    for (const auto& r : records) {
        if (signals_nonresponse(aggregate_feature(r.trajectory, feature, k), feature.direction, cutoff)) {
            sum += outcome_of(r, outcome);
            ++out.n;
        }
    }
    if (out.n > 0) out.value = sum / static_cast<double>(out.n);
    return out;
}

// ---------------------------------------------------------------------------
// Inverse probability weighting

/// Product of inverse assignment probabilities along the record's path if
/// every randomized draw and the realized treatment agree with the regime;
/// zero at the first disagreement.
inline double regime_weight(const TrialRecord& r, const AdaptiveIntervention& adi) {
    const Week k = adi.rule.decision_week();
    if (k > r.trajectory.horizon()) return 0.0;
    const bool nonresponder = is_nonresponder(r.trajectory, adi.rule);
    double w = 1.0;
    for (const auto& step : r.path) {
        bool match = false;
        switch (step.kind) {
            case StepKind::arm: match = r.rule && *r.rule == to_string(adi.rule); break;
            case StepKind::decide:
                match = step.week < k ? step.action == kWait : (step.week == k && step.action == kDecide);
                break;
            case StepKind::rescue:
                if (step.week == k && nonresponder) {
                    match = step.action == kRescue;
                } else {
                    match = step.action == kWait;
                }
                break;
            case StepKind::option: match = step.action == adi.rescue_option; break;
        }
        if (!match || !(step.probability > 0.0)) return 0.0;
        w /= step.probability;
    }
    if (r.rescued != (nonresponder ? 1 : 0)) return 0.0;
    if (nonresponder && (r.rescue_week != k || r.rescue_option != adi.rescue_option)) return 0.0;
    return w;
}

struct IpwOptions {
    bool normalized = true;  // Hajek; false gives Horvitz-Thompson
    std::size_t bootstrap = 1000;
    std::uint64_t seed = 0;
    OutcomeScale outcome = OutcomeScale::raw;
};

struct IpwEstimate {
    std::string regime;
    double estimate = 0.0;
    std::optional<double> se;
    std::optional<double> lower;
    std::optional<double> upper;
    std::size_t consistent = 0;
    double weight_sum = 0.0;
    std::size_t bootstrap_used = 0;
};

namespace detail {

inline std::optional<double> ipw_point(const std::vector<double>& weights, const std::vector<double>& ys,
                                       const std::vector<std::size_t>& idx, bool normalized) {
    double sw = 0.0, swy = 0.0;
    for (std::size_t i : idx) {
        sw += weights[i];
        swy += weights[i] * ys[i];
    }
    if (!(sw > 0.0)) return std::nullopt;
    return normalized ? swy / sw : swy / static_cast<double>(idx.size());
}

}  // namespace detail

inline IpwEstimate ipw_regime_value(const std::vector<TrialRecord>& records, const AdaptiveIntervention& adi,
                                    const IpwOptions& options = {}) {
    IpwEstimate out;
    out.regime = to_string(adi.rule) + "->" + adi.rescue_option;
    std::vector<double> weights(records.size()), ys(records.size());
    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        weights[i] = regime_weight(records[i], adi);
        ys[i] = outcome_of(records[i], options.outcome);
        all[i] = i;
        if (weights[i] > 0.0) ++out.consistent;
        out.weight_sum += weights[i];
    }
    std::size_t nonresponders = 0, followed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!is_nonresponder(records[i].trajectory, adi.rule)) continue;
        ++nonresponders;
        followed += weights[i] > 0.0;
    }
    if (nonresponders > 0 && followed == 0) {
        throw AnalysisError("ipw_regime_value", "regime '" + out.regime + "' is not identifiable: none of the " +
                                                    std::to_string(nonresponders) +
                                                    " nonresponders under its rule received its rescue path");
    }
    auto point = detail::ipw_point(weights, ys, all, options.normalized);
    if (!point) {
        throw AnalysisError("ipw_regime_value",
                            "regime '" + out.regime + "' is not identifiable: no record follows it (zero total weight)");
    }
    out.estimate = *point;
    if (options.bootstrap > 1) {
        std::vector<double> draws;
        draws.reserve(options.bootstrap);
        std::vector<std::size_t> idx(records.size());
        for (std::size_t b = 0; b < options.bootstrap; ++b) {
            auto stream = rng::substream(options.seed, rng::Purpose::bootstrap, b);
            for (auto& j : idx) j = stream.below(records.size());
            if (auto v = detail::ipw_point(weights, ys, idx, options.normalized)) draws.push_back(*v);
        }
        out.bootstrap_used = draws.size();
        if (draws.size() > 1) {
            out.se = stats::sd(draws);
            out.lower = stats::quantile(draws, 0.025);
            out.upper = stats::quantile(draws, 0.975);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quadratic decision-time model

struct ArmMean {
    double time = 0.0;
    std::size_t n = 0;
    double mean = 0.0;
    double weight = 0.0;  // least-squares weight; 0 means use n
};

namespace detail {

struct QuadraticCore {
    std::array<double, 3> beta{};
    std::array<long double, 3> gamma{};  // in u = (t - center) / scale
    double center = 0.0;
    double scale = 1.0;
    double argmax = 0.0;
    bool concave = false;
    bool clamped = false;
    // With exactly three arms the fit interpolates; evaluating it in Lagrange
    // form reproduces the arm means bit for bit.
    std::vector<std::pair<double, double>> nodes;

    double value(double t) const {
        if (!nodes.empty()) {
            double total = 0.0;
            for (std::size_t j = 0; j < nodes.size(); ++j) {
                double basis = 1.0;
                for (std::size_t k = 0; k < nodes.size(); ++k) {
                    if (k != j) basis *= (t - nodes[k].first) / (nodes[j].first - nodes[k].first);
                }
                total += nodes[j].second * basis;
            }
            return total;
        }
        const long double u = (static_cast<long double>(t) - center) / scale;
        return static_cast<double>(gamma[0] + u * (gamma[1] + u * gamma[2]));
    }
};

}  // namespace detail

struct QuadraticFit {
    bool fitted = false;  // false when fewer than three distinct times
    std::vector<ArmMean> arms;
    std::array<double, 3> coefficients{};  // intercept, linear, quadratic in t
    double argmax = 0.0;
    bool concave = false;
    bool clamped = false;  // argmax replaced by the best observed arm
    std::optional<double> lower;
    std::optional<double> upper;
    std::vector<double> fitted_means;  // per arm
    std::size_t bootstrap_used = 0;
    detail::QuadraticCore core;

    double predict(double t) const { return core.value(t); }
};

namespace detail {

/// Least squares on arm means weighted by arm size, which equals the
/// participant-level fit of y on (1, t, t^2). Solved in extended precision on
/// centered and scaled times.
inline QuadraticCore quadratic_core(const std::vector<ArmMean>& arms) {
    using Real = long double;
    using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    QuadraticCore out;
    const double lo = arms.front().time, hi = arms.back().time;
    out.center = (lo + hi) / 2.0;
    out.scale = hi > lo ? (hi - lo) / 2.0 : 1.0;

    const auto m = static_cast<Eigen::Index>(arms.size());
    Matrix x(m, 3);
    Vector y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& arm = arms[static_cast<std::size_t>(i)];
        const Real w = std::sqrt(static_cast<Real>(arm.weight > 0.0 ? arm.weight : static_cast<double>(arm.n)));
        const Real u = (static_cast<Real>(arm.time) - out.center) / out.scale;
        x(i, 0) = w;
        x(i, 1) = w * u;
        x(i, 2) = w * u * u;
        y(i) = w * static_cast<Real>(arm.mean);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    Vector g = qr.solve(y);
    // One step of iterative refinement.
    g += qr.solve(Vector(y - x * g));
    out.gamma = {g(0), g(1), g(2)};
    if (arms.size() == 3) {
        for (const auto& a : arms) out.nodes.emplace_back(a.time, a.mean);
    }

    const Real c = out.center, h = out.scale;
    out.beta = {static_cast<double>(g(0) - g(1) * c / h + g(2) * c * c / (h * h)),
                static_cast<double>(g(1) / h - 2 * g(2) * c / (h * h)), static_cast<double>(g(2) / (h * h))};
    out.concave = g(2) < 0;
    if (out.concave) {
        out.argmax = static_cast<double>(c - h * g(1) / (2 * g(2)));
        if (out.argmax < lo || out.argmax > hi) out.clamped = true;
    } else {
        out.clamped = true;
    }
    if (out.clamped) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < arms.size(); ++i) {
            if (arms[i].mean > arms[best].mean) best = i;
        }
        out.argmax = arms[best].time;
    }
    return out;
}

inline std::map<double, std::vector<double>> values_by_time(const std::vector<TrialRecord>& records,
                                                            OutcomeScale outcome) {
    std::map<double, std::vector<double>> by_time;
    for (const auto& r : records) {
        if (!r.arms.time) {
            throw AnalysisError("fit_quadratic_time",
                                "record " + std::to_string(r.participant_id) + " has no decision-time arm");
        }
        double t = 0.0;
        try {
            t = parse_double(*r.arms.time, "time arm");
        } catch (const SchemaError&) {
            throw AnalysisError("fit_quadratic_time", "time arm '" + *r.arms.time + "' is not numeric");
        }
        by_time[t].push_back(outcome_of(r, outcome));
    }
    return by_time;
}

inline std::vector<ArmMean> arm_means(const std::map<double, std::vector<double>>& by_time) {
    std::vector<ArmMean> arms;
    for (const auto& [t, v] : by_time) arms.push_back({t, v.size(), stats::mean(v), 0.0});
    return arms;
}

}  // namespace detail

/// Pooled quadratic model of the outcome on decision time. The bootstrap
/// resamples within each time arm.
inline QuadraticFit fit_quadratic_time(const std::vector<TrialRecord>& records, OutcomeScale outcome = OutcomeScale::raw,
                                       std::size_t bootstrap = 1000, std::uint64_t seed = 0) {
    const auto by_time = detail::values_by_time(records, outcome);
    QuadraticFit fit;
    fit.arms = detail::arm_means(by_time);
    if (fit.arms.size() < 3) return fit;
    fit.fitted = true;
    const auto core = detail::quadratic_core(fit.arms);
    fit.coefficients = core.beta;
    fit.core = core;
    fit.argmax = core.argmax;
    fit.concave = core.concave;
    fit.clamped = core.clamped;
    for (const auto& a : fit.arms) fit.fitted_means.push_back(fit.predict(a.time));

    if (bootstrap > 1) {
        std::vector<double> draws;
        draws.reserve(bootstrap);
        for (std::size_t b = 0; b < bootstrap; ++b) {
            auto stream = rng::substream(seed, rng::Purpose::bootstrap, b);
            std::vector<ArmMean> resampled;
            for (const auto& [t, v] : by_time) {
                double s = 0.0;
                for (std::size_t j = 0; j < v.size(); ++j) s += v[stream.below(v.size())];
                resampled.push_back({t, v.size(), s / static_cast<double>(v.size()), 0.0});
            }
            draws.push_back(detail::quadratic_core(resampled).argmax);
        }
        fit.bootstrap_used = draws.size();
        fit.lower = stats::quantile(draws, 0.025);
        fit.upper = stats::quantile(draws, 0.975);
    }
    return fit;
}

/// Pointwise bootstrap band of the fitted curve on `grid`.
struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
    std::optional<double> lower;
    std::optional<double> upper;
};

inline std::vector<CurvePoint> quadratic_curve(const std::vector<TrialRecord>& records, const QuadraticFit& fit,
                                               OutcomeScale outcome, std::size_t points, std::size_t bootstrap,
                                               std::uint64_t seed) {
    std::vector<CurvePoint> curve;
    if (!fit.fitted || points < 2) return curve;
    const double lo = fit.arms.front().time, hi = fit.arms.back().time;
    std::vector<double> grid;
    for (std::size_t i = 0; i < points; ++i) grid.push_back(lo + (hi - lo) * static_cast<double>(i) / (points - 1.0));
    std::vector<std::vector<double>> draws(grid.size());
    if (bootstrap > 1) {
        const auto by_time = detail::values_by_time(records, outcome);
        for (std::size_t b = 0; b < bootstrap; ++b) {
            auto stream = rng::substream(seed, rng::Purpose::bootstrap, b);
            std::vector<ArmMean> resampled;
            for (const auto& [t, v] : by_time) {
                double s = 0.0;
                for (std::size_t j = 0; j < v.size(); ++j) s += v[stream.below(v.size())];
                resampled.push_back({t, v.size(), s / static_cast<double>(v.size()), 0.0});
            }
            const auto core = detail::quadratic_core(resampled);
            for (std::size_t g = 0; g < grid.size(); ++g) {
                draws[g].push_back(core.value(grid[g]));
            }
        }
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CurvePoint p{grid[g], fit.predict(grid[g]), std::nullopt, std::nullopt};
        if (!draws[g].empty()) {
            p.lower = stats::quantile(draws[g], 0.025);
            p.upper = stats::quantile(draws[g], 0.975);
        }
        curve.push_back(p);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// ROC AUC and the elbow scan

/// P(score of a random positive > score of a random negative) + 1/2 P(tie),
/// via mid-ranks. Empty when either class is absent.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ConfigError("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the mid-rank keeps everything in integers.
    std::vector<std::uint64_t> rank2(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) rank2[order[k]] = i + j + 1;
        i = j;
    }
    std::uint64_t n1 = 0, rank_sum2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k]) {
            ++n1;
            rank_sum2 += rank2[k];
        }
    }
    const std::uint64_t n0 = n - n1;
    if (n1 == 0 || n0 == 0) return std::nullopt;
    const std::uint64_t u2 = rank_sum2 - n1 * (n1 + 1);
    return static_cast<double>(u2) / (2.0 * static_cast<double>(n1) * static_cast<double>(n0));
}

/// Earliest time whose value is within delta of the maximum. Times with an
/// undefined value are skipped.
inline Week pick_elbow(const std::vector<std::optional<double>>& values, const std::vector<Week>& times, double delta) {
    std::optional<double> best;
    for (const auto& v : values) {
        if (v && (!best || *v > *best)) best = v;
    }
    if (!best) throw AnalysisError("elbow_scan", "no candidate time has a defined AUC");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] && *values[i] >= *best - delta) return times[i];
    }
    return times.front();
}

struct ElbowPoint {
    Week time = 0;
    std::optional<double> auc;
    std::optional<double> lower;
    std::optional<double> upper;
};

struct ElbowCurve {
    std::vector<ElbowPoint> points;
    Week elbow = 0;
    double delta = 0.02;
    std::vector<std::string> warnings;
    std::string caveat{kElbowCaveat};
};

struct ElbowOptions {
    double delta = 0.02;
    std::optional<double> success_threshold;  // else the records' y_bin
    std::size_t bootstrap = 0;
    std::uint64_t seed = 0;
};

/// AUC of the aggregated variable at each candidate week for predicting
/// failure (y_bin = 0) under the initial treatment. Scores are oriented so
/// that a stronger nonresponse signal ranks higher.
inline ElbowCurve elbow_scan(const std::vector<TrialRecord>& records, const Feature& feature,
                             const std::vector<Week>& times, const ElbowOptions& options = {}) {
    detail::require_initial_only(records, "elbow_scan");
    if (times.empty()) throw ConfigError("elbow_scan needs candidate times");
    if (!(options.delta >= 0.0)) throw ConfigError("elbow_scan delta must be >= 0");
    ElbowCurve curve;
    curve.delta = options.delta;
    std::vector<int> labels;
    for (const auto& r : records) {
        const bool failure = options.success_threshold ? r.y < *options.success_threshold : r.y_bin == 0;
        labels.push_back(failure ? 1 : 0);
    }
    std::vector<std::optional<double>> values;
    for (Week t : times) {
        std::vector<double> scores;
        for (const auto& r : records) {
            const double v = aggregate_feature(r.trajectory, feature, t);
            scores.push_back(feature.direction == Direction::below_is_nonresponse ? -v : v);
        }
        ElbowPoint p;
        p.time = t;
        p.auc = roc_auc(scores, labels);
        if (!p.auc) curve.warnings.push_back("AUC undefined at week " + std::to_string(t) + ": single outcome class");
        if (p.auc && options.bootstrap > 1) {
            std::vector<double> draws;
            std::vector<double> bs(records.size());
            std::vector<int> bl(records.size());
            for (std::size_t b = 0; b < options.bootstrap; ++b) {
                auto stream = rng::substream(options.seed, rng::Purpose::bootstrap, b);
                for (std::size_t j = 0; j < records.size(); ++j) {
                    const auto k = stream.below(records.size());
                    bs[j] = scores[k];
                    bl[j] = labels[k];
                }
                if (auto a = roc_auc(bs, bl)) draws.push_back(*a);
            }
            if (!draws.empty()) {
                p.lower = stats::quantile(draws, 0.025);
                p.upper = stats::quantile(draws, 0.975);
            }
        }
        values.push_back(p.auc);
        curve.points.push_back(p);
    }
    curve.elbow = pick_elbow(values, times, options.delta);
    return curve;
}

// ---------------------------------------------------------------------------
// Cutoff scan under asymmetric misclassification costs

struct CutoffCostRow {
    double cutoff = 0.0;
    std::size_t true_positive = 0;   // failure classified nonresponder
    std::size_t false_positive = 0;  // success classified nonresponder
    std::size_t true_negative = 0;
    std::size_t false_negative = 0;  // failure classified responder
    std::size_t nonresponders = 0;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    double cost = 0.0;
};

struct CutoffCostTable {
    std::vector<CutoffCostRow> rows;
    double best_cutoff = 0.0;
    double w_fp = 1.0;
    double w_fn = 1.0;
    std::vector<std::string> warnings;
    std::string caveat{kCorrelationalCaveat};
};

/// Ties in cost go to the cutoff labelling fewer participants nonresponders.
inline CutoffCostTable cutoff_scan_cost(const std::vector<TrialRecord>& records, const Feature& feature, Week k,
                                        const std::vector<double>& grid, double w_fp, double w_fn) {
    detail::require_initial_only(records, "cutoff_scan_cost");
    if (grid.empty()) throw ConfigError("cutoff_scan_cost needs a nonempty cutoff grid");
    if (!(w_fp >= 0.0) || !(w_fn >= 0.0)) throw ConfigError("cutoff_scan_cost weights must be >= 0");
    CutoffCostTable table;
    table.w_fp = w_fp;
    table.w_fn = w_fn;
    if (w_fp == w_fn) table.warnings.emplace_back(kEqualCostWarning);
    std::vector<double> feature_values;
    std::size_t failures = 0;
    for (const auto& r : records) {
        feature_values.push_back(aggregate_feature(r.trajectory, feature, k));
        failures += r.y_bin == 0;
    }
    if (failures == 0 || failures == records.size()) {
        table.warnings.emplace_back("outcome has a single class; sensitivity or specificity undefined");
    }
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CutoffCostRow row;
        row.cutoff = grid[g];
        for (std::size_t i = 0; i < records.size(); ++i) {
            const bool flagged = signals_nonresponse(feature_values[i], feature.direction, grid[g]);
            const bool failure = records[i].y_bin == 0;
            if (flagged) {
                ++row.nonresponders;
                (failure ? row.true_positive : row.false_positive) += 1;
            } else {
                (failure ? row.false_negative : row.true_negative) += 1;
            }
        }
        if (row.true_positive + row.false_negative > 0) {
            row.sensitivity = static_cast<double>(row.true_positive) / static_cast<double>(row.true_positive + row.false_negative);
        }
        if (row.true_negative + row.false_positive > 0) {
            row.specificity = static_cast<double>(row.true_negative) / static_cast<double>(row.true_negative + row.false_positive);
        }
        row.cost = w_fp * static_cast<double>(row.false_positive) + w_fn * static_cast<double>(row.false_negative);
        table.rows.push_back(row);
        const auto& cur = table.rows[best];
        if (row.cost < cur.cost || (row.cost == cur.cost && row.nonresponders < cur.nonresponders)) best = g;
    }
    table.best_cutoff = table.rows[best].cutoff;
    return table;
}

// ---------------------------------------------------------------------------
// Moderation of a directly randomized rescue

struct ModerationReport {
    std::string variable;  // feature text
    double main_effect = 0.0;
    double interaction = 0.0;
    double interaction_se = 0.0;
    double interaction_p = 1.0;
    double feature_min = 0.0;
    double feature_max = 0.0;
    double effect_at_min = 0.0;
    double effect_at_max = 0.0;
    bool qualitative = false;  // fitted rescue effect changes sign over the observed range
    double score = 0.0;        // |interaction| / SE
    std::size_t rank = 0;      // 1 = strongest
};

/// Propensity P(A = 1) recorded for the rescue draw at week k, if any.
inline std::optional<double> rescue_propensity(const TrialRecord& r, Week k) {
    for (const auto& s : r.path) {
        if (s.kind == StepKind::rescue && s.week == k) return s.action == kRescue ? s.probability : 1.0 - s.probability;
    }
    return std::nullopt;
}

/// Fits y ~ 1 + A + O + A*O per candidate feature and ranks by |interaction|/SE.
inline std::vector<ModerationReport> moderation_scan(const std::vector<TrialRecord>& records,
                                                     const std::vector<Feature>& candidates, Week k,
                                                     OutcomeScale outcome = OutcomeScale::raw) {
    if (candidates.empty()) throw ConfigError("moderation_scan needs candidate variables");
    if (records.size() < 5) throw AnalysisError("moderation_scan", "needs at least five records");
    std::optional<double> common;
    for (const auto& r : records) {
        auto p = rescue_propensity(r, k);
        if (!p || (common && std::abs(*p - *common) > 1e-12)) {
            throw AnalysisError("moderation_scan",
                                "rescue at week " + std::to_string(k) +
                                    " was not randomized with a constant propensity; run positivity_check on this data");
        }
        common = p;
    }
    const auto n = static_cast<Eigen::Index>(records.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = outcome_of(records[static_cast<std::size_t>(i)], outcome);

    std::vector<ModerationReport> out;
    for (const auto& f : candidates) {
        Eigen::MatrixXd x(n, 4);
        ModerationReport rep;
        rep.variable = to_string(f);
        rep.feature_min = INFINITY;
        rep.feature_max = -INFINITY;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = records[static_cast<std::size_t>(i)];
            const double o = aggregate_feature(r.trajectory, f, k);
            const double a = r.rescued;
            x(i, 0) = 1.0;
            x(i, 1) = a;
            x(i, 2) = o;
            x(i, 3) = a * o;
            rep.feature_min = std::min(rep.feature_min, o);
            rep.feature_max = std::max(rep.feature_max, o);
        }
        stats::OlsFit fit;
        try {
            fit = stats::ols(x, y);
        } catch (const Error& e) {
            throw AnalysisError("moderation_scan", rep.variable + ": " + e.what());
        }
        rep.main_effect = fit.coefficients(1);
        rep.interaction = fit.coefficients(3);
        rep.interaction_se = fit.standard_errors(3);
        rep.interaction_p = stats::two_sided_p(rep.interaction / rep.interaction_se, static_cast<double>(fit.df));
        rep.effect_at_min = rep.main_effect + rep.interaction * rep.feature_min;
        rep.effect_at_max = rep.main_effect + rep.interaction * rep.feature_max;
        rep.qualitative = (rep.effect_at_min > 0.0 && rep.effect_at_max < 0.0) ||
                          (rep.effect_at_min < 0.0 && rep.effect_at_max > 0.0);
        rep.score = std::abs(rep.interaction) / rep.interaction_se;
        out.push_back(rep);
    }
    std::vector<std::size_t> order(out.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out[a].score > out[b].score; });
    std::vector<ModerationReport> ranked;
    for (std::size_t i = 0; i < order.size(); ++i) {
        ranked.push_back(out[order[i]]);
        ranked.back().rank = i + 1;
    }
    return ranked;
}

// ---------------------------------------------------------------------------
// Positivity

enum class StratumStatus { ok, degenerate, unidentifiable };

inline std::string_view to_string(StratumStatus s) {
    switch (s) {
        case StratumStatus::ok: return "ok";
        case StratumStatus::degenerate: return "degenerate";
        case StratumStatus::unidentifiable: return "unidentifiable";
    }
    return "?";
}

struct PositivityRow {
    double cutoff = 0.0;
    std::string stratum;  // "below" (O < c) or "at_or_above" (O >= c)
    std::size_t n = 0;
    std::size_t treated = 0;
    std::optional<double> propensity;
    StratumStatus status = StratumStatus::ok;
};

struct PositivityTable {
    std::vector<PositivityRow> rows;
    bool pass = true;

    /// First failing stratum, for diagnostics.
    std::optional<PositivityRow> first_failure() const {
        for (const auto& r : rows) {
            if (r.status != StratumStatus::ok) return r;
        }
        return std::nullopt;
    }
};

/// Empirical P(A = 1) on each side of every grid cutoff. A stratum fails when
/// it is empty or when either treated or untreated counts are <= m.
inline PositivityTable positivity_check(const std::vector<TrialRecord>& records, const Feature& feature, Week k,
                                        const std::vector<double>& grid, std::size_t m = 0) {
    if (grid.empty()) throw ConfigError("positivity_check needs a nonempty cutoff grid");
    std::vector<double> values;
    for (const auto& r : records) values.push_back(aggregate_feature(r.trajectory, feature, k));
    PositivityTable table;
    for (double c : grid) {
        PositivityRow below, above;
        below.cutoff = above.cutoff = c;
        below.stratum = "below";
        above.stratum = "at_or_above";
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto& row = values[i] < c ? below : above;
            ++row.n;
            row.treated += records[i].rescued;
        }
        for (auto* row : {&below, &above}) {
            if (row->n == 0) {
                row->status = StratumStatus::unidentifiable;
            } else {
                row->propensity = static_cast<double>(row->treated) / static_cast<double>(row->n);
                if (row->treated <= m || row->n - row->treated <= m) row->status = StratumStatus::degenerate;
            }
            if (row->status != StratumStatus::ok) table.pass = false;
            table.rows.push_back(*row);
        }
    }
    return table;
}

// ---------------------------------------------------------------------------

inline std::vector<TrialRecord> cost_adjust(std::vector<TrialRecord> records, double kappa) {
    if (!(kappa >= 0.0)) throw ConfigError("cost penalty kappa must be >= 0");
    for (auto& r : records) r.y_adj = r.y - kappa * r.rescued;
    return records;
}

}  // namespace tailorlab
