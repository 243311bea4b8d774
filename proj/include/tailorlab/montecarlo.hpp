#pragma once

// Replicated scenario -> design -> analysis pipelines. Every replicate draws
// from its own key (master seed, replicate index), and aggregation runs in
// replicate order, so a report depends only on the plan.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tailorlab/analysis.hpp"
#include "tailorlab/datagen.hpp"
#include "tailorlab/designs.hpp"
#include "tailorlab/error.hpp"
#include "tailorlab/parallel.hpp"
#include "tailorlab/rng.hpp"
#include "tailorlab/stats.hpp"

namespace tailorlab {

struct AnalysisPlan {
    OutcomeScale outcome = OutcomeScale::raw;
    std::vector<AdaptiveIntervention> regimes;  // IPW targets
    bool ipw_normalized = true;
    Correction correction = Correction::none;
};

struct McPlan {
    ScenarioParams scenario;
    DesignSpec design;
    AnalysisPlan analysis;
    std::size_t replicates = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::size_t reference_n = 0;  // 0 skips the super-population truth

    void validate() const {
        scenario.validate();
        check_design_coverage(scenario, design);
        if (replicates < 1) throw ConfigError("mc.replicates must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("mc.alpha must lie in (0,1)");
        for (const auto& adi : analysis.regimes) {
            (void)scenario.rescue_index(adi.rescue_option);
            (void)scenario.week_index(adi.rule.decision_week());
        }
    }
};

/// Thrown when a replicate fails; carries what is needed to reproduce it.
class ReplicateError : public Error {
public:
    ReplicateError(std::size_t index, std::uint64_t key, const std::string& what)
        : Error("replicate " + std::to_string(index) + " (key " + std::to_string(key) + "): " + what),
          index_(index),
          key_(key) {}

    std::size_t index() const noexcept { return index_; }
    std::uint64_t key() const noexcept { return key_; }

private:
    std::size_t index_;
    std::uint64_t key_;
};

struct ContrastSummary {
    std::string first;
    std::string second;
    double rejection_rate = 0.0;
    double rejection_mc_se = 0.0;
    double mean_estimate = 0.0;
    double estimate_mc_se = 0.0;
    std::optional<double> truth;  // mean over replicate populations
    std::optional<double> bias;
    std::optional<double> reference_truth;
    std::size_t replicates_used = 0;
};

struct RegimeSummary {
    std::string regime;
    double mean_estimate = 0.0;
    double estimate_mc_se = 0.0;
    double truth = 0.0;
    double bias = 0.0;
    std::optional<double> reference_truth;
    std::size_t replicates_used = 0;
    std::size_t unidentified = 0;
};

struct ArgmaxSummary {
    double mean = 0.0;
    double truth = 0.0;
    double bias = 0.0;
    double mse = 0.0;
    std::size_t clamped = 0;
    std::size_t replicates_used = 0;
};

struct ArmDiagnostic {
    std::string label;
    double mean_n = 0.0;
    double mean_nonresponders = 0.0;
    double sd_nonresponders = 0.0;
    std::size_t min_nonresponders = 0;
    double mean_nonresponder_share = 0.0;
    std::map<std::string, double> mean_option_counts;  // nonresponders per rescue option
    bool unpowered = false;  // some replicate leaves fewer than two nonresponders for a rescue comparison
};

struct McReport {
    std::string design;
    std::size_t n = 0;
    std::size_t replicates = 0;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    OutcomeScale outcome = OutcomeScale::raw;
    std::vector<ContrastSummary> contrasts;
    std::vector<RegimeSummary> regimes;
    std::optional<ArgmaxSummary> argmax;
    std::vector<ArmDiagnostic> arms;
};

// ---------------------------------------------------------------------------
// Nonresponder counts

struct ArmCounts {
    std::string label;
    std::size_t n = 0;
    std::size_t nonresponders = 0;
    std::map<std::string, std::size_t> option_counts;
};

/// Per-arm counts for one replicate of a rule-based design, keyed by the
/// assigned rule.
inline std::vector<ArmCounts> arm_counts(const std::vector<TrialRecord>& records,
                                         const std::vector<std::string>& expected = {}) {
    std::map<std::string, ArmCounts> by;
    for (const auto& label : expected) by[label].label = label;
    for (const auto& r : records) {
        if (!r.rule || !r.responder) throw ConfigError("effective sample report needs records from a rule-based design");
        auto& c = by[*r.rule];
        c.label = *r.rule;
        ++c.n;
        if (*r.responder == 0) {
            ++c.nonresponders;
            if (r.rescue_option) ++c.option_counts[*r.rescue_option];
        }
    }
    std::vector<ArmCounts> out;
    for (auto& [k, v] : by) out.push_back(std::move(v));
    return out;
}

inline std::vector<ArmDiagnostic> summarize_arm_counts(const std::vector<std::vector<ArmCounts>>& per_replicate,
                                                       const std::vector<std::string>& options) {
    std::map<std::string, std::vector<const ArmCounts*>> by;
    for (const auto& rep : per_replicate) {
        for (const auto& c : rep) by[c.label].push_back(&c);
    }
    std::vector<ArmDiagnostic> out;
    const double reps = static_cast<double>(per_replicate.size());
    for (const auto& [label, list] : by) {
        ArmDiagnostic d;
        d.label = label;
        std::vector<double> counts;
        double share_sum = 0.0;
        std::size_t share_n = 0;
        std::map<std::string, std::size_t> option_min;
        for (const auto& o : options) option_min[o] = SIZE_MAX;
        for (const auto* c : list) {
            d.mean_n += static_cast<double>(c->n);
            counts.push_back(static_cast<double>(c->nonresponders));
            if (c->n > 0) {
                share_sum += static_cast<double>(c->nonresponders) / static_cast<double>(c->n);
                ++share_n;
            }
            for (const auto& o : options) {
                auto it = c->option_counts.find(o);
                const std::size_t v = it == c->option_counts.end() ? 0 : it->second;
                d.mean_option_counts[o] += static_cast<double>(v);
                option_min[o] = std::min(option_min[o], v);
            }
        }
        // Replicates where the arm never appeared count as zero.
        const std::size_t missing = per_replicate.size() - list.size();
        counts.insert(counts.end(), missing, 0.0);
        d.mean_n /= reps;
        d.mean_nonresponders = stats::mean(counts);
        d.sd_nonresponders = counts.size() > 1 ? stats::sd(counts) : 0.0;
        d.min_nonresponders = static_cast<std::size_t>(*std::min_element(counts.begin(), counts.end()));
        d.mean_nonresponder_share = share_n ? share_sum / static_cast<double>(share_n) : 0.0;
        for (auto& [o, v] : d.mean_option_counts) v /= reps;
        if (options.size() > 1) {
            for (const auto& [o, m] : option_min) d.unpowered = d.unpowered || m < 2 || missing > 0;
        } else {
            d.unpowered = d.min_nonresponders < 2;
        }
        out.push_back(std::move(d));
    }
    return out;
}

/// Mean and spread of nonresponder counts per arm across replicates.
inline std::vector<ArmDiagnostic> effective_sample_report(const std::vector<std::vector<TrialRecord>>& replicates) {
    std::vector<std::vector<ArmCounts>> counts;
    std::vector<std::string> options;
    for (const auto& recs : replicates) {
        counts.push_back(arm_counts(recs));
        for (const auto& c : counts.back()) {
            for (const auto& [o, n] : c.option_counts) {
                if (std::find(options.begin(), options.end(), o) == options.end()) options.push_back(o);
            }
        }
    }
    std::sort(options.begin(), options.end());
    return summarize_arm_counts(counts, options);
}

// ---------------------------------------------------------------------------

namespace detail {

struct ReplicateResult {
    std::vector<PairwiseContrast> contrasts;
    std::vector<double> contrast_truth;  // NaN when there is no oracle
    std::vector<std::optional<double>> regime_estimates;
    std::vector<double> regime_truth;
    std::optional<double> argmax;
    std::optional<double> true_argmax;
    bool argmax_clamped = false;
    std::vector<ArmCounts> arms;
};

/// Oracle value of an arm: nonresponders split over the design's options.
inline double arm_truth(const PotentialOutcomeTable& table, const TailoringRule& rule,
                        const std::vector<std::string>& options, OutcomeScale scale) {
    double total = 0.0;
    for (const auto& o : options) total += regime_truth(table, AdaptiveIntervention{"initial", rule, o}, scale);
    return total / static_cast<double>(options.size());
}

/// Vertex of the quadratic projection of the true arm values, weighted by
/// the design's allocation shares.
inline double true_argmax(const std::vector<Arm>& arms, const std::vector<double>& truths) {
    std::vector<ArmMean> means;
    for (std::size_t i = 0; i < arms.size(); ++i) {
        means.push_back({static_cast<double>(arms[i].rule.decision_week()), 1, truths[i], arms[i].probability});
    }
    std::sort(means.begin(), means.end(), [](const ArmMean& a, const ArmMean& b) { return a.time < b.time; });
    return quadratic_core(means).argmax;
}

inline ReplicateResult run_one(const McPlan& plan, std::uint64_t key) {
    ReplicateResult out;
    ScenarioParams scenario = plan.scenario;
    scenario.seed = rng::derive(key, rng::Purpose::population, 0);
    const auto table = gen_population(scenario);
    const auto records = run_design(table, plan.design, rng::derive(key, rng::Purpose::design, 0));
    const auto arms = design_arms(plan.design);
    const auto options = design_rescue_options(plan.design);
    const auto scale = plan.analysis.outcome;

    if (!arms.empty()) {
        std::vector<std::string> labels;
        std::map<std::string, double> truth;
        for (const auto& a : arms) {
            labels.push_back(to_string(a.rule));
            truth[labels.back()] = arm_truth(table, a.rule, options, scale);
        }
        const auto ct = arm_contrasts(records, {Factor::rule}, scale, plan.analysis.correction, labels);
        out.contrasts = ct.contrasts;
        for (const auto& c : ct.contrasts) out.contrast_truth.push_back(truth[c.first] - truth[c.second]);
        out.arms = arm_counts(records, labels);
    } else if (const auto* d = std::get_if<SinglyRandomizedRescue>(&plan.design.variant)) {
        const auto ct = arm_contrasts(records, {Factor::rescue}, scale, plan.analysis.correction, {"none", "rescue"});
        out.contrasts = ct.contrasts;
        double none = 0.0, rescue = 0.0;
        const auto& params = table.params();
        for (std::size_t i = 0; i < table.size(); ++i) {
            none += apply_scale(table.no_rescue(i), false, params, scale);
            rescue += apply_scale(table.rescued(i, d->rescue_option, d->decision_week), true, params, scale);
        }
        const double n = static_cast<double>(table.size());
        for (std::size_t c = 0; c < out.contrasts.size(); ++c) out.contrast_truth.push_back((none - rescue) / n);
    }

    IpwOptions ipw;
    ipw.bootstrap = 0;
    ipw.normalized = plan.analysis.ipw_normalized;
    ipw.outcome = scale;
    for (const auto& adi : plan.analysis.regimes) {
        out.regime_truth.push_back(regime_truth(table, adi, scale));
        try {
            out.regime_estimates.push_back(ipw_regime_value(records, adi, ipw).estimate);
        } catch (const AnalysisError&) {
            out.regime_estimates.push_back(std::nullopt);
        }
    }

    if (std::holds_alternative<DecisionTimeTrial>(plan.design.variant) && arms.size() >= 3) {
        const auto fit = fit_quadratic_time(records, scale, 0);
        if (fit.fitted) {
            out.argmax = fit.argmax;
            out.argmax_clamped = fit.clamped;
            std::vector<double> truths;
            for (const auto& a : arms) truths.push_back(arm_truth(table, a.rule, options, scale));
            out.true_argmax = true_argmax(arms, truths);
        }
    }
    return out;
}

}  // namespace detail

inline McReport run_replicates(const McPlan& plan, unsigned threads = 1) {
    plan.validate();
    std::vector<detail::ReplicateResult> results(plan.replicates);
    parallel_for(plan.replicates, threads, [&](std::size_t r) {
        const std::uint64_t key = rng::derive(plan.seed, rng::Purpose::replicate, r);
        try {
            results[r] = detail::run_one(plan, key);
        } catch (const Error& e) {
            throw ReplicateError(r, key, e.what());
        }
    });

    McReport report;
    report.design = std::string(design_name(plan.design));
    report.n = plan.scenario.n;
    report.replicates = plan.replicates;
    report.alpha = plan.alpha;
    report.seed = plan.seed;
    report.outcome = plan.analysis.outcome;
    const double reps = static_cast<double>(plan.replicates);

    const auto arms = design_arms(plan.design);
    const auto options = design_rescue_options(plan.design);

    // Super-population oracle, computed once.
    std::map<std::string, double> reference_arm;
    std::vector<double> reference_regime;
    if (plan.reference_n > 0) {
        std::vector<AdaptiveIntervention> targets;
        for (const auto& a : arms) {
            for (const auto& o : options) targets.push_back({"initial", a.rule, o});
        }
        targets.insert(targets.end(), plan.analysis.regimes.begin(), plan.analysis.regimes.end());
        ScenarioParams reference = plan.scenario;
        reference.seed = plan.seed;
        const auto values = reference_regime_truth(reference, targets, plan.reference_n, plan.analysis.outcome, threads);
        std::size_t v = 0;
        for (const auto& a : arms) {
            double total = 0.0;
            for (std::size_t o = 0; o < options.size(); ++o) total += values[v++];
            reference_arm[to_string(a.rule)] = total / static_cast<double>(options.size());
        }
        reference_regime.assign(values.begin() + static_cast<std::ptrdiff_t>(v), values.end());
    }

    if (!results.empty()) {
        const std::size_t nc = results.front().contrasts.size();
        for (std::size_t c = 0; c < nc; ++c) {
            ContrastSummary s;
            s.first = results.front().contrasts[c].first;
            s.second = results.front().contrasts[c].second;
            std::vector<double> estimates;
            double truth_sum = 0.0;
            bool has_truth = true;
            std::size_t rejected = 0;
            for (const auto& res : results) {
                if (c >= res.contrasts.size() || res.contrasts[c].first != s.first ||
                    res.contrasts[c].second != s.second) {
                    continue;  // an arm was empty in this replicate
                }
                const auto& pc = res.contrasts[c];
                if (!std::isnan(pc.difference)) estimates.push_back(pc.difference);
                if (pc.p_adjusted < plan.alpha) ++rejected;
                if (std::isnan(res.contrast_truth[c])) has_truth = false;
                truth_sum += res.contrast_truth[c];
            }
            s.replicates_used = estimates.size();
            s.rejection_rate = static_cast<double>(rejected) / reps;
            s.rejection_mc_se = std::sqrt(s.rejection_rate * (1.0 - s.rejection_rate) / reps);
            s.mean_estimate = stats::mean(estimates);
            s.estimate_mc_se = estimates.size() > 1 ? stats::sd(estimates) / std::sqrt(static_cast<double>(estimates.size())) : std::nan("");
            if (has_truth && !estimates.empty()) {
                s.truth = truth_sum / static_cast<double>(estimates.size());
                s.bias = s.mean_estimate - *s.truth;
            }
            if (reference_arm.count(s.first) && reference_arm.count(s.second)) {
                s.reference_truth = reference_arm[s.first] - reference_arm[s.second];
            }
            report.contrasts.push_back(s);
        }
    }

    for (std::size_t g = 0; g < plan.analysis.regimes.size(); ++g) {
        RegimeSummary s;
        const auto& adi = plan.analysis.regimes[g];
        s.regime = to_string(adi.rule) + "->" + adi.rescue_option;
        std::vector<double> estimates;
        double truth_sum = 0.0;
        for (const auto& res : results) {
            if (res.regime_estimates[g]) {
                estimates.push_back(*res.regime_estimates[g]);
                truth_sum += res.regime_truth[g];
            } else {
                ++s.unidentified;
            }
        }
        s.replicates_used = estimates.size();
        if (!estimates.empty()) {
            s.mean_estimate = stats::mean(estimates);
            s.truth = truth_sum / static_cast<double>(estimates.size());
            s.bias = s.mean_estimate - s.truth;
            s.estimate_mc_se = estimates.size() > 1 ? stats::sd(estimates) / std::sqrt(static_cast<double>(estimates.size())) : std::nan("");
        } else {
            s.mean_estimate = s.truth = s.bias = s.estimate_mc_se = std::nan("");
        }
        if (!reference_regime.empty()) s.reference_truth = reference_regime[g];
        report.regimes.push_back(s);
    }

    if (std::holds_alternative<DecisionTimeTrial>(plan.design.variant) && arms.size() >= 3) {
        ArgmaxSummary a;
        std::vector<double> values, truths;
        for (const auto& res : results) {
            if (!res.argmax) continue;
            values.push_back(*res.argmax);
            truths.push_back(*res.true_argmax);
            a.clamped += res.argmax_clamped;
        }
        a.replicates_used = values.size();
        if (!values.empty()) {
            a.mean = stats::mean(values);
            a.truth = stats::mean(truths);
            a.bias = a.mean - a.truth;
            double sq = 0.0;
            for (std::size_t i = 0; i < values.size(); ++i) sq += (values[i] - truths[i]) * (values[i] - truths[i]);
            a.mse = sq / static_cast<double>(values.size());
        }
        report.argmax = a;
    }

    if (!arms.empty()) {
        std::vector<std::vector<ArmCounts>> counts;
        for (const auto& res : results) counts.push_back(res.arms);
        report.arms = summarize_arm_counts(counts, options);
    }
    return report;
}

struct PowerPoint {
    std::size_t n = 0;
    double power = 0.0;
    double mc_se = 0.0;
};

struct PowerCurve {
    std::string contrast;
    std::vector<PowerPoint> points;
    std::optional<std::size_t> required_n;  // empty when the target is unmet at the largest N
    double target = 0.8;
    std::vector<McReport> reports;  // one per grid point
};

/// Smallest N on the grid whose estimated power for the chosen contrast
/// reaches the target; the whole curve is returned either way.
inline PowerCurve power_search(const McPlan& plan, double target_power, const std::vector<std::size_t>& n_grid,
                               std::size_t contrast = 0, unsigned threads = 1) {
    if (n_grid.empty()) throw ConfigError("mc.n_grid must not be empty");
    for (std::size_t i = 1; i < n_grid.size(); ++i) {
        if (n_grid[i] <= n_grid[i - 1]) throw ConfigError("mc.n_grid must be strictly increasing");
    }
    if (!(target_power > 0.0 && target_power < 1.0)) throw ConfigError("mc.target_power must lie in (0,1)");
    PowerCurve curve;
    curve.target = target_power;
    for (std::size_t n : n_grid) {
        McPlan p = plan;
        p.scenario.n = n;
        const auto report = run_replicates(p, threads);
        if (contrast >= report.contrasts.size()) {
            throw ConfigError("mc.contrast index " + std::to_string(contrast) + " out of range: design yields " +
                              std::to_string(report.contrasts.size()) + " contrasts");
        }
        const auto& c = report.contrasts[contrast];
        curve.contrast = c.first + " vs " + c.second;
        curve.points.push_back({n, c.rejection_rate, c.rejection_mc_se});
        curve.reports.push_back(report);
        if (!curve.required_n && c.rejection_rate >= target_power) curve.required_n = n;
    }
    return curve;
}

}  // namespace tailorlab
