#pragma once

// Randomization engines. Each design turns a potential-outcome table into
// trial records, reading realized outcomes from the table and recording
// every randomized draw with the probability it was made with.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tailorlab/core.hpp"
#include "tailorlab/datagen.hpp"
#include "tailorlab/error.hpp"
#include "tailorlab/parallel.hpp"
#include "tailorlab/rng.hpp"

namespace tailorlab {

enum class StepKind { arm, decide, rescue, option };

inline std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::arm: return "arm";
        case StepKind::decide: return "decide";
        case StepKind::rescue: return "rescue";
        case StepKind::option: return "option";
    }
    return "?";
}

inline StepKind parse_step_kind(std::string_view text) {
    if (text == "arm") return StepKind::arm;
    if (text == "decide") return StepKind::decide;
    if (text == "rescue") return StepKind::rescue;
    if (text == "option") return StepKind::option;
    throw SchemaError("unknown path step kind '" + std::string(text) + "'");
}

// Step actions.
inline constexpr std::string_view kDecide = "decide";
inline constexpr std::string_view kWait = "wait";
inline constexpr std::string_view kRescue = "rescue";

/// One randomized draw: what was drawn, when, and with which probability.
/// Forced transitions (probability 1 by construction) are not recorded,
/// except the arm draw of a single-arm design.
struct PathStep {
    StepKind kind = StepKind::arm;
    Week week = 0;
    std::string action;
    double probability = 1.0;

    bool operator==(const PathStep&) const = default;
};

using AssignmentPath = std::vector<PathStep>;

struct ArmLabels {
    std::optional<std::string> cutoff;
    std::optional<std::string> time;
    std::optional<std::string> variable;
    std::optional<std::string> rescue;

    bool operator==(const ArmLabels&) const = default;
};

struct TrialRecord {
    std::size_t participant_id = 0;
    ArmLabels arms;
    std::optional<std::string> rule;  // canonical text of the assigned tailoring rule
    ObservedTrajectory trajectory;
    std::optional<int> responder;  // R: 1 responder, 0 nonresponder
    std::optional<Week> classification_week;
    int rescued = 0;  // A
    std::optional<Week> rescue_week;
    std::optional<std::string> rescue_option;
    double y = 0.0;
    int y_bin = 0;
    double y_adj = 0.0;
    AssignmentPath path;
};

// ---------------------------------------------------------------------------
// Design specifications

struct CutoffTrial {
    Feature feature;
    std::vector<double> cutoffs;
    Week decision_week = 4;
    std::string rescue_option;
};

enum class TimeAllocation { upfront, sequential };

struct DecisionTimeTrial {
    Feature feature;
    double cutoff = 0.0;
    std::vector<Week> times;
    TimeAllocation allocation = TimeAllocation::upfront;
    // upfront: marginal share per time (empty = equal); sequential: stage-wise
    // probability of "decide now" per time, last entry forced to 1.
    std::vector<double> probabilities;
    std::string rescue_option;
};

struct FactorialCutoffTime {
    Feature feature;
    std::vector<double> cutoffs;
    std::vector<Week> times;
    std::string rescue_option;
};

/// Factorial cutoff x time arms, nonresponders re-randomized with equal
/// probability among the rescue options.
struct HybridFactorialSmart {
    Feature feature;
    std::vector<double> cutoffs;
    std::vector<Week> times;
    std::vector<std::string> rescue_options;
};

struct VariableTrial {
    std::vector<TailoringRule> rules;
    std::string rescue_option;
};

struct SinglyRandomizedRescue {
    Week decision_week = 4;
    double probability = 0.5;
    std::string rescue_option;
};

struct UnrestrictedSmart {
    std::vector<Week> times;
    std::vector<double> probabilities;  // per-time probability of rescue now
    std::string rescue_option;
};

struct VariableOption {
    std::string name;
    std::vector<Feature> features;                  // one or two
    std::vector<std::vector<double>> cutoff_levels;  // each level: one cutoff per feature
};

struct FullCross {
    std::vector<VariableOption> variables;
    std::vector<Week> times;
    std::string rescue_option;
};

/// Everyone stays on the initial treatment; the source of correlational data.
struct InitialOnly {};

using DesignVariant = std::variant<CutoffTrial, DecisionTimeTrial, FactorialCutoffTime, HybridFactorialSmart,
                                   VariableTrial, SinglyRandomizedRescue, UnrestrictedSmart, FullCross, InitialOnly>;

struct DesignSpec {
    DesignVariant variant;
    std::optional<std::size_t> block_size;  // permuted-block randomization of upfront arms
};

inline std::string_view design_name(const DesignSpec& spec) {
    static constexpr std::string_view names[] = {"cutoff_trial",      "decision_time_trial", "factorial_cutoff_time",
                                                 "hybrid_factorial_smart", "variable_trial", "singly_randomized_rescue",
                                                 "unrestricted_smart", "full_cross",          "initial_only"};
    return names[spec.variant.index()];
}

// ---------------------------------------------------------------------------
// Allocation helpers

/// Stage-wise "decide now" probabilities reproducing the target marginal
/// allocation over decision times: p_k = target_k / (mass remaining at k),
/// final stage forced to 1.
inline std::vector<double> sequential_alloc_probs(const std::vector<double>& target) {
    if (target.empty()) throw ConfigError("target allocation must not be empty");
    double total = 0.0;
    for (double t : target) {
        if (!(t >= 0.0)) throw ConfigError("target allocation entries must be >= 0");
        total += t;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("target allocation must sum to 1");
    std::vector<double> stage(target.size(), 1.0);
    double remaining = 1.0;
    for (std::size_t k = 0; k + 1 < target.size(); ++k) {
        if (remaining <= 1e-12) {
            if (target[k] > 0.0) throw ConfigError("infeasible target: no mass left at stage " + std::to_string(k + 1));
            stage[k] = 1.0;
            continue;
        }
        stage[k] = std::min(1.0, target[k] / remaining);
        remaining -= target[k];
    }
    if (remaining <= 1e-12 && target.back() > 1e-12) throw ConfigError("infeasible target: no mass left at final stage");
    return stage;
}

/// Marginal allocation induced by stage-wise probabilities.
inline std::vector<double> stage_marginals(const std::vector<double>& stage) {
    std::vector<double> out(stage.size(), 0.0);
    double remaining = 1.0;
    for (std::size_t k = 0; k < stage.size(); ++k) {
        const double p = (k + 1 == stage.size()) ? 1.0 : stage[k];
        out[k] = remaining * p;
        remaining -= out[k];
    }
    return out;
}

/// Permuted blocks of size b over k arms: every complete block holds b/k of
/// each arm; a trailing partial block is a truncated permutation.
inline std::vector<std::size_t> permuted_block_assign(std::size_t n, std::size_t arms, std::size_t block_size,
                                                      std::uint64_t seed) {
    if (arms == 0) throw ConfigError("permuted blocks need at least one arm");
    if (block_size == 0 || block_size % arms != 0) {
        throw ConfigError("block size " + std::to_string(block_size) + " is not a positive multiple of " +
                          std::to_string(arms) + " arms");
    }
    auto stream = rng::substream(seed, rng::Purpose::block, 0);
    std::vector<std::size_t> out;
    out.reserve(n);
    std::vector<std::size_t> block(block_size);
    while (out.size() < n) {
        for (std::size_t j = 0; j < block_size; ++j) block[j] = j % arms;
        stream.shuffle(block);
        const std::size_t take = std::min(block_size, n - out.size());
        out.insert(out.end(), block.begin(), block.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Arm expansion for rule-based designs

struct Arm {
    TailoringRule rule;
    ArmLabels labels;
    double probability = 1.0;
};

namespace detail {

inline void check_times(const std::vector<Week>& times, std::string_view where) {
    if (times.empty()) throw ConfigError(std::string(where) + " must not be empty");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (times[i] <= times[i - 1]) throw ConfigError(std::string(where) + " must be strictly increasing");
    }
}

inline void check_open_probability(double p, std::string_view where) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError(std::string(where) + " must lie strictly inside (0,1)");
}

inline std::vector<Arm> equal_arms(std::vector<Arm> arms) {
    for (auto& a : arms) a.probability = 1.0 / static_cast<double>(arms.size());
    return arms;
}

inline std::vector<Arm> cutoff_time_arms(const Feature& feature, const std::vector<double>& cutoffs,
                                         const std::vector<Week>& times) {
    if (cutoffs.empty()) throw ConfigError("design.cutoffs must not be empty");
    check_times(times, "design.times");
    std::vector<Arm> arms;
    for (double c : cutoffs) {
        for (Week k : times) {
            TailoringRule rule(k, AtomicCondition{feature, c});
            arms.push_back({rule, {format_double(c), std::to_string(k), to_string(feature), std::nullopt}, 0.0});
        }
    }
    return equal_arms(std::move(arms));
}

}  // namespace detail

/// Upfront arms of a rule-based design. For the sequential decision-time
/// trial the arms carry the induced marginal shares. Empty for designs that
/// randomize the rescue action itself.
inline std::vector<Arm> design_arms(const DesignSpec& spec) {
    return std::visit(
        [](const auto& d) -> std::vector<Arm> {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, CutoffTrial>) {
                if (d.cutoffs.empty()) throw ConfigError("design.cutoffs must not be empty");
                std::vector<Arm> arms;
                for (double c : d.cutoffs) {
                    TailoringRule rule(d.decision_week, AtomicCondition{d.feature, c});
                    arms.push_back({rule, {format_double(c), std::nullopt, std::nullopt, std::nullopt}, 0.0});
                }
                return detail::equal_arms(std::move(arms));
            } else if constexpr (std::is_same_v<T, DecisionTimeTrial>) {
                detail::check_times(d.times, "design.times");
                std::vector<double> shares;
                if (d.allocation == TimeAllocation::sequential) {
                    if (d.probabilities.size() != d.times.size() && d.probabilities.size() + 1 != d.times.size()) {
                        throw ConfigError("design.stage_probabilities needs one entry per time (last may be omitted)");
                    }
                    std::vector<double> stage = d.probabilities;
                    stage.resize(d.times.size(), 1.0);
                    for (std::size_t k = 0; k + 1 < stage.size(); ++k) {
                        detail::check_open_probability(stage[k], "design.stage_probabilities[" + std::to_string(k) + "]");
                    }
                    if (stage.back() != 1.0) throw ConfigError("design.stage_probabilities final stage must be 1");
                    shares = stage_marginals(stage);
                } else if (d.probabilities.empty()) {
                    shares.assign(d.times.size(), 1.0 / static_cast<double>(d.times.size()));
                } else {
                    if (d.probabilities.size() != d.times.size()) {
                        throw ConfigError("design.allocation needs one share per time");
                    }
                    double total = 0.0;
                    for (std::size_t k = 0; k < d.probabilities.size(); ++k) {
                        if (!(d.probabilities[k] > 0.0 && d.probabilities[k] <= 1.0)) {
                            throw ConfigError("design.allocation[" + std::to_string(k) + "] must lie in (0,1]");
                        }
                        total += d.probabilities[k];
                    }
                    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("design.allocation must sum to 1");
                    shares = d.probabilities;
                }
                std::vector<Arm> arms;
                for (std::size_t k = 0; k < d.times.size(); ++k) {
                    TailoringRule rule(d.times[k], AtomicCondition{d.feature, d.cutoff});
                    arms.push_back({rule, {std::nullopt, std::to_string(d.times[k]), std::nullopt, std::nullopt},
                                    shares[k]});
                }
                return arms;
            } else if constexpr (std::is_same_v<T, FactorialCutoffTime>) {
                auto arms = detail::cutoff_time_arms(d.feature, d.cutoffs, d.times);
                for (auto& a : arms) a.labels.variable.reset();
                return arms;
            } else if constexpr (std::is_same_v<T, HybridFactorialSmart>) {
                auto arms = detail::cutoff_time_arms(d.feature, d.cutoffs, d.times);
                for (auto& a : arms) a.labels.variable.reset();
                return arms;
            } else if constexpr (std::is_same_v<T, VariableTrial>) {
                if (d.rules.empty()) throw ConfigError("design.rules must not be empty");
                std::vector<Arm> arms;
                for (std::size_t i = 0; i < d.rules.size(); ++i) {
                    for (std::size_t j = 0; j < i; ++j) {
                        if (d.rules[j] == d.rules[i]) throw ConfigError("design.rules contains a duplicate rule");
                    }
                    arms.push_back({d.rules[i], {std::nullopt, std::nullopt, condition_text(d.rules[i]), std::nullopt},
                                    0.0});
                }
                return detail::equal_arms(std::move(arms));
            } else if constexpr (std::is_same_v<T, FullCross>) {
                if (d.variables.empty()) throw ConfigError("design.variables must not be empty");
                detail::check_times(d.times, "design.times");
                const std::size_t levels = d.variables.front().cutoff_levels.size();
                std::vector<Arm> arms;
                for (const auto& opt : d.variables) {
                    if (!is_valid_id(opt.name)) throw ConfigError("design.variables name '" + opt.name + "' is invalid");
                    if (opt.features.empty() || opt.features.size() > 2) {
                        throw ConfigError("design.variables '" + opt.name + "' needs one or two features");
                    }
                    if (opt.cutoff_levels.size() != levels || levels == 0) {
                        throw ConfigError("design.variables must share the same nonzero number of cutoff levels");
                    }
                    for (const auto& level : opt.cutoff_levels) {
                        if (level.size() != opt.features.size()) {
                            throw ConfigError("design.variables '" + opt.name + "' cutoff level size mismatch");
                        }
                        for (Week k : d.times) {
                            std::optional<AtomicCondition> second;
                            if (opt.features.size() == 2) second = AtomicCondition{opt.features[1], level[1]};
                            TailoringRule rule(k, AtomicCondition{opt.features[0], level[0]}, second);
                            arms.push_back({rule, {cutoff_text(rule), std::to_string(k), opt.name, std::nullopt}, 0.0});
                        }
                    }
                }
                return detail::equal_arms(std::move(arms));
            } else {
                return {};
            }
        },
        spec.variant);
}

inline bool is_rule_based(const DesignSpec& spec) {
    return !std::holds_alternative<SinglyRandomizedRescue>(spec.variant) &&
           !std::holds_alternative<UnrestrictedSmart>(spec.variant) &&
           !std::holds_alternative<InitialOnly>(spec.variant);
}

/// Rescue options the design can deliver, with their assignment probabilities
/// among nonresponders.
inline std::vector<std::string> design_rescue_options(const DesignSpec& spec) {
    return std::visit(
        [](const auto& d) -> std::vector<std::string> {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, HybridFactorialSmart>) {
                return d.rescue_options;
            } else if constexpr (std::is_same_v<T, InitialOnly>) {
                return {};
            } else {
                return {d.rescue_option};
            }
        },
        spec.variant);
}

/// Structural checks that do not need a population.
inline void validate_design(const DesignSpec& spec) {
    (void)design_arms(spec);
    if (const auto* d = std::get_if<SinglyRandomizedRescue>(&spec.variant)) {
        detail::check_open_probability(d->probability, "design.probability");
        if (d->decision_week < 1) throw ConfigError("design.decision_week must be >= 1");
    }
    if (const auto* d = std::get_if<UnrestrictedSmart>(&spec.variant)) {
        detail::check_times(d->times, "design.times");
        if (d->probabilities.size() != d->times.size()) {
            throw ConfigError("design.probabilities needs one entry per time");
        }
        for (std::size_t k = 0; k < d->probabilities.size(); ++k) {
            detail::check_open_probability(d->probabilities[k], "design.probabilities[" + std::to_string(k) + "]");
        }
    }
    if (const auto* d = std::get_if<HybridFactorialSmart>(&spec.variant)) {
        if (d->rescue_options.size() < 2) throw ConfigError("design.rescue_options needs at least two options");
    }
    if (spec.block_size && *spec.block_size == 0) throw ConfigError("design.block_size must be positive");
}

/// Every (option, week) pair the design may realize must be in the table.
inline void check_design_coverage(const ScenarioParams& params, const DesignSpec& spec) {
    validate_design(spec);
    const auto options = design_rescue_options(spec);
    std::vector<Week> weeks;
    for (const auto& arm : design_arms(spec)) weeks.push_back(arm.rule.decision_week());
    if (const auto* d = std::get_if<SinglyRandomizedRescue>(&spec.variant)) weeks.push_back(d->decision_week);
    if (const auto* d = std::get_if<UnrestrictedSmart>(&spec.variant)) weeks.insert(weeks.end(), d->times.begin(), d->times.end());
    for (const auto& arm : design_arms(spec)) {
        for (std::size_t c = 0; c < arm.rule.size(); ++c) {
            const auto& var = arm.rule.condition(c).feature.variable;
            const bool known = std::any_of(params.variables.begin(), params.variables.end(),
                                           [&](const VariableParams& v) { return v.id == var; });
            if (!known) throw ConfigError("design references unknown variable '" + var + "'");
        }
    }
    for (const auto& o : options) {
        (void)params.rescue_index(o);
        for (Week k : weeks) {
            if (k > params.horizon) throw CoverageError("week " + std::to_string(k) + " beyond horizon");
            (void)params.week_index(k);
        }
    }
}

// ---------------------------------------------------------------------------
// Execution

namespace detail {

inline void finish_record(TrialRecord& rec, const PotentialOutcomeTable& table, std::size_t i) {
    const auto& params = table.params();
    rec.y = rec.rescued ? table.rescued(i, *rec.rescue_option, *rec.rescue_week) : table.no_rescue(i);
    rec.y_bin = rec.y >= params.success_threshold ? 1 : 0;
    rec.y_adj = rec.y - params.kappa * rec.rescued;
}

inline void apply_rule(TrialRecord& rec, const TailoringRule& rule, const std::vector<std::string>& options,
                       rng::Stream& stream) {
    const Week k = rule.decision_week();
    rec.rule = to_string(rule);
    rec.classification_week = k;
    const bool nonresponder = is_nonresponder(rec.trajectory, rule);
    rec.responder = nonresponder ? 0 : 1;
    if (!nonresponder) return;
    rec.rescued = 1;
    rec.rescue_week = k;
    if (options.size() == 1) {
        rec.rescue_option = options.front();
    } else {
        const auto pick = stream.below(options.size());
        rec.rescue_option = options[pick];
        rec.arms.rescue = options[pick];
        rec.path.push_back({StepKind::option, k, options[pick], 1.0 / static_cast<double>(options.size())});
    }
}

}  // namespace detail

/// Deterministic in (table, spec, seed); the thread count only affects speed.
inline std::vector<TrialRecord> run_design(const PotentialOutcomeTable& table, const DesignSpec& spec,
                                           std::uint64_t seed, unsigned threads = 1) {
    check_design_coverage(table.params(), spec);
    const std::size_t n = table.size();
    std::vector<TrialRecord> records(n);
    const auto arms = design_arms(spec);
    const auto options = design_rescue_options(spec);

    std::vector<std::size_t> blocked;
    if (spec.block_size) {
        if (arms.empty()) throw ConfigError("design.block_size applies only to upfront arm randomization");
        const auto* dt = std::get_if<DecisionTimeTrial>(&spec.variant);
        if (dt && dt->allocation == TimeAllocation::sequential) {
            throw ConfigError("design.block_size is incompatible with sequential allocation");
        }
        for (const auto& a : arms) {
            if (std::abs(a.probability - arms.front().probability) > 1e-12) {
                throw ConfigError("design.block_size requires equal allocation across arms");
            }
        }
        blocked = permuted_block_assign(n, arms.size(), *spec.block_size, seed);
    }

    std::vector<double> shares;
    for (const auto& a : arms) shares.push_back(a.probability);

    parallel_for(n, threads, [&](std::size_t i) {
        auto stream = rng::substream(seed, rng::Purpose::design, i);
        TrialRecord& rec = records[i];
        rec.participant_id = i;
        rec.trajectory = table.trajectory(i);

        std::visit(
            [&](const auto& d) {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, SinglyRandomizedRescue>) {
                    const bool rescue = stream.bernoulli(d.probability);
                    rec.path.push_back({StepKind::rescue, d.decision_week, std::string(rescue ? kRescue : kWait),
                                        rescue ? d.probability : 1.0 - d.probability});
                    rec.arms.rescue = rescue ? "rescue" : "none";
                    if (rescue) {
                        rec.rescued = 1;
                        rec.rescue_week = d.decision_week;
                        rec.rescue_option = d.rescue_option;
                    }
                } else if constexpr (std::is_same_v<T, UnrestrictedSmart>) {
                    for (std::size_t k = 0; k < d.times.size(); ++k) {
                        const double p = d.probabilities[k];
                        const bool rescue = stream.bernoulli(p);
                        rec.path.push_back({StepKind::rescue, d.times[k], std::string(rescue ? kRescue : kWait),
                                            rescue ? p : 1.0 - p});
                        if (rescue) {
                            rec.rescued = 1;
                            rec.rescue_week = d.times[k];
                            rec.rescue_option = d.rescue_option;
                            break;  // no further randomizations once rescued
                        }
                    }
                    rec.arms.rescue = rec.rescued ? "rescue" : "none";
                    rec.arms.time = rec.rescued ? std::to_string(*rec.rescue_week) : "none";
                } else if constexpr (std::is_same_v<T, InitialOnly>) {
                    // no randomization
                } else if constexpr (std::is_same_v<T, DecisionTimeTrial>) {
                    std::size_t chosen = 0;
                    if (d.allocation == TimeAllocation::sequential) {
                        std::vector<double> stage = d.probabilities;
                        stage.resize(d.times.size(), 1.0);
                        for (chosen = 0; chosen + 1 < d.times.size(); ++chosen) {
                            const bool now = stream.bernoulli(stage[chosen]);
                            rec.path.push_back({StepKind::decide, d.times[chosen],
                                                std::string(now ? kDecide : kWait),
                                                now ? stage[chosen] : 1.0 - stage[chosen]});
                            if (now) break;
                        }
                    } else {
                        chosen = blocked.empty() ? stream.categorical(shares) : blocked[i];
                        rec.path.push_back({StepKind::arm, 0, std::to_string(chosen), arms[chosen].probability});
                    }
                    rec.arms = arms[chosen].labels;
                    detail::apply_rule(rec, arms[chosen].rule, options, stream);
                } else {
                    const std::size_t chosen = blocked.empty() ? stream.categorical(shares) : blocked[i];
                    rec.path.push_back({StepKind::arm, 0, std::to_string(chosen), arms[chosen].probability});
                    rec.arms = arms[chosen].labels;
                    detail::apply_rule(rec, arms[chosen].rule, options, stream);
                }
            },
            spec.variant);
        detail::finish_record(rec, table, i);
    });
    return records;
}

}  // namespace tailorlab
