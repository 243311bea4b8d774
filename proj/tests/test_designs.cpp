#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "tailorlab/analysis.hpp"
#include "tailorlab/designs.hpp"
#include "tailorlab/stats.hpp"

using namespace tailorlab;
using testing_helpers::mean_above;
using testing_helpers::mean_below;
using testing_helpers::scenario;

namespace {

std::vector<DesignSpec> all_designs() {
    const Feature app = mean_below("app");
    const Feature cann = mean_above("cannabis");
    return {
        {CutoffTrial{app, {1.0, 1.5, 2.0}, 4, "coaching"}, std::nullopt},
        {DecisionTimeTrial{app, 1.5, {2, 4, 6, 8}, TimeAllocation::upfront, {}, "coaching"}, std::nullopt},
        {DecisionTimeTrial{app, 1.5, {2, 4, 6, 8}, TimeAllocation::sequential, {0.5, 0.5, 0.5}, "incentives"},
         std::nullopt},
        {FactorialCutoffTime{app, {1.0, 2.0}, {2, 6}, "coaching"}, std::nullopt},
        {HybridFactorialSmart{app, {1.0, 2.0}, {4}, {"coaching", "incentives"}}, std::nullopt},
        {VariableTrial{{TailoringRule(4, {app, 1.5}), TailoringRule(4, {cann, 2.5})}, "coaching"}, std::nullopt},
        {SinglyRandomizedRescue{4, 0.5, "coaching"}, std::nullopt},
        {UnrestrictedSmart{{2, 4, 6}, {0.3, 0.5, 0.5}, "coaching"}, std::nullopt},
        {FullCross{{{"app", {app}, {{1.0}, {2.0}}}, {"both", {cann, app}, {{1.0, 1.0}, {2.0, 2.0}}}}, {2, 4}, "coaching"},
         std::nullopt},
        {InitialOnly{}, std::nullopt},
    };
}

std::map<std::string, double> shares(const std::vector<TrialRecord>& recs, Factor f) {
    std::map<std::string, double> out;
    for (const auto& r : recs) {
        const auto& label = f == Factor::time ? r.arms.time : f == Factor::cutoff ? r.arms.cutoff : r.rule;
        out[label.value_or("NA")] += 1.0 / static_cast<double>(recs.size());
    }
    return out;
}

}  // namespace

TEST(SequentialAlloc, Examples) {
    const auto m = stage_marginals({0.5, 0.5, 0.5, 1.0});
    EXPECT_DOUBLE_EQ(m[0], 0.5);
    EXPECT_DOUBLE_EQ(m[1], 0.25);
    EXPECT_DOUBLE_EQ(m[2], 0.125);
    EXPECT_DOUBLE_EQ(m[3], 0.125);

    const auto p = sequential_alloc_probs({0.25, 0.25, 0.25, 0.25});
    ASSERT_EQ(p.size(), 4u);
    EXPECT_DOUBLE_EQ(p[0], 0.25);
    EXPECT_DOUBLE_EQ(p[1], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(p[2], 0.5);
    EXPECT_DOUBLE_EQ(p[3], 1.0);

    const auto two = sequential_alloc_probs({0.5, 0.5});
    EXPECT_DOUBLE_EQ(two[0], 0.5);
    EXPECT_DOUBLE_EQ(two[1], 1.0);
}

TEST(SequentialAlloc, RoundTripsArbitraryTargets) {
    for (const std::vector<double>& target :
         {std::vector<double>{0.1, 0.2, 0.3, 0.4}, std::vector<double>{0.7, 0.1, 0.2}, std::vector<double>{1.0}}) {
        const auto m = stage_marginals(sequential_alloc_probs(target));
        for (std::size_t k = 0; k < target.size(); ++k) EXPECT_NEAR(m[k], target[k], 1e-15);
    }
}

TEST(SequentialAlloc, InfeasibleAndInvalidTargets) {
    EXPECT_THROW(sequential_alloc_probs({1.0, 0.0, 0.5}), ConfigError);
    EXPECT_THROW(sequential_alloc_probs({0.5, 0.6}), ConfigError);
    EXPECT_THROW(sequential_alloc_probs({-0.1, 1.1}), ConfigError);
    EXPECT_THROW(sequential_alloc_probs({}), ConfigError);
}

TEST(PermutedBlocks, Examples) {
    const auto eight = permuted_block_assign(8, 2, 4, 1);
    for (std::size_t b = 0; b < 2; ++b) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < 4; ++j) ones += eight[b * 4 + j];
        EXPECT_EQ(ones, 2u);
    }

    const auto seven = permuted_block_assign(7, 2, 4, 2);
    ASSERT_EQ(seven.size(), 7u);
    std::size_t first_block = 0, total = 0;
    for (std::size_t j = 0; j < 4; ++j) first_block += seven[j];
    for (auto a : seven) total += a;
    EXPECT_EQ(first_block, 2u);
    // The partial block holds at most b/2 of either arm, so overall imbalance <= 2.
    EXPECT_LE(std::abs(static_cast<long>(total) - static_cast<long>(7 - total)), 2);

    const auto hundred = permuted_block_assign(100, 4, 4, 3);
    std::vector<std::size_t> counts(4);
    for (auto a : hundred) ++counts[a];
    for (auto c : counts) EXPECT_EQ(c, 25u);

    EXPECT_THROW(permuted_block_assign(10, 3, 4, 1), ConfigError);
    EXPECT_THROW(permuted_block_assign(10, 2, 0, 1), ConfigError);
}

TEST(Designs, ArmExpansion) {
    const auto designs = all_designs();
    EXPECT_EQ(design_arms(designs[0]).size(), 3u);
    EXPECT_EQ(design_arms(designs[3]).size(), 4u);
    EXPECT_EQ(design_arms(designs[8]).size(), 2u * 2u * 2u);  // variables x levels x times
    EXPECT_TRUE(design_arms(designs[6]).empty());
    EXPECT_TRUE(design_arms(designs[9]).empty());
    const auto seq = design_arms(designs[2]);
    EXPECT_DOUBLE_EQ(seq[0].probability, 0.5);
    EXPECT_DOUBLE_EQ(seq[3].probability, 0.125);
}

TEST(Designs, ValidationErrors) {
    const Feature app = mean_below("app");
    auto rejects = [](DesignVariant v) { EXPECT_THROW(validate_design(DesignSpec{std::move(v), std::nullopt}), ConfigError); };
    rejects(CutoffTrial{app, {}, 4, "coaching"});
    rejects(DecisionTimeTrial{app, 1.5, {4, 2}, TimeAllocation::upfront, {}, "coaching"});
    rejects(DecisionTimeTrial{app, 1.5, {2, 4}, TimeAllocation::sequential, {1.0}, "coaching"});
    rejects(DecisionTimeTrial{app, 1.5, {2, 4}, TimeAllocation::upfront, {0.3, 0.3}, "coaching"});
    rejects(SinglyRandomizedRescue{4, 1.0, "coaching"});
    rejects(UnrestrictedSmart{{2, 4}, {0.5}, "coaching"});
    rejects(UnrestrictedSmart{{2, 4}, {0.5, 0.0}, "coaching"});
    rejects(HybridFactorialSmart{app, {1.0}, {4}, {"coaching"}});
    rejects(VariableTrial{{TailoringRule(4, {app, 1.0}), TailoringRule(4, {app, 1.0})}, "coaching"});
}

TEST(Designs, CoverageErrors) {
    const auto p = scenario(10, 1);
    const Feature app = mean_below("app");
    EXPECT_THROW(check_design_coverage(p, {CutoffTrial{app, {1.0}, 4, "therapy"}, std::nullopt}), CoverageError);
    EXPECT_THROW(check_design_coverage(p, {CutoffTrial{app, {1.0}, 5, "coaching"}, std::nullopt}), CoverageError);
    EXPECT_THROW(check_design_coverage(p, {CutoffTrial{mean_below("steps"), {1.0}, 4, "coaching"}, std::nullopt}),
                 ConfigError);
}

TEST(Designs, RecordInvariantsAndConsistency) {
    const auto p = scenario(1500, 31);
    const auto table = gen_population(p);
    for (const auto& spec : all_designs()) {
        const auto recs = run_design(table, spec, 77);
        ASSERT_EQ(recs.size(), table.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const auto& r = recs[i];
            ASSERT_EQ(r.participant_id, i);
            ASSERT_EQ(r.rescued == 1, r.rescue_week.has_value());
            ASSERT_EQ(r.rescued == 1, r.rescue_option.has_value());
            // Observed Y is the table entry for the realized action sequence.
            const double expected = r.rescued ? table.rescued(i, *r.rescue_option, *r.rescue_week) : table.no_rescue(i);
            ASSERT_EQ(r.y, expected) << design_name(spec);
            ASSERT_EQ(r.y_bin, r.y >= p.success_threshold ? 1 : 0);
            ASSERT_DOUBLE_EQ(r.y_adj, r.y - p.kappa * r.rescued);
            if (r.classification_week && r.rescue_week) {
                ASSERT_GE(*r.rescue_week, *r.classification_week);
            }
            for (const auto& step : r.path) {
                ASSERT_GT(step.probability, 0.0);
                ASSERT_LE(step.probability, 1.0);
                if (step.kind != StepKind::arm) {
                    ASSERT_LT(step.probability, 1.0);
                }
            }
            if (is_rule_based(spec)) {
                ASSERT_TRUE(r.rule.has_value());
                const bool nr = is_nonresponder(r.trajectory, parse_rule(*r.rule));
                ASSERT_EQ(r.rescued, nr ? 1 : 0);
                ASSERT_EQ(r.responder, nr ? 0 : 1);
            } else {
                ASSERT_FALSE(r.responder.has_value());
            }
        }
    }
}

TEST(Designs, DeterministicAndThreadIndependent) {
    const auto table = gen_population(scenario(800, 32));
    for (const auto& spec : all_designs()) {
        const auto a = run_design(table, spec, 5, 1);
        const auto b = run_design(table, spec, 5, 3);
        for (std::size_t i = 0; i < a.size(); ++i) {
            ASSERT_EQ(a[i].arms, b[i].arms);
            ASSERT_EQ(a[i].path, b[i].path);
            ASSERT_EQ(a[i].y, b[i].y);
        }
    }
}

TEST(Designs, VariableTrialConstraint) {
    const Feature app = mean_below("app");
    const Feature cann = mean_above("cannabis");
    const TailoringRule r1(4, {app, 1.5}), r2(4, {cann, 2.5});
    const auto table = gen_population(scenario(2000, 33));
    const auto recs = run_design(table, {VariableTrial{{r1, r2}, "coaching"}, std::nullopt}, 9);
    for (const auto& r : recs) {
        const int u = *r.rule == to_string(r1) ? 1 : 0;
        const int o1 = is_nonresponder(r.trajectory, r1) ? 0 : 1;
        const int o2 = is_nonresponder(r.trajectory, r2) ? 0 : 1;
        ASSERT_EQ(r.rescued, u * (1 - o1) + (1 - u) * (1 - o2));
    }
}

TEST(Designs, AllocationMatchesMarginals) {
    const auto table = gen_population(scenario(12000, 34));
    const Feature app = mean_below("app");
    auto within = [](double got, double want, double n) { return std::abs(got - want) <= 3.0 * std::sqrt(want * (1 - want) / n) + 1e-12; };

    const auto seq = run_design(
        table, {DecisionTimeTrial{app, 1.5, {2, 4, 6, 8}, TimeAllocation::sequential, {0.5, 0.5, 0.5}, "coaching"}, std::nullopt}, 1);
    const auto s = shares(seq, Factor::time);
    EXPECT_TRUE(within(s.at("2"), 0.5, 12000));
    EXPECT_TRUE(within(s.at("4"), 0.25, 12000));
    EXPECT_TRUE(within(s.at("6"), 0.125, 12000));
    EXPECT_TRUE(within(s.at("8"), 0.125, 12000));

    const auto fact = run_design(table, {FactorialCutoffTime{app, {1.0, 2.0}, {2, 6}, "coaching"}, std::nullopt}, 2);
    const auto cells = shares(fact, Factor::rule);
    ASSERT_EQ(cells.size(), 4u);
    for (const auto& [label, share] : cells) EXPECT_TRUE(within(share, 0.25, 12000)) << label;
    // Cutoff and time factors are independent: joint share is product of marginals.
    const auto cs = shares(fact, Factor::cutoff), ts = shares(fact, Factor::time);
    std::map<std::pair<std::string, std::string>, double> joint;
    for (const auto& r : fact) joint[{*r.arms.cutoff, *r.arms.time}] += 1.0 / fact.size();
    for (const auto& [key, share] : joint) EXPECT_NEAR(share, cs.at(key.first) * ts.at(key.second), 0.02);

    const auto hybrid = run_design(table, {HybridFactorialSmart{app, {1.0, 2.0}, {4}, {"coaching", "incentives"}}, std::nullopt}, 3);
    std::size_t nonresp = 0, coaching = 0;
    for (const auto& r : hybrid) {
        if (!r.rescued) continue;
        ++nonresp;
        coaching += *r.rescue_option == "coaching";
    }
    EXPECT_TRUE(within(static_cast<double>(coaching) / nonresp, 0.5, nonresp));
}

TEST(Designs, BlockedRandomizationBalancesArms) {
    const auto table = gen_population(scenario(1000, 35));
    const DesignSpec spec{CutoffTrial{mean_below("app"), {1.0, 2.0}, 4, "coaching"}, 4};
    const auto s = shares(run_design(table, spec, 4), Factor::cutoff);
    EXPECT_DOUBLE_EQ(s.at("1"), 0.5);
    EXPECT_DOUBLE_EQ(s.at("2"), 0.5);
    DesignSpec bad = spec;
    bad.block_size = 3;
    EXPECT_THROW(run_design(table, bad, 4), ConfigError);
    const DesignSpec srr{SinglyRandomizedRescue{4, 0.5, "coaching"}, 4};
    EXPECT_THROW(run_design(table, srr, 4), ConfigError);
}

TEST(Designs, SinglyRandomizedRescueIgnoresObservedVariables) {
    const auto table = gen_population(scenario(20000, 36));
    const auto recs = run_design(table, {SinglyRandomizedRescue{4, 0.5, "coaching"}, std::nullopt}, 6);
    std::vector<double> a, o;
    for (const auto& r : recs) {
        a.push_back(r.rescued);
        o.push_back(aggregate_feature(r.trajectory, mean_below("app"), 4));
    }
    const double ma = stats::mean(a), mo = stats::mean(o);
    double cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma) * (o[i] - mo);
    const double corr = cov / (a.size() - 1) / (stats::sd(a) * stats::sd(o));
    EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(20000.0));
    EXPECT_NEAR(ma, 0.5, 0.015);
}

TEST(Designs, UnrestrictedSmartStopsAfterRescue) {
    const auto table = gen_population(scenario(3000, 37));
    const auto recs = run_design(table, {UnrestrictedSmart{{2, 4, 6}, {0.3, 0.5, 0.5}, "coaching"}, std::nullopt}, 7);
    std::map<std::string, double> counts;
    for (const auto& r : recs) {
        ASSERT_FALSE(r.path.empty());
        for (std::size_t s = 0; s + 1 < r.path.size(); ++s) ASSERT_EQ(r.path[s].action, "wait");
        if (r.rescued) {
            ASSERT_EQ(r.path.back().week, *r.rescue_week);
        }
        counts[*r.arms.time] += 1.0 / recs.size();
    }
    EXPECT_NEAR(counts["2"], 0.3, 0.03);
    EXPECT_NEAR(counts["4"], 0.35, 0.03);
    EXPECT_NEAR(counts["6"], 0.175, 0.03);
    EXPECT_NEAR(counts["none"], 0.175, 0.03);
}
