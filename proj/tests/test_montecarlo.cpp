#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "tailorlab/montecarlo.hpp"

using namespace tailorlab;
using testing_helpers::mean_below;
using testing_helpers::scenario;

namespace {

McPlan cutoff_plan(std::size_t n, std::size_t reps, std::uint64_t seed) {
    McPlan plan;
    plan.scenario = scenario(n, 0);
    plan.design = {CutoffTrial{mean_below("app"), {1.0, 2.0}, 4, "coaching"}, std::nullopt};
    plan.replicates = reps;
    plan.seed = seed;
    return plan;
}

void expect_same(const McReport& a, const McReport& b) {
    ASSERT_EQ(a.contrasts.size(), b.contrasts.size());
    for (std::size_t i = 0; i < a.contrasts.size(); ++i) {
        EXPECT_EQ(a.contrasts[i].rejection_rate, b.contrasts[i].rejection_rate);
        EXPECT_EQ(a.contrasts[i].mean_estimate, b.contrasts[i].mean_estimate);
        EXPECT_EQ(a.contrasts[i].truth, b.contrasts[i].truth);
    }
    ASSERT_EQ(a.regimes.size(), b.regimes.size());
    for (std::size_t i = 0; i < a.regimes.size(); ++i) EXPECT_EQ(a.regimes[i].mean_estimate, b.regimes[i].mean_estimate);
    ASSERT_EQ(a.arms.size(), b.arms.size());
    for (std::size_t i = 0; i < a.arms.size(); ++i) EXPECT_EQ(a.arms[i].mean_nonresponders, b.arms[i].mean_nonresponders);
}

}  // namespace

TEST(MonteCarlo, PlanValidation) {
    auto plan = cutoff_plan(100, 10, 1);
    plan.replicates = 0;
    EXPECT_THROW(plan.validate(), ConfigError);
    plan.replicates = 10;
    plan.alpha = 1.0;
    EXPECT_THROW(plan.validate(), ConfigError);
    plan.alpha = 0.05;
    plan.analysis.regimes = {{"initial", TailoringRule(4, {mean_below("app"), 1.0}), "therapy"}};
    EXPECT_THROW(plan.validate(), CoverageError);
}

TEST(MonteCarlo, PureFunctionOfPlan) {
    auto plan = cutoff_plan(150, 1, 7);
    expect_same(run_replicates(plan), run_replicates(plan));
    plan.replicates = 40;
    plan.analysis.regimes = {{"initial", TailoringRule(4, {mean_below("app"), 2.0}), "coaching"}};
    expect_same(run_replicates(plan, 1), run_replicates(plan, 4));
}

TEST(MonteCarlo, RejectionRateMcSe) {
    const auto report = run_replicates(cutoff_plan(200, 150, 3));
    ASSERT_EQ(report.contrasts.size(), 1u);
    const auto& c = report.contrasts[0];
    EXPECT_GE(c.rejection_rate, 0.0);
    EXPECT_LE(c.rejection_rate, 1.0);
    EXPECT_NEAR(c.rejection_mc_se, std::sqrt(c.rejection_rate * (1 - c.rejection_rate) / 150.0), 1e-15);
    EXPECT_EQ(c.replicates_used, 150u);
}

TEST(MonteCarlo, NullCalibration) {
    auto plan = cutoff_plan(300, 800, 11);
    plan.scenario.rescue_options[0] = {"coaching", 0.0, 0.0, 0.15};
    const auto c = run_replicates(plan).contrasts.at(0);
    EXPECT_LE(std::abs(c.rejection_rate - 0.05), 3.0 * std::sqrt(0.05 * 0.95 / 800.0));
    EXPECT_DOUBLE_EQ(*c.truth, 0.0);
}

TEST(MonteCarlo, EstimatorsConvergeToTruth) {
    auto plan = cutoff_plan(300, 300, 12);
    plan.analysis.regimes = {{"initial", TailoringRule(4, {mean_below("app"), 2.0}), "coaching"}};
    plan.reference_n = 50000;
    const auto report = run_replicates(plan);
    const auto& c = report.contrasts.at(0);
    EXPECT_LT(std::abs(*c.bias), 3.0 * c.estimate_mc_se);
    EXPECT_NEAR(*c.reference_truth, *c.truth, 0.05);
    const auto& r = report.regimes.at(0);
    EXPECT_LT(std::abs(r.bias), 3.0 * r.estimate_mc_se);
    EXPECT_EQ(r.unidentified, 0u);
}

TEST(MonteCarlo, SinglyRandomizedRescueContrastTruth) {
    McPlan plan;
    plan.scenario = scenario(400, 0);
    plan.design = {SinglyRandomizedRescue{4, 0.5, "coaching"}, std::nullopt};
    plan.replicates = 200;
    plan.seed = 5;
    const auto report = run_replicates(plan);
    ASSERT_EQ(report.contrasts.size(), 1u);
    const auto& c = report.contrasts[0];
    EXPECT_EQ(c.first, "none");
    EXPECT_LT(*c.truth, 0.0);  // rescue helps on average in this scenario
    EXPECT_LT(std::abs(*c.bias), 3.0 * c.estimate_mc_se);
    EXPECT_TRUE(report.arms.empty());
}

TEST(MonteCarlo, ArgmaxSummaryForDecisionTimeTrial) {
    McPlan plan;
    plan.scenario = scenario(400, 0);
    plan.design = {DecisionTimeTrial{mean_below("app"), 1.5, {2, 4, 6, 8}, TimeAllocation::upfront, {}, "coaching"},
                   std::nullopt};
    plan.replicates = 100;
    plan.seed = 6;
    const auto report = run_replicates(plan);
    ASSERT_TRUE(report.argmax.has_value());
    EXPECT_EQ(report.argmax->replicates_used, 100u);
    EXPECT_GE(report.argmax->mean, 2.0);
    EXPECT_LE(report.argmax->mean, 8.0);
    EXPECT_GE(report.argmax->mse, 0.0);
    EXPECT_EQ(report.contrasts.size(), 6u);
}

TEST(MonteCarlo, ReplicateErrorsCarryTheirKey) {
    auto plan = cutoff_plan(50, 3, 8);
    plan.analysis.regimes = {};
    plan.design = {InitialOnly{}, std::nullopt};
    // InitialOnly has no contrasts and no regimes: the run succeeds with an empty report.
    const auto report = run_replicates(plan);
    EXPECT_TRUE(report.contrasts.empty());

    const ReplicateError e(4, 1234, "boom");
    EXPECT_EQ(e.index(), 4u);
    EXPECT_EQ(e.key(), 1234u);
    EXPECT_NE(std::string(e.what()).find("1234"), std::string::npos);
}

TEST(EffectiveSample, InclusiveCutoffHasMoreNonresponders) {
    std::vector<std::vector<TrialRecord>> reps;
    auto p = scenario(400, 0);
    const DesignSpec spec{CutoffTrial{mean_below("app"), {1.0, 2.0}, 4, "coaching"}, std::nullopt};
    for (std::uint64_t r = 0; r < 30; ++r) {
        p.seed = 100 + r;
        reps.push_back(run_design(gen_population(p), spec, r));
    }
    const auto report = effective_sample_report(reps);
    ASSERT_EQ(report.size(), 2u);
    EXPECT_EQ(report[0].label, "app:mean:below:1@4");
    EXPECT_GT(report[1].mean_nonresponders, report[0].mean_nonresponders);
    EXPECT_NEAR(report[0].mean_n + report[1].mean_n, 400.0, 1e-9);
    EXPECT_GE(report[1].sd_nonresponders, 0.0);
}

TEST(EffectiveSample, EmptyAndFullNonresponderSets) {
    auto p = scenario(200, 3);
    const auto table = gen_population(p);
    const DesignSpec spec{CutoffTrial{mean_below("app"), {-1.0, 1e9}, 4, "coaching"}, std::nullopt};
    const auto report = effective_sample_report({run_design(table, spec, 1), run_design(table, spec, 2)});
    ASSERT_EQ(report.size(), 2u);
    const auto& none = report[0].label == "app:mean:below:-1@4" ? report[0] : report[1];
    const auto& all = report[0].label == "app:mean:below:-1@4" ? report[1] : report[0];
    EXPECT_EQ(none.mean_nonresponders, 0.0);
    EXPECT_TRUE(none.unpowered);
    EXPECT_EQ(all.mean_nonresponders, all.mean_n);
    EXPECT_FALSE(all.unpowered);

    const auto options = effective_sample_report(
        {run_design(table, {HybridFactorialSmart{mean_below("app"), {1.5}, {4}, {"coaching", "incentives"}}, std::nullopt}, 3)});
    ASSERT_EQ(options.size(), 1u);
    EXPECT_NEAR(options[0].mean_option_counts.at("coaching") + options[0].mean_option_counts.at("incentives"),
                options[0].mean_nonresponders, 1e-9);

    EXPECT_THROW(effective_sample_report({run_design(table, {InitialOnly{}, std::nullopt}, 1)}), ConfigError);
}

TEST(Power, NullEffectNeverReachesTarget) {
    auto plan = cutoff_plan(0, 200, 21);
    plan.scenario.rescue_options[0] = {"coaching", 0.0, 0.0, 0.0};
    const auto curve = power_search(plan, 0.8, {100, 300});
    EXPECT_FALSE(curve.required_n.has_value());
    ASSERT_EQ(curve.points.size(), 2u);
    for (const auto& pt : curve.points) EXPECT_LT(pt.power, 0.15);
}

TEST(Power, IncreasesWithSampleSize) {
    auto plan = cutoff_plan(0, 200, 22);
    plan.scenario.rescue_options[0] = {"coaching", 1.0, 0.0, 0.0};
    const auto curve = power_search(plan, 0.8, {100, 400, 1600});
    ASSERT_EQ(curve.points.size(), 3u);
    EXPECT_LT(curve.points[0].power, curve.points[2].power);
    ASSERT_TRUE(curve.required_n.has_value());
    for (const auto& pt : curve.points) {
        if (pt.n < *curve.required_n) {
            EXPECT_LT(pt.power, 0.8);
        }
    }
    EXPECT_GE(curve.points.back().power, 0.8);
    EXPECT_THROW(power_search(plan, 0.8, {400, 100}), ConfigError);
    EXPECT_THROW(power_search(plan, 0.8, {100}, 3), ConfigError);
}
