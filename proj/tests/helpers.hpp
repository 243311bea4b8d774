#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tailorlab/core.hpp"
#include "tailorlab/datagen.hpp"
#include "tailorlab/designs.hpp"

namespace testing_helpers {

using namespace tailorlab;

/// One-variable trajectory from literal weekly values.
inline ObservedTrajectory series(const std::string& id, std::vector<double> weekly) {
    auto vars = std::make_shared<const std::vector<std::string>>(std::vector<std::string>{id});
    const auto horizon = static_cast<Week>(weekly.size());
    return ObservedTrajectory(vars, horizon, std::move(weekly));
}

/// Two-variable trajectory, both series of equal length.
inline ObservedTrajectory pair_series(const std::string& a, std::vector<double> va, const std::string& b,
                                      const std::vector<double>& vb) {
    auto vars = std::make_shared<const std::vector<std::string>>(std::vector<std::string>{a, b});
    const auto horizon = static_cast<Week>(va.size());
    va.insert(va.end(), vb.begin(), vb.end());
    return ObservedTrajectory(vars, horizon, std::move(va));
}

inline Feature mean_below(const std::string& v) { return {v, Aggregation::mean_rate, Direction::below_is_nonresponse}; }
inline Feature mean_above(const std::string& v) { return {v, Aggregation::mean_rate, Direction::above_is_nonresponse}; }

inline ScenarioParams scenario(std::size_t n, std::uint64_t seed) {
    ScenarioParams p;
    p.horizon = 10;
    p.n = n;
    p.decision_weeks = {2, 4, 6, 8};
    p.variables = {{"app", 2.0, -0.7, 0.5, 0.6}, {"cannabis", 2.0, 0.9, 0.6, 0.8}, {"sleep", 7.0, 0.0, 0.3, 1.0}};
    p.outcome = {5.0, -1.5, 1.0};
    p.rescue_options = {{"coaching", 0.4, 0.8, 0.15}, {"incentives", 0.6, 0.3, 0.05}};
    p.kappa = 0.5;
    p.success_threshold = 5.0;
    p.seed = seed;
    return p;
}

/// Record with a given outcome and optional arm labels, for estimator fixtures.
inline TrialRecord record(double y, std::vector<double> weekly = {0.0}) {
    TrialRecord r;
    r.trajectory = series("app", std::move(weekly));
    r.y = y;
    r.y_adj = y;
    return r;
}

}  // namespace testing_helpers
