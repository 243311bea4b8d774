#pragma once

// Structural causal model for synthetic trial populations. Each participant
// carries a latent severity S that drives both the observed weekly variables
// (AR(1) around a severity-shifted mean, truncated at zero) and the final
// outcome, plus the full table of potential outcomes under every rescue
// option and candidate rescue week.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tailorlab/core.hpp"
#include "tailorlab/error.hpp"
#include "tailorlab/parallel.hpp"
#include "tailorlab/rng.hpp"

namespace tailorlab {

struct VariableParams {
    std::string id;
    double mu = 0.0;         // baseline level
    double beta_s = 0.0;     // severity loading
    double phi = 0.0;        // AR coefficient, |phi| < 1
    double sigma_eps = 1.0;  // innovation sd
};

struct OutcomeParams {
    double alpha0 = 0.0;
    double alpha_s = 0.0;
    double sigma_y = 1.0;
};

struct RescueParams {
    std::string id;
    double theta0 = 0.0;   // main effect when delivered at the earliest candidate week
    double theta_s = 0.0;  // severity moderation
    double lambda = 0.0;   // per-week decay of the effect with delivery delay
};

enum class OutcomeScale { raw, binary, cost_adjusted };

struct ScenarioParams {
    Week horizon = 10;
    std::size_t n = 500;
    std::vector<Week> decision_weeks{2, 4, 6, 8};
    std::vector<VariableParams> variables;
    OutcomeParams outcome;
    std::vector<RescueParams> rescue_options;
    double kappa = 0.0;
    double success_threshold = 0.0;
    std::uint64_t seed = 0;

    Week earliest_week() const { return *std::min_element(decision_weeks.begin(), decision_weeks.end()); }

    std::size_t rescue_index(std::string_view id) const {
        for (std::size_t i = 0; i < rescue_options.size(); ++i) {
            if (rescue_options[i].id == id) return i;
        }
        throw CoverageError("rescue option '" + std::string(id) + "' is not configured");
    }

    std::size_t week_index(Week week) const {
        auto it = std::find(decision_weeks.begin(), decision_weeks.end(), week);
        if (it == decision_weeks.end()) {
            throw CoverageError("week " + std::to_string(week) + " is not a candidate decision week");
        }
        return static_cast<std::size_t>(it - decision_weeks.begin());
    }

    void validate() const {
        if (horizon < 1) throw ConfigError("scenario.horizon must be >= 1");
        if (n < 1) throw ConfigError("scenario.n must be >= 1");
        if (variables.empty()) throw ConfigError("scenario.variables must not be empty");
        if (rescue_options.empty()) throw ConfigError("scenario.rescue_options must not be empty");
        if (decision_weeks.empty()) throw ConfigError("scenario.decision_weeks must not be empty");
        for (std::size_t i = 0; i < decision_weeks.size(); ++i) {
            if (decision_weeks[i] < 1 || decision_weeks[i] > horizon) {
                throw ConfigError("scenario.decision_weeks must lie within 1..horizon");
            }
            if (i > 0 && decision_weeks[i] <= decision_weeks[i - 1]) {
                throw ConfigError("scenario.decision_weeks must be strictly increasing");
            }
        }
        for (std::size_t i = 0; i < variables.size(); ++i) {
            const auto& v = variables[i];
            const std::string where = "scenario.variables[" + std::to_string(i) + "]";
            if (!is_valid_id(v.id)) throw ConfigError(where + ".id is not a valid id");
            for (std::size_t j = 0; j < i; ++j) {
                if (variables[j].id == v.id) throw ConfigError(where + ".id duplicates '" + v.id + "'");
            }
            if (!(std::abs(v.phi) < 1.0)) throw ConfigError(where + ".phi must satisfy |phi| < 1");
            if (!(v.sigma_eps >= 0.0)) throw ConfigError(where + ".sigma_eps must be >= 0");
            if (!std::isfinite(v.mu) || !std::isfinite(v.beta_s)) throw ConfigError(where + " has non-finite values");
        }
        if (!(outcome.sigma_y >= 0.0)) throw ConfigError("scenario.outcome.sigma_y must be >= 0");
        for (std::size_t i = 0; i < rescue_options.size(); ++i) {
            const auto& r = rescue_options[i];
            const std::string where = "scenario.rescue_options[" + std::to_string(i) + "]";
            if (!is_valid_id(r.id)) throw ConfigError(where + ".id is not a valid id");
            for (std::size_t j = 0; j < i; ++j) {
                if (rescue_options[j].id == r.id) throw ConfigError(where + ".id duplicates '" + r.id + "'");
            }
            if (!(r.lambda >= 0.0)) throw ConfigError(where + ".lambda must be >= 0");
        }
        if (!(kappa >= 0.0)) throw ConfigError("scenario.kappa must be >= 0");
        if (!std::isfinite(success_threshold)) throw ConfigError("scenario.success_threshold must be finite");
    }
};

/// One participant's draw. `rescue_outcomes` is option-major over decision_weeks.
struct ParticipantDraw {
    double severity = 0.0;
    std::vector<double> trajectory;  // variable-major, weeks 1..T
    double no_rescue_outcome = 0.0;
    std::vector<double> rescue_outcomes;
};

/// Deterministic in (population key, index). Draw order: S, then each
/// variable's weekly innovations, then the outcome noise.
inline ParticipantDraw draw_participant(const ScenarioParams& params, std::uint64_t population_key, std::size_t index) {
    auto stream = rng::substream(population_key, rng::Purpose::population, index);
    ParticipantDraw p;
    p.severity = stream.normal();
    const auto horizon = static_cast<std::size_t>(params.horizon);
    p.trajectory.resize(params.variables.size() * horizon);
    for (std::size_t v = 0; v < params.variables.size(); ++v) {
        const auto& vp = params.variables[v];
        const double level = vp.mu + vp.beta_s * p.severity;
        // Stationary start so the marginal variance is the same every week.
        double latent = level + stream.normal() * vp.sigma_eps / std::sqrt(1.0 - vp.phi * vp.phi);
        p.trajectory[v * horizon] = std::max(0.0, latent);
        for (std::size_t t = 1; t < horizon; ++t) {
            latent = level + vp.phi * (latent - level) + stream.normal() * vp.sigma_eps;
            p.trajectory[v * horizon + t] = std::max(0.0, latent);
        }
    }
    p.no_rescue_outcome = params.outcome.alpha0 + params.outcome.alpha_s * p.severity +
                          stream.normal() * params.outcome.sigma_y;
    const Week earliest = params.earliest_week();
    p.rescue_outcomes.resize(params.rescue_options.size() * params.decision_weeks.size());
    for (std::size_t r = 0; r < params.rescue_options.size(); ++r) {
        const auto& rp = params.rescue_options[r];
        const double effect = rp.theta0 + rp.theta_s * p.severity;
        for (std::size_t w = 0; w < params.decision_weeks.size(); ++w) {
            const double decay = std::exp(-rp.lambda * static_cast<double>(params.decision_weeks[w] - earliest));
            p.rescue_outcomes[r * params.decision_weeks.size() + w] = p.no_rescue_outcome + effect * decay;
        }
    }
    return p;
}

class PotentialOutcomeTable {
public:
    PotentialOutcomeTable(std::shared_ptr<const ScenarioParams> params, std::vector<double> severity,
                          std::vector<ObservedTrajectory> trajectories, std::vector<double> no_rescue,
                          std::vector<double> rescue)
        : params_(std::move(params)),
          severity_(std::move(severity)),
          trajectories_(std::move(trajectories)),
          no_rescue_(std::move(no_rescue)),
          rescue_(std::move(rescue)) {}

    const ScenarioParams& params() const noexcept { return *params_; }
    std::size_t size() const noexcept { return severity_.size(); }

    double severity(std::size_t i) const { return severity_.at(i); }
    const ObservedTrajectory& trajectory(std::size_t i) const { return trajectories_.at(i); }
    double no_rescue(std::size_t i) const { return no_rescue_.at(i); }

    /// Throws CoverageError for an unknown option or a week outside the table.
    double rescued(std::size_t i, std::string_view option, Week week) const {
        return rescued_at(i, params_->rescue_index(option), params_->week_index(week));
    }

    double rescued_at(std::size_t i, std::size_t option_index, std::size_t week_index) const {
        const std::size_t weeks = params_->decision_weeks.size();
        return rescue_.at((i * params_->rescue_options.size() + option_index) * weeks + week_index);
    }

    void check_covers(std::string_view option, Week week) const {
        (void)params_->rescue_index(option);
        (void)params_->week_index(week);
    }

private:
    std::shared_ptr<const ScenarioParams> params_;
    std::vector<double> severity_;
    std::vector<ObservedTrajectory> trajectories_;
    std::vector<double> no_rescue_;
    std::vector<double> rescue_;  // participant-major, then option, then week
};

/// Deterministic given params.seed; the thread count only affects speed.
inline PotentialOutcomeTable gen_population(const ScenarioParams& params, unsigned threads = 1) {
    params.validate();
    auto shared = std::make_shared<const ScenarioParams>(params);
    auto names = std::make_shared<std::vector<std::string>>();
    for (const auto& v : params.variables) names->push_back(v.id);
    std::shared_ptr<const std::vector<std::string>> variables = std::move(names);

    const std::size_t n = params.n;
    const std::size_t cells = params.rescue_options.size() * params.decision_weeks.size();
    std::vector<double> severity(n), no_rescue(n), rescue(n * cells);
    std::vector<ObservedTrajectory> trajectories(n);
    parallel_for(n, threads, [&](std::size_t i) {
        auto draw = draw_participant(params, params.seed, i);
        severity[i] = draw.severity;
        no_rescue[i] = draw.no_rescue_outcome;
        std::copy(draw.rescue_outcomes.begin(), draw.rescue_outcomes.end(), rescue.begin() + i * cells);
        trajectories[i] = ObservedTrajectory(variables, params.horizon, std::move(draw.trajectory));
    });
    return PotentialOutcomeTable(std::move(shared), std::move(severity), std::move(trajectories),
                                 std::move(no_rescue), std::move(rescue));
}

inline double apply_scale(double y, bool rescued, const ScenarioParams& params, OutcomeScale scale) {
    switch (scale) {
        case OutcomeScale::raw: return y;
        case OutcomeScale::binary: return y >= params.success_threshold ? 1.0 : 0.0;
        case OutcomeScale::cost_adjusted: return rescued ? y - params.kappa : y;
    }
    return y;
}

/// Outcome participant i would have under the ADI.
inline double regime_outcome(const PotentialOutcomeTable& table, std::size_t i, const TailoringRule& rule,
                             std::size_t option_index, std::size_t week_index, OutcomeScale scale) {
    const bool rescue = is_nonresponder(table.trajectory(i), rule);
    const double y = rescue ? table.rescued_at(i, option_index, week_index) : table.no_rescue(i);
    return apply_scale(y, rescue, table.params(), scale);
}

/// Exact population mean outcome if every participant followed `adi`:
/// nonresponders take the rescued outcome at the decision week, responders
/// keep the no-rescue outcome.
inline double regime_truth(const PotentialOutcomeTable& table, const AdaptiveIntervention& adi, OutcomeScale scale) {
    const auto& params = table.params();
    const std::size_t option = params.rescue_index(adi.rescue_option);
    const std::size_t week = params.week_index(adi.rule.decision_week());
    double sum = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) sum += regime_outcome(table, i, adi.rule, option, week, scale);
    return sum / static_cast<double>(table.size());
}

inline double regime_truth(const PotentialOutcomeTable& table, const AdaptiveIntervention& adi, bool cost_adjusted) {
    return regime_truth(table, adi, cost_adjusted ? OutcomeScale::cost_adjusted : OutcomeScale::raw);
}

/// Super-population truth computed on a fresh population of size n_reference
/// without materializing it. Partial sums use a fixed chunking so the result
/// is independent of the thread count.
inline std::vector<double> reference_regime_truth(const ScenarioParams& params,
                                                  const std::vector<AdaptiveIntervention>& regimes,
                                                  std::size_t n_reference, OutcomeScale scale, unsigned threads = 1) {
    params.validate();
    if (n_reference == 0) return {};
    auto names = std::make_shared<std::vector<std::string>>();
    for (const auto& v : params.variables) names->push_back(v.id);
    std::shared_ptr<const std::vector<std::string>> variables = std::move(names);

    std::vector<std::size_t> option_idx, week_idx;
    for (const auto& adi : regimes) {
        option_idx.push_back(params.rescue_index(adi.rescue_option));
        week_idx.push_back(params.week_index(adi.rule.decision_week()));
    }
    const std::uint64_t key = rng::derive(params.seed, rng::Purpose::reference, 0);
    constexpr std::size_t chunk = 4096;
    const std::size_t chunks = (n_reference + chunk - 1) / chunk;
    const std::size_t weeks = params.decision_weeks.size();
    std::vector<std::vector<double>> partial(chunks, std::vector<double>(regimes.size(), 0.0));
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t end = std::min(n_reference, (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) {
            auto draw = draw_participant(params, key, i);
            ObservedTrajectory traj(variables, params.horizon, std::move(draw.trajectory));
            for (std::size_t g = 0; g < regimes.size(); ++g) {
                const bool rescue = is_nonresponder(traj, regimes[g].rule);
                const double y = rescue ? draw.rescue_outcomes[option_idx[g] * weeks + week_idx[g]]
                                        : draw.no_rescue_outcome;
                partial[c][g] += apply_scale(y, rescue, params, scale);
            }
        }
    });
    std::vector<double> out(regimes.size(), 0.0);
    for (const auto& p : partial) {
        for (std::size_t g = 0; g < regimes.size(); ++g) out[g] += p[g];
    }
    for (double& v : out) v /= static_cast<double>(n_reference);
    return out;
}

}  // namespace tailorlab
