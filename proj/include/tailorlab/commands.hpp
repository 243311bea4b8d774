#pragma once

// The three pipelines behind the command line: simulate, analyze, power.
// Each returns a process exit status (0 ok, 1 runtime or statistical
// failure, 2 configuration or schema failure) and reports errors on `err`.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tailorlab/analysis.hpp"
#include "tailorlab/config.hpp"
#include "tailorlab/dataset.hpp"
#include "tailorlab/datagen.hpp"
#include "tailorlab/designs.hpp"
#include "tailorlab/montecarlo.hpp"
#include "tailorlab/report.hpp"
#include "tailorlab/rng.hpp"

namespace tailorlab {

struct CommandOptions {
    std::string config;
    std::string data;  // analyze only
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    unsigned threads = 1;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Flag, then config, then TAILORLAB_SEED, then 0.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const RunConfig& cfg) {
    if (flag) return *flag;
    if (cfg.seed) return *cfg.seed;
    if (const char* env = std::getenv("TAILORLAB_SEED"); env && *env) {
        try {
            const auto v = parse_int(env, "TAILORLAB_SEED");
            if (v < 0) throw ConfigError("TAILORLAB_SEED must be a non-negative integer");
            return static_cast<std::uint64_t>(v);
        } catch (const SchemaError&) {
            throw ConfigError("TAILORLAB_SEED is not an integer: '" + std::string(env) + "'");
        }
    }
    return 0;
}

namespace detail {

struct EstimatorOutput {
    nlohmann::json entry;
    std::vector<Table> tables;
};

inline nlohmann::json feature_json(const Feature& f) { return to_string(f); }

inline bool has_randomized_step(const std::vector<TrialRecord>& records) {
    for (const auto& r : records) {
        for (const auto& s : r.path) {
            if (s.probability > 0.0 && s.probability < 1.0) return true;
        }
    }
    return false;
}

/// Without recorded propensities a causal request is only allowed when the
/// observed rescue decisions are not a deterministic function of the feature.
inline void positivity_gate(const std::vector<TrialRecord>& records, const std::string& estimator, const Feature& f,
                            Week k, const std::vector<double>& grid) {
    const auto table = positivity_check(records, f, k, grid);
    if (table.pass) return;
    const auto bad = *table.first_failure();
    std::string text = "positivity fails for " + to_string(f) + " at week " + std::to_string(k) + ": stratum " +
                       (bad.stratum == "below" ? "O<" : "O>=") + format_double(bad.cutoff) + " (n=" +
                       std::to_string(bad.n) + ") is " + std::string(to_string(bad.status));
    if (bad.propensity) text += " with P(A=1)=" + format_double(*bad.propensity);
    throw AnalysisError(estimator, text + "; the data carry no randomized assignment probabilities");
}

inline std::vector<Table> contrast_tables(const std::string& name, const ContrastTable& t) {
    Table groups{name + "_groups.csv",
                 {"label", "n", "mean", "se", "nonresponders", "nonresponder_share", "responder_mean", "nonresponder_mean"},
                 {}};
    for (const auto& g : t.groups) {
        groups.add({cell(g.label), cell(g.n), cell(g.mean), cell(g.se), cell(g.nonresponders), cell(g.nonresponder_share),
                    cell(g.responder_mean), cell(g.nonresponder_mean)});
    }
    Table pairs{name + ".csv", {"first", "second", "difference", "se", "df", "p", "p_adjusted"}, {}};
    for (const auto& c : t.contrasts) {
        pairs.add({cell(c.first), cell(c.second), cell(c.difference), cell(c.se), cell(c.df), cell(c.p), cell(c.p_adjusted)});
    }
    return {pairs, groups};
}

struct AnalysisContext {
    std::uint64_t seed = 0;
    const PotentialOutcomeTable* truth = nullptr;  // simulate only
};

inline EstimatorOutput run_estimator(const std::vector<TrialRecord>& records, const AnalysisConfig& analysis,
                                     const EstimatorSpec& est, std::size_t index, const AnalysisContext& ctx) {
    EstimatorOutput out;
    AnalysisConfig cfg = analysis;
    if (est.outcome) cfg.outcome = *est.outcome;
    const std::string& name = est.name;
    const std::uint64_t boot_seed = rng::derive(ctx.seed, rng::Purpose::bootstrap, index);
    auto& e = out.entry;
    e["name"] = name;
    e["type"] = std::string(estimator_type(est.spec));
    e["outcome"] = std::string(to_string(cfg.outcome));
    e["warnings"] = nlohmann::json::array();
    const bool gated = is_causal(est.spec) && !has_randomized_step(records);

    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ContrastsSpec>) {
                std::vector<std::string> factors;
                for (Factor f : s.factors) factors.emplace_back(to_string(f));
                const auto table = arm_contrasts(records, s.factors, cfg.outcome, s.correction);
                e["mode"] = "randomized";
                e["summary"] = {{"factors", factors},
                                {"correction", s.correction == Correction::none ? "none" : "bonferroni"}};
                for (const auto& w : table.warnings) e["warnings"].push_back(w);
                out.tables = contrast_tables(name, table);
            } else if constexpr (std::is_same_v<T, IpwSpec>) {
                if (gated) {
                    for (const auto& adi : s.regimes) {
                        for (std::size_t c = 0; c < adi.rule.size(); ++c) {
                            const auto& cond = adi.rule.condition(c);
                            positivity_gate(records, "ipw_regime_value", cond.feature, adi.rule.decision_week(), {cond.cutoff});
                        }
                    }
                }
                IpwOptions opt;
                opt.normalized = s.normalized;
                opt.bootstrap = cfg.bootstrap;
                opt.seed = boot_seed;
                opt.outcome = cfg.outcome;
                Table t{name + ".csv",
                        {"regime", "estimate", "se", "lower", "upper", "consistent", "weight_sum", "sample_truth"},
                        {}};
                for (const auto& adi : s.regimes) {
                    const auto r = ipw_regime_value(records, adi, opt);
                    std::optional<double> truth;
                    if (ctx.truth) {
                        try {
                            truth = regime_truth(*ctx.truth, adi, cfg.outcome);
                        } catch (const CoverageError&) {
                        }
                    }
                    t.add({cell(r.regime), cell(r.estimate), cell(r.se), cell(r.lower), cell(r.upper), cell(r.consistent),
                           cell(r.weight_sum), cell(truth)});
                }
                e["mode"] = "causal";
                e["summary"] = {{"normalized", s.normalized}, {"bootstrap", cfg.bootstrap}};
                out.tables.push_back(t);
            } else if constexpr (std::is_same_v<T, QuadraticSpec>) {
                const auto fit = fit_quadratic_time(records, cfg.outcome, cfg.bootstrap, boot_seed);
                e["mode"] = "randomized";
                Table arms{name + "_arms.csv", {"time", "n", "mean", "fitted"}, {}};
                for (std::size_t i = 0; i < fit.arms.size(); ++i) {
                    arms.add({cell(fit.arms[i].time), cell(fit.arms[i].n), cell(fit.arms[i].mean),
                              fit.fitted ? cell(fit.fitted_means[i]) : Cell()});
                }
                if (!fit.fitted) {
                    e["warnings"].push_back("fewer than three distinct decision times; quadratic model not fitted");
                    e["summary"] = {{"fitted", false}};
                    out.tables.push_back(arms);
                    return;
                }
                e["summary"] = {{"fitted", true},
                                {"beta0", fit.coefficients[0]},
                                {"beta1", fit.coefficients[1]},
                                {"beta2", fit.coefficients[2]},
                                {"argmax", fit.argmax},
                                {"concave", fit.concave},
                                {"clamped", fit.clamped},
                                {"argmax_lower", json_value(cell(fit.lower))},
                                {"argmax_upper", json_value(cell(fit.upper))}};
                if (fit.clamped) e["warnings"].push_back("argmax clamped to the best observed arm");
                Table curve{name + ".csv", {"x", "y", "lower", "upper"}, {}};
                for (const auto& p : quadratic_curve(records, fit, cfg.outcome, s.points, cfg.bootstrap, boot_seed)) {
                    curve.add({cell(p.x), cell(p.y), cell(p.lower), cell(p.upper)});
                }
                out.tables = {curve, arms};
            } else if constexpr (std::is_same_v<T, ElbowSpec>) {
                ElbowOptions opt;
                opt.delta = cfg.delta;
                opt.success_threshold = s.success_threshold;
                opt.bootstrap = cfg.bootstrap;
                opt.seed = boot_seed;
                const auto curve = elbow_scan(records, s.feature, s.times, opt);
                e["mode"] = "correlational";
                e["caveat"] = curve.caveat;
                e["summary"] = {{"feature", feature_json(s.feature)}, {"elbow", curve.elbow}, {"delta", curve.delta}};
                for (const auto& w : curve.warnings) e["warnings"].push_back(w);
                Table t{name + ".csv", {"x", "y", "lower", "upper"}, {}};
                for (const auto& p : curve.points) t.add({cell(p.time), cell(p.auc), cell(p.lower), cell(p.upper)});
                out.tables.push_back(t);
            } else if constexpr (std::is_same_v<T, ConditionalMeanSpec>) {
                Table t{name + ".csv", {"cutoff", "n", "mean"}, {}};
                std::string caveat;
                for (double c : s.cutoffs) {
                    const auto m = conditional_mean_below_cutoff(records, s.feature, c, s.week, cfg.outcome);
                    caveat = m.caveat;
                    if (!m.value) e["warnings"].push_back("no participant meets the condition at cutoff " + format_double(c));
                    t.add({cell(c), cell(m.n), cell(m.value)});
                }
                e["mode"] = "correlational";
                e["caveat"] = caveat;
                e["summary"] = {{"feature", feature_json(s.feature)}, {"week", s.week}};
                out.tables.push_back(t);
            } else if constexpr (std::is_same_v<T, CutoffCostSpec>) {
                const auto table = cutoff_scan_cost(records, s.feature, s.week, s.grid, cfg.w_fp, cfg.w_fn);
                e["mode"] = "correlational";
                e["caveat"] = table.caveat;
                e["summary"] = {{"feature", feature_json(s.feature)},
                                {"week", s.week},
                                {"best_cutoff", table.best_cutoff},
                                {"w_fp", table.w_fp},
                                {"w_fn", table.w_fn}};
                for (const auto& w : table.warnings) e["warnings"].push_back(w);
                Table t{name + ".csv",
                        {"cutoff", "true_positive", "false_positive", "true_negative", "false_negative", "nonresponders",
                         "sensitivity", "specificity", "cost"},
                        {}};
                for (const auto& r : table.rows) {
                    t.add({cell(r.cutoff), cell(r.true_positive), cell(r.false_positive), cell(r.true_negative),
                           cell(r.false_negative), cell(r.nonresponders), cell(r.sensitivity), cell(r.specificity),
                           cell(r.cost)});
                }
                out.tables.push_back(t);
            } else if constexpr (std::is_same_v<T, ModerationSpec>) {
                if (gated) {
                    for (const auto& f : s.candidates) {
                        std::vector<double> values;
                        for (const auto& r : records) values.push_back(aggregate_feature(r.trajectory, f, s.week));
                        positivity_gate(records, "moderation_scan", f, s.week, {stats::quantile(values, 0.5)});
                    }
                }
                const auto reports = moderation_scan(records, s.candidates, s.week, cfg.outcome);
                e["mode"] = "causal";
                e["summary"] = {{"week", s.week}};
                Table t{name + ".csv",
                        {"rank", "variable", "main_effect", "interaction", "interaction_se", "interaction_p", "score",
                         "feature_min", "feature_max", "effect_at_min", "effect_at_max", "qualitative"},
                        {}};
                for (const auto& r : reports) {
                    t.add({cell(r.rank), cell(r.variable), cell(r.main_effect), cell(r.interaction), cell(r.interaction_se),
                           cell(r.interaction_p), cell(r.score), cell(r.feature_min), cell(r.feature_max),
                           cell(r.effect_at_min), cell(r.effect_at_max), cell(r.qualitative)});
                }
                out.tables.push_back(t);
            } else if constexpr (std::is_same_v<T, PositivitySpec>) {
                const auto table = positivity_check(records, s.feature, s.week, s.grid, s.m);
                e["mode"] = "diagnostic";
                e["summary"] = {{"feature", feature_json(s.feature)}, {"week", s.week}, {"pass", table.pass}};
                Table t{name + ".csv", {"cutoff", "stratum", "n", "treated", "propensity", "status"}, {}};
                for (const auto& r : table.rows) {
                    t.add({cell(r.cutoff), cell(r.stratum), cell(r.n), cell(r.treated), cell(r.propensity),
                           cell(to_string(r.status))});
                }
                out.tables.push_back(t);
            }
        },
        est.spec);

    nlohmann::json tables = nlohmann::json::object();
    for (const auto& t : out.tables) tables[t.file] = t.to_json();
    e["tables"] = tables;
    return out;
}

/// Runs every requested estimator and writes their tables; returns the JSON
/// entries in request order.
inline nlohmann::json run_analysis(std::vector<TrialRecord> records, const AnalysisConfig& cfg,
                                   const std::filesystem::path& dir, const AnalysisContext& ctx) {
    if (cfg.kappa) records = cost_adjust(std::move(records), *cfg.kappa);
    auto entries = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.estimators.size(); ++i) {
        auto result = run_estimator(records, cfg, cfg.estimators[i], i, ctx);
        for (const auto& t : result.tables) t.write_csv(dir);
        entries.push_back(std::move(result.entry));
    }
    return entries;
}

inline std::filesystem::path prepare_out(const CommandOptions& opt, const RunConfig& cfg) {
    std::filesystem::path dir = opt.out ? *opt.out : cfg.out ? *cfg.out : "tailorlab_out";
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const CoverageError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const AnalysisError& e) {
        err << "analysis error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

inline nlohmann::json outcome_json(const AnalysisConfig& a) { return std::string(to_string(a.outcome)); }

}  // namespace detail

inline int cmd_simulate(const CommandOptions& opt, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const auto cfg = load_config(opt.config);
        if (!cfg.scenario) throw ConfigError("scenario: missing required block");
        if (!cfg.design) throw ConfigError("design: missing required block");
        const std::uint64_t seed = resolve_seed(opt.seed, cfg);
        const auto dir = detail::prepare_out(opt, cfg);

        ScenarioParams scenario = *cfg.scenario;
        scenario.seed = rng::derive(seed, rng::Purpose::population, 0);
        const auto table = gen_population(scenario, opt.threads);
        const auto records = run_design(table, *cfg.design, rng::derive(seed, rng::Purpose::design, 0), opt.threads);
        write_dataset((dir / "dataset.csv").string(), records);

        nlohmann::json report;
        report["command"] = "simulate";
        report["seed"] = seed;
        report["n"] = records.size();
        report["design"] = std::string(design_name(*cfg.design));
        report["dataset"] = "dataset.csv";
        if (cfg.analysis) {
            report["outcome"] = detail::outcome_json(*cfg.analysis);
            report["estimators"] = detail::run_analysis(records, *cfg.analysis, dir, {seed, &table});
        } else {
            report["estimators"] = nlohmann::json::array();
        }
        write_json(dir / "report.json", report);
        log << "simulate: wrote " << records.size() << " records and report to " << dir.string() << '\n';
        for (const auto& e : report["estimators"]) {
            if (e.contains("caveat")) log << "note (" << e["name"].get<std::string>() << "): " << e["caveat"].get<std::string>() << '\n';
        }
    });
}

inline int cmd_analyze(const CommandOptions& opt, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const auto cfg = load_config(opt.config);
        if (!cfg.analysis) throw ConfigError("analysis: missing required block");
        if (opt.data.empty()) throw ConfigError("--data: a dataset path is required");
        const std::uint64_t seed = resolve_seed(opt.seed, cfg);
        const auto records = read_dataset(opt.data);
        const auto dir = detail::prepare_out(opt, cfg);

        nlohmann::json report;
        report["command"] = "analyze";
        report["seed"] = seed;
        report["n"] = records.size();
        report["dataset"] = std::filesystem::path(opt.data).filename().string();
        report["outcome"] = detail::outcome_json(*cfg.analysis);
        report["estimators"] = detail::run_analysis(records, *cfg.analysis, dir, {seed, nullptr});
        write_json(dir / "report.json", report);
        log << "analyze: " << records.size() << " records, report in " << dir.string() << '\n';
        for (const auto& e : report["estimators"]) {
            if (e.contains("caveat")) log << "note (" << e["name"].get<std::string>() << "): " << e["caveat"].get<std::string>() << '\n';
        }
    });
}

namespace detail {

inline nlohmann::json mc_report_json(const McReport& r) {
    nlohmann::json j;
    j["design"] = r.design;
    j["N"] = r.n;
    j["replicates"] = r.replicates;
    j["alpha"] = r.alpha;
    j["outcome"] = std::string(to_string(r.outcome));
    j["contrasts"] = nlohmann::json::array();
    for (const auto& c : r.contrasts) {
        j["contrasts"].push_back({{"first", c.first},
                                  {"second", c.second},
                                  {"rejection_rate", c.rejection_rate},
                                  {"mc_se", c.rejection_mc_se},
                                  {"mean_estimate", json_value(cell(c.mean_estimate))},
                                  {"estimate_mc_se", json_value(cell(c.estimate_mc_se))},
                                  {"truth", json_value(cell(c.truth))},
                                  {"bias", json_value(cell(c.bias))},
                                  {"reference_truth", json_value(cell(c.reference_truth))},
                                  {"replicates_used", c.replicates_used}});
    }
    j["regimes"] = nlohmann::json::array();
    for (const auto& g : r.regimes) {
        j["regimes"].push_back({{"regime", g.regime},
                                {"mean_estimate", json_value(cell(g.mean_estimate))},
                                {"estimate_mc_se", json_value(cell(g.estimate_mc_se))},
                                {"truth", json_value(cell(g.truth))},
                                {"bias", json_value(cell(g.bias))},
                                {"reference_truth", json_value(cell(g.reference_truth))},
                                {"replicates_used", g.replicates_used},
                                {"unidentified", g.unidentified}});
    }
    if (r.argmax) {
        j["argmax"] = {{"mean", json_value(cell(r.argmax->mean))},
                       {"truth", json_value(cell(r.argmax->truth))},
                       {"bias", json_value(cell(r.argmax->bias))},
                       {"mse", json_value(cell(r.argmax->mse))},
                       {"clamped", r.argmax->clamped},
                       {"replicates_used", r.argmax->replicates_used}};
    }
    j["arms"] = nlohmann::json::array();
    for (const auto& a : r.arms) {
        j["arms"].push_back({{"label", a.label},
                             {"mean_n", a.mean_n},
                             {"mean_nonresponders", a.mean_nonresponders},
                             {"sd_nonresponders", a.sd_nonresponders},
                             {"min_nonresponders", a.min_nonresponders},
                             {"mean_nonresponder_share", a.mean_nonresponder_share},
                             {"mean_option_counts", a.mean_option_counts},
                             {"unpowered", a.unpowered}});
    }
    return j;
}

}  // namespace detail

inline int cmd_power(const CommandOptions& opt, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const auto cfg = load_config(opt.config);
        if (!cfg.scenario) throw ConfigError("scenario: missing required block");
        if (!cfg.design) throw ConfigError("design: missing required block");
        if (!cfg.mc) throw ConfigError("mc: missing required block");
        const std::uint64_t seed = resolve_seed(opt.seed, cfg);
        const auto dir = detail::prepare_out(opt, cfg);

        McPlan plan;
        plan.scenario = *cfg.scenario;
        plan.design = *cfg.design;
        plan.analysis.outcome = cfg.analysis ? cfg.analysis->outcome : OutcomeScale::raw;
        plan.analysis.regimes = cfg.mc->regimes;
        plan.analysis.ipw_normalized = cfg.mc->ipw_normalized;
        plan.analysis.correction = cfg.mc->correction;
        plan.replicates = cfg.mc->replicates;
        plan.alpha = cfg.mc->alpha;
        plan.seed = seed;
        plan.reference_n = cfg.mc->reference_n;
        const auto grid = cfg.mc->n_grid.empty() ? std::vector<std::size_t>{plan.scenario.n} : cfg.mc->n_grid;
        try {
            plan.validate();
        } catch (const CoverageError& e) {
            throw ConfigError(std::string("design: ") + e.what());
        }

        const auto curve = power_search(plan, cfg.mc->target_power, grid, cfg.mc->contrast, opt.threads);

        Table power{"power.csv", {"N", "power", "mc_se"}, {}};
        for (const auto& p : curve.points) power.add({cell(p.n), cell(p.power), cell(p.mc_se)});
        power.write_csv(dir);

        Table contrasts{"mc_contrasts.csv",
                        {"N", "first", "second", "rejection_rate", "mc_se", "mean_estimate", "estimate_mc_se", "truth",
                         "bias", "reference_truth"},
                        {}};
        Table regimes{"mc_regimes.csv",
                      {"N", "regime", "mean_estimate", "estimate_mc_se", "truth", "bias", "reference_truth", "unidentified"},
                      {}};
        Table arms{"mc_arms.csv",
                   {"N", "label", "mean_n", "mean_nonresponders", "sd_nonresponders", "min_nonresponders",
                    "mean_nonresponder_share", "unpowered"},
                   {}};
        for (const auto& r : curve.reports) {
            for (const auto& c : r.contrasts) {
                contrasts.add({cell(r.n), cell(c.first), cell(c.second), cell(c.rejection_rate), cell(c.rejection_mc_se),
                               cell(c.mean_estimate), cell(c.estimate_mc_se), cell(c.truth), cell(c.bias),
                               cell(c.reference_truth)});
            }
            for (const auto& g : r.regimes) {
                regimes.add({cell(r.n), cell(g.regime), cell(g.mean_estimate), cell(g.estimate_mc_se), cell(g.truth),
                             cell(g.bias), cell(g.reference_truth), cell(g.unidentified)});
            }
            for (const auto& a : r.arms) {
                arms.add({cell(r.n), cell(a.label), cell(a.mean_n), cell(a.mean_nonresponders), cell(a.sd_nonresponders),
                          cell(a.min_nonresponders), cell(a.mean_nonresponder_share), cell(a.unpowered)});
            }
        }
        contrasts.write_csv(dir);
        regimes.write_csv(dir);
        arms.write_csv(dir);

        nlohmann::json report;
        report["command"] = "power";
        report["seed"] = seed;
        report["contrast"] = curve.contrast;
        report["target_power"] = curve.target;
        report["found"] = curve.required_n.has_value();
        report["required_n"] = curve.required_n ? nlohmann::json(*curve.required_n) : nlohmann::json(nullptr);
        report["curve"] = power.to_json();
        report["reports"] = nlohmann::json::array();
        for (const auto& r : curve.reports) report["reports"].push_back(detail::mc_report_json(r));
        write_json(dir / "mc_report.json", report);

        log << "power: " << curve.contrast << ": ";
        if (curve.required_n) {
            log << "target " << format_double(curve.target) << " reached at N=" << *curve.required_n << '\n';
        } else {
            log << "target " << format_double(curve.target) << " not reached on the grid\n";
        }
    });
}

}  // namespace tailorlab
