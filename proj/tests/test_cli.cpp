#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "tailorlab/commands.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tailorlab;

namespace {

const std::string kDemo = std::string(TAILORLAB_SOURCE_DIR) + "/demo/";

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("tailorlab_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path path(const std::string& name) const { return dir_ / name; }

    std::string write_config(const std::string& name, const json& doc) const {
        std::ofstream(path(name)) << doc.dump(2);
        return path(name).string();
    }

    int run(int (*cmd)(const CommandOptions&, std::ostream&, std::ostream&), CommandOptions opt) {
        std::ostringstream log;
        err_.str("");
        return cmd(opt, log, err_);
    }

    std::string error_text() const { return err_.str(); }

    fs::path dir_;
    std::ostringstream err_;
};

json demo(const std::string& name) {
    std::ifstream in(kDemo + name);
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string("\"") + TAILORLAB_CLI + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(Cli, SimulateCutoffTrialWritesDatasetAndContrasts) {
    CommandOptions opt{kDemo + "cutoff_trial.json", "", std::nullopt, path("out").string(), 1};
    ASSERT_EQ(run(cmd_simulate, opt), 0) << error_text();
    EXPECT_TRUE(fs::exists(path("out/dataset.csv")));
    EXPECT_TRUE(fs::exists(path("out/report.json")));
    const auto report = json::parse(slurp(path("out/report.json")));
    EXPECT_EQ(report["command"], "simulate");
    bool has_contrasts = false;
    for (const auto& e : report["estimators"]) {
        if (e["type"] == "contrasts") {
            has_contrasts = true;
            EXPECT_EQ(e["mode"], "randomized");
            EXPECT_TRUE(fs::exists(path("out") / (e["name"].get<std::string>() + ".csv")));
        }
    }
    EXPECT_TRUE(has_contrasts);
    const auto rows = read_csv(path("out/dataset.csv"));
    EXPECT_EQ(rows.size(), report["n"].get<std::size_t>() + 1);
}

TEST_F(Cli, DatasetRoundTripIsLossless) {
    auto p = testing_helpers::scenario(300, 5);
    const auto table = gen_population(p);
    const DesignSpec spec{HybridFactorialSmart{testing_helpers::mean_below("app"), {1.0, 2.0}, {2, 4}, {"coaching", "incentives"}},
                          std::nullopt};
    for (const auto& design : {spec, DesignSpec{UnrestrictedSmart{{2, 4}, {0.5, 0.5}, "coaching"}, std::nullopt},
                               DesignSpec{InitialOnly{}, std::nullopt}}) {
        const auto recs = run_design(table, design, 3);
        std::stringstream buffer;
        write_dataset(buffer, recs);
        const std::string first = buffer.str();
        const auto back = read_dataset(buffer);
        ASSERT_EQ(back.size(), recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            EXPECT_EQ(back[i].arms, recs[i].arms);
            EXPECT_EQ(back[i].rule, recs[i].rule);
            EXPECT_EQ(back[i].trajectory.raw(), recs[i].trajectory.raw());
            EXPECT_EQ(back[i].responder, recs[i].responder);
            EXPECT_EQ(back[i].rescue_week, recs[i].rescue_week);
            EXPECT_EQ(back[i].rescue_option, recs[i].rescue_option);
            EXPECT_EQ(back[i].y, recs[i].y);
            EXPECT_EQ(back[i].y_adj, recs[i].y_adj);
            EXPECT_EQ(back[i].path, recs[i].path);
        }
        std::stringstream again;
        write_dataset(again, back);
        EXPECT_EQ(again.str(), first);
    }
}

TEST_F(Cli, DatasetSchemaErrors) {
    std::stringstream bad_header("participant_id,arm_cutoff\n0,NA\n");
    EXPECT_THROW(read_dataset(bad_header), SchemaError);

    auto recs = run_design(gen_population(testing_helpers::scenario(5, 1)), {InitialOnly{}, std::nullopt}, 1);
    std::stringstream buffer;
    write_dataset(buffer, recs);
    std::string text = buffer.str();
    std::stringstream swapped(text.replace(text.find("R,"), 2, "Q,"));
    EXPECT_THROW(read_dataset(swapped), SchemaError);

    std::ofstream(path("short.csv")) << buffer.str().substr(0, buffer.str().find('\n') + 1) << "0,NA\n";
    CommandOptions opt{kDemo + "analyze_ipw.json", path("short.csv").string(), std::nullopt, path("out").string(), 1};
    EXPECT_EQ(run(cmd_analyze, opt), 2);
    EXPECT_NE(error_text().find("schema"), std::string::npos);
}

TEST_F(Cli, SimulateThenAnalyzeReproducesEstimates) {
    CommandOptions sim{kDemo + "cutoff_trial.json", "", 42, path("sim").string(), 1};
    ASSERT_EQ(run(cmd_simulate, sim), 0) << error_text();
    CommandOptions ana{kDemo + "cutoff_trial.json", path("sim/dataset.csv").string(), 42, path("ana").string(), 1};
    ASSERT_EQ(run(cmd_analyze, ana), 0) << error_text();

    const auto a = json::parse(slurp(path("sim/report.json")))["estimators"];
    const auto b = json::parse(slurp(path("ana/report.json")))["estimators"];
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i]["name"], b[i]["name"]);
        for (const auto& [file, rows] : a[i]["tables"].items()) {
            const auto& other = b[i]["tables"][file];
            ASSERT_EQ(rows.size(), other.size()) << file;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                // analyze has no population, so it cannot know the sample truth
                for (const auto& [col, value] : other[r].items()) {
                    if (col == "sample_truth") {
                        EXPECT_TRUE(value.is_null());
                        continue;
                    }
                    EXPECT_EQ(rows[r][col], value) << file << " " << col;
                }
            }
        }
    }
}

TEST_F(Cli, CsvTablesMatchJsonSummary) {
    for (const char* config : {"cutoff_trial.json", "decision_time_sequential.json", "initial_only.json",
                               "singly_randomized_rescue.json"}) {
        const auto out = path(std::string("out_") + config);
        CommandOptions opt{kDemo + config, "", std::nullopt, out.string(), 1};
        ASSERT_EQ(run(cmd_simulate, opt), 0) << config << ": " << error_text();
        const auto report = json::parse(slurp(out / "report.json"));
        for (const auto& e : report["estimators"]) {
            for (const auto& [file, rows] : e["tables"].items()) {
                const auto csv = read_csv(out / file);
                ASSERT_EQ(csv.size(), rows.size() + 1) << file;
                const auto& header = csv[0];
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    ASSERT_EQ(csv[r + 1].size(), header.size()) << file;
                    for (std::size_t c = 0; c < header.size(); ++c) {
                        const auto& text = csv[r + 1][c];
                        const auto& value = rows[r].at(header[c]);
                        if (value.is_null()) {
                            EXPECT_EQ(text, "NA") << file << " " << header[c];
                        } else if (value.is_boolean()) {
                            EXPECT_EQ(text, value.get<bool>() ? "true" : "false");
                        } else if (value.is_number()) {
                            EXPECT_EQ(parse_double(text, header[c]), value.get<double>()) << file << " " << header[c];
                        } else {
                            EXPECT_EQ(text, value.get<std::string>());
                        }
                    }
                }
            }
        }
    }
}

TEST_F(Cli, CorrelationalEstimatorsAreLabelled) {
    CommandOptions opt{kDemo + "initial_only.json", "", std::nullopt, path("out").string(), 1};
    ASSERT_EQ(run(cmd_simulate, opt), 0) << error_text();
    const auto report = json::parse(slurp(path("out/report.json")));
    std::size_t correlational = 0;
    for (const auto& e : report["estimators"]) {
        if (e["type"] == "elbow") {
            EXPECT_TRUE(fs::exists(path("out") / (e["name"].get<std::string>() + ".csv")));
        }
        if (e.value("mode", "") == "correlational") {
            ++correlational;
            EXPECT_FALSE(e["caveat"].get<std::string>().empty());
        }
    }
    EXPECT_EQ(correlational, report["estimators"].size());
}

TEST_F(Cli, ModerationReportIsRanked) {
    CommandOptions opt{kDemo + "singly_randomized_rescue.json", "", std::nullopt, path("out").string(), 1};
    ASSERT_EQ(run(cmd_simulate, opt), 0) << error_text();
    const auto report = json::parse(slurp(path("out/report.json")));
    bool seen = false;
    for (const auto& e : report["estimators"]) {
        if (e["type"] != "moderation") continue;
        seen = true;
        const auto& rows = e["tables"].begin().value();
        ASSERT_GE(rows.size(), 2u);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            EXPECT_EQ(rows[i]["rank"].get<std::size_t>(), i + 1);
            if (i > 0) {
                EXPECT_GE(rows[i - 1]["score"].get<double>(), rows[i]["score"].get<double>());
            }
        }
    }
    EXPECT_TRUE(seen);
}

TEST_F(Cli, DeterministicRuleRefusesCausalEstimation) {
    CommandOptions opt{kDemo + "deterministic_rule.json", "", std::nullopt, path("out").string(), 1};
    EXPECT_EQ(run(cmd_simulate, opt), 1);
    EXPECT_NE(error_text().find("positivity"), std::string::npos);
    EXPECT_NE(error_text().find("stratum"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
    auto undefined = demo("cutoff_trial.json");
    undefined["design"]["rescue_option"] = "therapy";
    EXPECT_EQ(run(cmd_simulate, {write_config("a.json", undefined), "", std::nullopt, path("out").string(), 1}), 2);
    EXPECT_NE(error_text().find("therapy"), std::string::npos);
    EXPECT_NE(error_text().find("design.rescue_option"), std::string::npos) << error_text();

    auto unknown = demo("cutoff_trial.json");
    unknown["design"]["cutofs"] = json::array({1.0});
    EXPECT_EQ(run(cmd_simulate, {write_config("b.json", unknown), "", std::nullopt, path("out").string(), 1}), 2);
    EXPECT_NE(error_text().find("cutofs"), std::string::npos) << error_text();

    auto bad_type = demo("cutoff_trial.json");
    bad_type["scenario"]["variables"][1]["phi"] = "high";
    EXPECT_EQ(run(cmd_simulate, {write_config("c.json", bad_type), "", std::nullopt, path("out").string(), 1}), 2);
    EXPECT_NE(error_text().find("scenario.variables[1].phi"), std::string::npos) << error_text();

    std::ofstream(path("broken.json")) << "{\n  \"seed\": 1,\n  \"scenario\": {\n}";
    EXPECT_EQ(run(cmd_simulate, {path("broken.json").string(), "", std::nullopt, path("out").string(), 1}), 2);
    EXPECT_NE(error_text().find("line"), std::string::npos) << error_text();
}

TEST_F(Cli, PowerNeedsMcBlockAndWritesCurve) {
    EXPECT_EQ(run(cmd_power, {kDemo + "cutoff_trial.json", "", std::nullopt, path("none").string(), 1}), 2);
    EXPECT_NE(error_text().find("mc"), std::string::npos);

    auto cfg = demo("power_cutoff.json");
    cfg["mc"]["replicates"] = 40;
    cfg["mc"]["n_grid"] = json::array({100, 400});
    ASSERT_EQ(run(cmd_power, {write_config("p.json", cfg), "", std::nullopt, path("out").string(), 1}), 0) << error_text();
    const auto rows = read_csv(path("out/power.csv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"N", "power", "mc_se"}));
    EXPECT_EQ(rows[1][0], "100");
    EXPECT_EQ(rows[2][0], "400");
    const auto report = json::parse(slurp(path("out/mc_report.json")));
    EXPECT_EQ(report["curve"].size(), 2u);
    EXPECT_TRUE(report.contains("found"));
}

TEST_F(Cli, SeedOverrideIsDeterministic) {
    auto run_seeded = [&](const std::string& out, std::optional<std::uint64_t> seed) {
        CommandOptions opt{kDemo + "hybrid_smart.json", "", seed, path(out).string(), 1};
        EXPECT_EQ(run(cmd_simulate, opt), 0) << error_text();
        return slurp(path(out) / "dataset.csv") + slurp(path(out) / "report.json");
    };
    const auto a = run_seeded("a", 123), b = run_seeded("b", 123), c = run_seeded("c", std::nullopt);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST_F(Cli, SeedPrecedence) {
    RunConfig cfg;
    ::setenv("TAILORLAB_SEED", "77", 1);
    EXPECT_EQ(resolve_seed(std::nullopt, cfg), 77u);
    cfg.seed = 5;
    EXPECT_EQ(resolve_seed(std::nullopt, cfg), 5u);
    EXPECT_EQ(resolve_seed(9, cfg), 9u);
    cfg.seed.reset();
    ::setenv("TAILORLAB_SEED", "abc", 1);
    EXPECT_THROW(resolve_seed(std::nullopt, cfg), ConfigError);
    ::unsetenv("TAILORLAB_SEED");
    EXPECT_EQ(resolve_seed(std::nullopt, cfg), 0u);
}

TEST_F(Cli, BinaryArgumentHandling) {
    EXPECT_EQ(run_binary(""), 2);
    EXPECT_EQ(run_binary("simulate"), 2);
    EXPECT_EQ(run_binary("simulate --config /nonexistent.json"), 2);
    EXPECT_EQ(run_binary("simulate --config \"" + kDemo + "cutoff_trial.json\" --threads 0"), 2);
    EXPECT_EQ(run_binary("analyze --config \"" + kDemo + "analyze_ipw.json\" --out \"" + path("x").string() + "\""), 2);
    EXPECT_EQ(run_binary("simulate --config \"" + kDemo + "cutoff_trial.json\" --threads 2 --out \"" +
                         path("ok").string() + "\""),
              0);
    EXPECT_EQ(run_binary("simulate --config \"" + kDemo + "deterministic_rule.json\" --out \"" + path("det").string() + "\""),
              1);
}
