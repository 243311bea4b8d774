// Command-line entry point: tailorlab simulate|analyze|power.

#include <iostream>

#include <CLI11.hpp>

#include "tailorlab/commands.hpp"

int main(int argc, char** argv) {
    using namespace tailorlab;
    CLI::App app{"Simulator and estimators for trials that construct tailoring variables"};
    app.require_subcommand(1);

    CommandOptions opt;
    std::uint64_t seed = 0;
    std::string out;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed (overrides config and TAILORLAB_SEED)");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--threads", opt.threads, "worker threads; results do not depend on it")
            ->check(CLI::Range(1u, 1024u));
    };

    auto* simulate = app.add_subcommand("simulate", "generate a population, run the design, analyze");
    common(simulate);
    auto* analyze = app.add_subcommand("analyze", "run the analysis block on an existing dataset");
    common(analyze);
    analyze->add_option("--data", opt.data, "dataset CSV")->required()->check(CLI::ExistingFile);
    auto* power = app.add_subcommand("power", "Monte Carlo power over a sample-size grid");
    common(power);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    for (auto* sub : {simulate, analyze, power}) {
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) opt.seed = seed;
        if (sub->count("--out")) opt.out = out;
    }

    if (simulate->parsed()) return cmd_simulate(opt);
    if (analyze->parsed()) return cmd_analyze(opt);
    return cmd_power(opt);
}
