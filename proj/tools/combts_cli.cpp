// combts: run, report and test paired component-attribution experiments.

#include "combts/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace combts;
    CLI::App app{"Paired Monte Carlo evaluation of modular forecasting pipelines"};
    app.require_subcommand(1);

    std::string config;
    std::size_t parallelism = default_parallelism();
    std::string out_dir;
    std::string log;
    std::string group_by = "eo";
    std::string table;
    std::string eo_a;
    std::string eo_b;
    double alpha = 0.05;
    SyntheticSpec syn;

    auto* run = app.add_subcommand("run", "Sample conditions, build the paired plan and execute it (resumable)");
    run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides config.output)");

    auto* rep = app.add_subcommand("report", "Summarize a run log as mu / sigma / min tables");
    rep->add_option("log", log, "Run log (runs.jsonl)")->required()->check(CLI::ExistingFile);
    rep->add_option("--group-by", group_by, "Grouping field: eo or any condition field");
    rep->add_option("--out", table, "Table file path (default: next to the log)");

    auto* sig = app.add_subcommand("significance", "One-tailed Mann-Whitney U test of A < B on paired runs");
    sig->add_option("log", log, "Run log (runs.jsonl)")->required()->check(CLI::ExistingFile);
    sig->add_option("a", eo_a, "Variant expected to have lower loss")->required();
    sig->add_option("b", eo_b, "Comparison variant")->required();
    sig->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));

    auto* ms = app.add_subcommand("multiseed", "Execute the plan once per config seed and compare columns");
    ms->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    ms->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);
    ms->add_option("--out", out_dir, "Output directory (overrides config.output)");

    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic sinusoid + trend + noise series as CSV");
    gen->add_option("--out", out_dir, "CSV file to write")->required();
    gen->add_option("--length", syn.length, "Time steps");
    gen->add_option("--variates", syn.variates, "Number of variates");
    gen->add_option("--period", syn.period, "Base period");
    gen->add_option("--harmonics", syn.harmonics, "Harmonics of the base period");
    gen->add_option("--trend", syn.trend, "Linear trend amplitude over the series");
    gen->add_option("--noise", syn.noise, "Gaussian noise standard deviation");
    gen->add_option("--seed", syn.seed, "Generator seed");

    auto* val = app.add_subcommand("validate-config", "Check a config and print its plan without training");
    val->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    auto out_opt = [&]() -> std::optional<std::filesystem::path> {
        if (out_dir.empty()) {
            return std::nullopt;
        }
        return std::filesystem::path(out_dir);
    };
    try {
        if (run->parsed()) {
            return cmd_run(config, parallelism, out_opt(), std::cout);
        }
        if (rep->parsed()) {
            std::optional<std::filesystem::path> tp;
            if (!table.empty()) {
                tp = table;
            }
            return cmd_report(log, group_by, tp, std::cout);
        }
        if (sig->parsed()) {
            return cmd_significance(log, eo_a, eo_b, alpha, std::cout);
        }
        if (ms->parsed()) {
            return cmd_multiseed(config, parallelism, out_opt(), std::cout);
        }
        if (gen->parsed()) {
            return cmd_gen_synthetic(syn, out_dir, std::cout);
        }
        if (val->parsed()) {
            return cmd_validate_config(config, std::cout);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
