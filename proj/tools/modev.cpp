// modev command line: one subcommand per experiment kind plus `report`.

#include "modev/errors.hpp"
#include "modev/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Moderate-deviation experiments for parametric estimators"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    unsigned workers = 0;
    std::uint64_t seed = 0;
    bool quiet = false;

    std::vector<CLI::App*> runs;
    for (const auto& kind : modev::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", config, "config file (key = value lines, or a manifest.json)")->required();
        sub->add_option("--workers", workers, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", seed, "replace the config seed");
        sub->add_option("--out", out, "output directory (overrides output_dir)");
        sub->add_flag("--quiet,-q", quiet, "suppress progress logs");
        runs.push_back(sub);
    }
    std::string results_dir;
    auto* report = app.add_subcommand("report", "summarize every results directory under a path");
    report->add_option("results_dir", results_dir, "directory holding experiment outputs")->required();
    report->add_option("--out", out, "where summary.json goes (default: results_dir)");

    CLI11_PARSE(app, argc, argv);

    if (report->parsed()) {
        try {
            const std::string text =
                modev::emit_report(results_dir, out.empty() ? std::nullopt : std::optional<std::string>(out));
            std::cout << text;
            return 0;
        } catch (const modev::EmptyDirError& e) {
            std::cerr << "modev: " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "modev: report failed: " << e.what() << '\n';
            return 1;
        }
    }

    for (auto* sub : runs) {
        if (!sub->parsed()) continue;
        modev::RunOptions opt;
        opt.experiment = sub->get_name();
        opt.quiet = quiet;
        if (sub->count("--workers") > 0) opt.workers = workers;
        if (sub->count("--seed-override") > 0) opt.seed_override = seed;
        if (!out.empty()) opt.out_dir = out;
        return modev::run_config(config, opt);
    }
    return 1;
}
