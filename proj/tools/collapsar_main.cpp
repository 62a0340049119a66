// collapsar — scenario-driven simulation runner.
//
// Subcommands map one experiment each onto a scenario file:
//   factorize-kernel   spectral factorization + reconstruction report
//   sample-noise       noise ensembles + covariance statistics
//   run-markov         white-noise trajectories vs the Lindblad oracle
//   run-nonmarkov      colored-noise physical trajectories
//   run-bohm           bath trajectories conditioned on hidden variables
//   run-oracle         influence-map density propagation
//   compare            full equivalence run (conditional vs collapse states)

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "collapsar/scenario.hpp"

namespace {

struct Cli {
    std::string scenario_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int threads = 0;
    bool check = false;
};

int run_subcommand(const Cli& cli, collapsar::RunMode mode) {
    try {
        const auto sc = collapsar::parse_scenario_file(cli.scenario_path);
        collapsar::RunOptions opts;
        opts.mode = mode;
        if (cli.seed_set) opts.seed = cli.seed;
        if (!cli.out_dir.empty()) opts.out_dir = cli.out_dir;
        opts.threads = cli.threads;
        opts.check = cli.check;
        const auto result = collapsar::run(sc, opts);
        for (const auto& c : result.checks)
            std::printf("[%s] %s: value=%.6g threshold=%.6g\n", c.pass ? "ok" : "FAIL",
                        c.name.c_str(), c.value, c.threshold);
        std::printf("manifest: %s\n", result.manifest_path.c_str());
        return result.exit_code;
    } catch (const collapsar::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const collapsar::TooLarge& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const collapsar::Error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collapsar: colored-noise collapse dynamics and their oscillator-bath "
                 "pilot-wave reformulation"};
    app.require_subcommand(1);

    Cli cli;
    const std::vector<std::pair<std::string, collapsar::RunMode>> modes = {
        {"factorize-kernel", collapsar::RunMode::Factorize},
        {"sample-noise", collapsar::RunMode::NoiseStats},
        {"run-markov", collapsar::RunMode::Markov},
        {"run-nonmarkov", collapsar::RunMode::NonMarkov},
        {"run-bohm", collapsar::RunMode::Bohm},
        {"run-oracle", collapsar::RunMode::Oracle},
        {"compare", collapsar::RunMode::Compare},
    };

    collapsar::RunMode selected = collapsar::RunMode::Oracle;
    for (const auto& [name, mode] : modes) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--scenario", cli.scenario_path, "scenario JSON file")
            ->required()
            ->check(CLI::ExistingFile);
        auto* seed_opt = sub->add_option("--seed", cli.seed, "override the scenario seed");
        sub->add_option("--out", cli.out_dir, "override the output directory");
        sub->add_option("--threads", cli.threads,
                        "worker threads (default: COLLAPSAR_THREADS or hardware)");
        sub->add_flag("--check", cli.check, "exit nonzero if any check fails");
        sub->callback([&cli, &selected, mode, seed_opt] {
            selected = mode;
            cli.seed_set = seed_opt->count() > 0;
        });
    }

    CLI11_PARSE(app, argc, argv);
    return run_subcommand(cli, selected);
}
