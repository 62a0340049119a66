// scenario.hpp — configuration-driven runner: parse scenario files, execute
// simulations and cross-model comparisons, emit data files plus a manifest
// with per-check pass/fail entries.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "collapsar/bath.hpp"
#include "collapsar/kernels.hpp"
#include "collapsar/markov.hpp"

namespace collapsar {

enum class RunMode { Markov, NonMarkov, Bohm, Compare, Oracle, NoiseStats, Factorize };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

struct Scenario {
    CollapseSystem system;
    StationaryKernel kernel;
    PureState initial_state;

    double dt = 1e-3;
    double total_time = 1.0;
    int modes = 32;
    double omega_max = 16.0;
    int n_max = 10;

    RunMode mode = RunMode::Oracle;
    int n_traj = 100;
    std::uint64_t seed = 12345;
    std::string out_dir = "out";

    std::string echo_json;  // fully resolved configuration, defaults included

    TimeGrid grid() const { return make_grid(total_time, dt); }
    ModeDecomposition decomposition() const;
};

// Parses and validates a scenario. Unknown keys are rejected; every semantic
// violation is reported (all at once) in the exception message.
Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario_file(const std::filesystem::path& path);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    int threads = 0;       // 0: COLLAPSAR_THREADS or hardware
    bool check = false;    // nonzero exit on failed checks
    RunMode mode = RunMode::Oracle;
    bool mode_from_scenario = false;
};

struct CheckResult {
    std::string name;   // machine-readable tag of what was verified
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct RunResult {
    int exit_code = 0;  // 0 ok, 2 config error, 3 numerical failure, 4 check failure
    std::vector<CheckResult> checks;
    std::vector<std::string> outputs;
    std::string manifest_path;
};

RunResult run(const Scenario& sc, const RunOptions& opts);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace collapsar
