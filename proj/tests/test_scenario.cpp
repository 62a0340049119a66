#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "collapsar/scenario.hpp"
#include "nlohmann/json.hpp"

using namespace collapsar;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("a minimal scenario parses with documented defaults filled in") {
    const auto sc = parse_scenario_text(R"({"system": {"preset": "dephasing_qubit"}})");
    CHECK(sc.system.gamma == 0.5);
    CHECK(sc.system.dim() == 2);
    CHECK(sc.system.channels() == 1);
    CHECK(sc.dt == 1e-3);
    CHECK(sc.total_time == 1.0);
    CHECK(sc.n_max == 10);
    CHECK(sc.n_traj == 100);
    CHECK(sc.seed == 12345);
    // the echo names every resolved default
    const auto echo = nlohmann::json::parse(sc.echo_json);
    CHECK(echo["discretization"]["dt"] == 1e-3);
    CHECK(echo["run"]["seed"] == 12345);
    CHECK(echo["kernel"].contains("lines"));
    // default initial state: balanced superposition
    CHECK(sc.initial_state.amps(0).real() == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("negative gamma is rejected with the field named") {
    try {
        parse_scenario_text(R"({"system": {"preset": "dephasing_qubit", "gamma": -1.0}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("system.gamma") != std::string::npos);
    }
}

TEST_CASE("dimension-mismatched collapse operator is rejected with its index") {
    const std::string text = R"({
        "system": {"H": [[0, 0], [0, 0]],
                    "A": ["sigma_z", [[1,0,0],[0,1,0],[0,0,1]]],
                    "gamma": 0.5}
    })";
    try {
        parse_scenario_text(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("system.A[1]") != std::string::npos);
    }
}

TEST_CASE("unknown keys are rejected everywhere") {
    try {
        parse_scenario_text(R"({"system": {"preset": "dephasing_qubit", "gamm": 1.0},
                                "extra_top": 1})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("unknown key 'gamm'") != std::string::npos);
        CHECK(msg.find("unknown key 'extra_top'") != std::string::npos);
    }
}

TEST_CASE("all violations are reported at once") {
    try {
        parse_scenario_text(R"({"system": {"preset": "dephasing_qubit", "gamma": -2},
                                "discretization": {"dt": -1, "n_max": 1}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("system.gamma") != std::string::npos);
        CHECK(msg.find("discretization.dt") != std::string::npos);
        CHECK(msg.find("discretization.n_max") != std::string::npos);
    }
}

TEST_CASE("kernel channel count must match the collapse channels") {
    const std::string text = R"({
        "system": {"preset": "dephasing_qubit"},
        "kernel": {"type": "cosine_sum",
                   "lines": [{"weight": [[1.0, 0.0], [0.0, 1.0]], "omega": 1.0}]}
    })";
    CHECK_THROWS_AS(parse_scenario_text(text), ConfigError);
}

TEST_CASE("compare mode emits a manifest whose headline check passes") {
    const auto sc = parse_scenario_file("scenarios/quick_compare.json");
    RunOptions opts;
    opts.mode = RunMode::Compare;
    opts.out_dir = fresh_dir("collapsar_cmp").string();
    opts.check = true;
    opts.threads = 1;
    const auto res = run(sc, opts);
    CHECK(res.exit_code == 0);
    const auto manifest = nlohmann::json::parse(slurp(res.manifest_path));
    bool found = false;
    for (const auto& c : manifest["checks"])
        if (c["name"] == "equivalence_min_fidelity") {
            found = true;
            CHECK(c["value"].get<double>() >= 1.0 - 1e-3);
            CHECK(c["pass"].get<bool>());
        }
    CHECK(found);
    CHECK(manifest["all_checks_pass"].get<bool>());
}

TEST_CASE("repeated runs with one seed produce byte-identical data files") {
    const auto sc = parse_scenario_text(R"({
        "system": {"preset": "dephasing_qubit", "gamma": 0.5},
        "kernel": {"type": "cosine_sum", "lines": [{"weight": [[1.0]], "omega": 2.0}]},
        "discretization": {"dt": 0.01, "T": 0.5},
        "run": {"mode": "nonmarkov", "n_traj": 50, "seed": 777}
    })");
    RunOptions opts;
    opts.mode = RunMode::NonMarkov;
    opts.threads = 1;
    opts.out_dir = fresh_dir("collapsar_det_a").string();
    const auto ra = run(sc, opts);
    opts.out_dir = fresh_dir("collapsar_det_b").string();
    opts.threads = 4;  // thread count must not change any output
    const auto rb = run(sc, opts);

    for (const auto& name : ra.outputs) {
        const std::string a = slurp(fs::path(fs::temp_directory_path() / "collapsar_det_a") / name);
        const std::string b = slurp(fs::path(fs::temp_directory_path() / "collapsar_det_b") / name);
        CHECK(a == b);
        CHECK(!a.empty());
    }
    // manifests agree apart from the wall-time entry
    auto ma = nlohmann::json::parse(slurp(ra.manifest_path));
    auto mb = nlohmann::json::parse(slurp(rb.manifest_path));
    ma.erase("wall_time_s");
    mb.erase("wall_time_s");
    ma.erase("threads");
    mb.erase("threads");
    CHECK(ma == mb);
}

TEST_CASE("seed and output overrides take effect") {
    const auto sc = parse_scenario_text(R"({
        "system": {"preset": "dephasing_qubit"},
        "kernel": {"type": "cosine_sum", "lines": [{"weight": [[1.0]], "omega": 2.0}]},
        "discretization": {"dt": 0.01, "T": 0.2},
        "run": {"mode": "noise-stats", "n_traj": 100, "seed": 1}
    })");
    RunOptions opts;
    opts.mode = RunMode::NoiseStats;
    opts.threads = 1;
    opts.seed = 999;
    opts.out_dir = fresh_dir("collapsar_seed").string();
    const auto res = run(sc, opts);
    const auto manifest = nlohmann::json::parse(slurp(res.manifest_path));
    CHECK(manifest["seed"].get<std::uint64_t>() == 999);
}

TEST_CASE("oversized bath configurations are a configuration error") {
    const auto sc = parse_scenario_text(R"({
        "system": {"preset": "dephasing_qubit"},
        "kernel": {"type": "exponential", "amplitude": [[1.0]], "tau_c": 1.0},
        "discretization": {"dt": 0.01, "T": 0.2, "modes": 16, "omega_max": 8.0, "n_max": 10},
        "run": {"mode": "compare", "n_traj": 1, "seed": 1}
    })");
    RunOptions opts;
    opts.mode = RunMode::Compare;
    opts.out_dir = fresh_dir("collapsar_toolarge").string();
    CHECK_THROWS_AS(run(sc, opts), TooLarge);
}
