#include "collapsar/scenario.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "collapsar/io.hpp"
#include "collapsar/master.hpp"
#include "collapsar/parallel.hpp"
#include "nlohmann/json.hpp"

namespace collapsar {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Markov: return "markov";
        case RunMode::NonMarkov: return "nonmarkov";
        case RunMode::Bohm: return "bohm";
        case RunMode::Compare: return "compare";
        case RunMode::Oracle: return "oracle";
        case RunMode::NoiseStats: return "noise-stats";
        case RunMode::Factorize: return "factorize";
    }
    return "unknown";
}

RunMode run_mode_from_string(const std::string& name) {
    if (name == "markov") return RunMode::Markov;
    if (name == "nonmarkov") return RunMode::NonMarkov;
    if (name == "bohm") return RunMode::Bohm;
    if (name == "compare") return RunMode::Compare;
    if (name == "oracle") return RunMode::Oracle;
    if (name == "noise-stats") return RunMode::NoiseStats;
    if (name == "factorize") return RunMode::Factorize;
    throw ConfigError("run.mode: unknown mode '" + name + "'");
}

// ------------------------------------------------------------ JSON helpers

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where, std::vector<std::string>& errors) {
    if (!j.is_object()) {
        errors.push_back(where + ": expected an object");
        return;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            errors.push_back(where + ": unknown key '" + it.key() + "'");
    }
}

// Complex entries are [re, im] pairs; a bare number is taken as real.
Complex parse_complex(const json& j, const std::string& where,
                      std::vector<std::string>& errors) {
    if (j.is_number()) return Complex(j.get<double>(), 0.0);
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return Complex(j[0].get<double>(), j[1].get<double>());
    errors.push_back(where + ": expected number or [re, im] pair");
    return Complex(0.0, 0.0);
}

Matrix parse_complex_matrix(const json& j, const std::string& where,
                            std::vector<std::string>& errors) {
    if (!j.is_array() || j.empty()) {
        errors.push_back(where + ": expected a non-empty matrix");
        return Matrix::Zero(1, 1);
    }
    const auto rows = j.size();
    const auto cols = j[0].is_array() && (j[0].empty() || j[0][0].is_array() || j[0][0].is_number())
                          ? j[0].size()
                          : 0;
    if (cols == 0) {
        errors.push_back(where + ": expected a matrix (array of rows)");
        return Matrix::Zero(1, 1);
    }
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) {
            errors.push_back(where + ": ragged rows");
            return Matrix::Zero(1, 1);
        }
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                parse_complex(j[r][c], where, errors);
    }
    return m;
}

RealMatrix parse_real_matrix(const json& j, const std::string& where,
                             std::vector<std::string>& errors) {
    const Matrix m = parse_complex_matrix(j, where, errors);
    if (m.imag().cwiseAbs().maxCoeff() > 0.0)
        errors.push_back(where + ": matrix must be real");
    return m.real();
}

ojson complex_matrix_to_json(const Matrix& m) {
    ojson rows = ojson::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        ojson row = ojson::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(row);
    }
    return rows;
}

ojson real_matrix_to_json(const RealMatrix& m) {
    ojson rows = ojson::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        ojson row = ojson::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Operator parse_named_operator(const std::string& name, std::vector<std::string>& errors,
                              const std::string& where) {
    if (name == "sigma_x") return pauli_x();
    if (name == "sigma_y") return pauli_y();
    if (name == "sigma_z") return pauli_z();
    if (name == "zero2") return Operator::zero(2);
    errors.push_back(where + ": unknown operator preset '" + name + "'");
    return Operator::zero(2);
}

}  // namespace

// ------------------------------------------------------------ parsing

ModeDecomposition Scenario::decomposition() const {
    if (std::holds_alternative<CosineSum>(kernel.form)) return factorize(kernel, 1, 1.0);
    return factorize(kernel, modes, omega_max);
}

Scenario parse_scenario_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scenario parse error: ") + e.what());
    }

    std::vector<std::string> errors;
    check_keys(j, {"system", "kernel", "discretization", "run", "output", "initial_state"},
               "scenario", errors);

    // ---- system
    Operator h = Operator::zero(2);
    std::vector<Operator> a_ops;
    double gamma = 0.5;
    std::string preset = "";
    if (j.contains("system")) {
        const auto& js = j["system"];
        check_keys(js, {"preset", "H", "A", "gamma"}, "system", errors);
        if (js.contains("gamma")) {
            if (js["gamma"].is_number())
                gamma = js["gamma"].get<double>();
            else
                errors.push_back("system.gamma: expected a number");
        }
        if (js.contains("preset")) {
            preset = js["preset"].get<std::string>();
            if (preset == "dephasing_qubit") {
                h = Operator::zero(2);
                a_ops = {pauli_z()};
            } else {
                errors.push_back("system.preset: unknown preset '" + preset + "'");
            }
        }
        if (js.contains("H")) {
            if (js["H"].is_string())
                h = parse_named_operator(js["H"].get<std::string>(), errors, "system.H");
            else
                try {
                    h = Operator::hermitian_op(parse_complex_matrix(js["H"], "system.H", errors));
                } catch (const Error& e) {
                    errors.push_back(std::string("system.H: ") + e.what());
                }
        }
        if (js.contains("A")) {
            a_ops.clear();
            if (!js["A"].is_array()) {
                errors.push_back("system.A: expected an array of operators");
            } else {
                int index = 0;
                for (const auto& ja : js["A"]) {
                    const std::string where = "system.A[" + std::to_string(index) + "]";
                    try {
                        if (ja.is_string())
                            a_ops.push_back(
                                parse_named_operator(ja.get<std::string>(), errors, where));
                        else
                            a_ops.push_back(Operator::hermitian_op(
                                parse_complex_matrix(ja, where, errors)));
                    } catch (const Error& e) {
                        errors.push_back(where + ": " + e.what());
                    }
                    ++index;
                }
            }
        }
    }
    if (a_ops.empty()) {
        a_ops = {pauli_z()};
        if (preset.empty()) preset = "dephasing_qubit";
    }
    if (gamma < 0.0) errors.push_back("system.gamma: must be >= 0 (got " +
                                      format_double(gamma) + ")");
    for (std::size_t k = 0; k < a_ops.size(); ++k)
        if (a_ops[k].dim() != h.dim())
            errors.push_back("system.A[" + std::to_string(k) +
                             "]: dimension does not match H");

    // ---- kernel
    StationaryKernel kernel = StationaryKernel::single_mode(1.0, 2.0);
    std::string kernel_kind = "cosine_sum (default single line G=1, omega=2)";
    if (j.contains("kernel")) {
        const auto& jk = j["kernel"];
        check_keys(jk, {"type", "lines", "amplitude", "tau_c", "diffusion", "cutoff", "tau",
                        "values"},
                   "kernel", errors);
        const std::string type = jk.value("type", "cosine_sum");
        kernel_kind = type;
        try {
            if (type == "cosine_sum") {
                std::vector<CosineSum::Line> lines;
                if (!jk.contains("lines") || !jk["lines"].is_array() || jk["lines"].empty()) {
                    errors.push_back("kernel.lines: required non-empty array for cosine_sum");
                } else {
                    int index = 0;
                    for (const auto& jl : jk["lines"]) {
                        const std::string where = "kernel.lines[" + std::to_string(index) + "]";
                        check_keys(jl, {"weight", "omega"}, where, errors);
                        CosineSum::Line line;
                        line.weight = jl.contains("weight")
                                          ? parse_real_matrix(jl["weight"], where + ".weight",
                                                              errors)
                                          : RealMatrix::Identity(1, 1);
                        line.omega = jl.value("omega", 0.0);
                        lines.push_back(std::move(line));
                        ++index;
                    }
                    if (errors.empty()) kernel = StationaryKernel::cosine_sum(std::move(lines));
                }
            } else if (type == "exponential") {
                const RealMatrix amp = jk.contains("amplitude")
                                           ? parse_real_matrix(jk["amplitude"],
                                                               "kernel.amplitude", errors)
                                           : RealMatrix::Identity(1, 1);
                const double tau_c = jk.value("tau_c", 1.0);
                if (errors.empty()) kernel = StationaryKernel::exponential(amp, tau_c);
            } else if (type == "white") {
                const RealMatrix diff = jk.contains("diffusion")
                                            ? parse_real_matrix(jk["diffusion"],
                                                                "kernel.diffusion", errors)
                                            : RealMatrix::Identity(1, 1);
                const double cutoff = jk.value("cutoff", 100.0);
                if (errors.empty()) kernel = StationaryKernel::white(diff, cutoff);
            } else if (type == "grid") {
                std::vector<double> tau;
                std::vector<RealMatrix> values;
                if (jk.contains("tau")) tau = jk["tau"].get<std::vector<double>>();
                if (jk.contains("values"))
                    for (const auto& jv : jk["values"])
                        values.push_back(parse_real_matrix(jv, "kernel.values", errors));
                if (errors.empty())
                    kernel = StationaryKernel::grid_tabulated(std::move(tau), std::move(values));
            } else {
                errors.push_back("kernel.type: unknown type '" + type + "'");
            }
        } catch (const Error& e) {
            errors.push_back(std::string("kernel: ") + e.what());
        }
    }

    // ---- discretization
    Scenario sc{CollapseSystem{Operator::zero(2), {pauli_z()}, 0.0}, kernel,
                PureState::basis(2, 0)};
    if (j.contains("discretization")) {
        const auto& jd = j["discretization"];
        check_keys(jd, {"dt", "T", "modes", "omega_max", "n_max"}, "discretization", errors);
        sc.dt = jd.value("dt", sc.dt);
        sc.total_time = jd.value("T", sc.total_time);
        sc.modes = jd.value("modes", sc.modes);
        sc.omega_max = jd.value("omega_max", sc.omega_max);
        sc.n_max = jd.value("n_max", sc.n_max);
    }
    if (!(sc.dt > 0.0)) errors.push_back("discretization.dt: must be > 0");
    if (!(sc.total_time >= sc.dt))
        errors.push_back("discretization.T: must be at least dt");
    if (sc.modes < 1) errors.push_back("discretization.modes: must be >= 1");
    if (!(sc.omega_max > 0.0)) errors.push_back("discretization.omega_max: must be > 0");
    if (sc.n_max < 2) errors.push_back("discretization.n_max: must be >= 2");

    // ---- run / output
    if (j.contains("run")) {
        const auto& jr = j["run"];
        check_keys(jr, {"mode", "n_traj", "seed"}, "run", errors);
        if (jr.contains("mode")) {
            try {
                sc.mode = run_mode_from_string(jr["mode"].get<std::string>());
            } catch (const Error& e) {
                errors.push_back(e.what());
            }
        }
        sc.n_traj = jr.value("n_traj", sc.n_traj);
        sc.seed = jr.value("seed", sc.seed);
    }
    if (sc.n_traj < 1) errors.push_back("run.n_traj: must be >= 1");
    if (j.contains("output")) {
        check_keys(j["output"], {"dir"}, "output", errors);
        sc.out_dir = j["output"].value("dir", sc.out_dir);
    }

    // ---- initial state (default: uniform superposition)
    Vector psi0 = Vector::Constant(h.dim(), Complex(1.0 / std::sqrt(double(h.dim())), 0.0));
    if (j.contains("initial_state")) {
        const auto& ji = j["initial_state"];
        if (!ji.is_array() || ji.size() != static_cast<std::size_t>(h.dim())) {
            errors.push_back("initial_state: expected " + std::to_string(h.dim()) +
                             " amplitudes");
        } else {
            for (std::size_t i = 0; i < ji.size(); ++i)
                psi0(static_cast<Eigen::Index>(i)) =
                    parse_complex(ji[i], "initial_state", errors);
            if (psi0.norm() <= 0.0) errors.push_back("initial_state: zero norm");
        }
    }

    // ---- kernel channel count must match the collapse channels
    if (errors.empty() && kernel.channels() != static_cast<int>(a_ops.size()))
        errors.push_back("kernel: channel count " + std::to_string(kernel.channels()) +
                         " does not match the number of collapse operators " +
                         std::to_string(a_ops.size()));

    if (!errors.empty()) {
        std::string msg = "scenario validation failed:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }

    sc.system = CollapseSystem::make(std::move(h), std::move(a_ops), gamma);
    sc.initial_state = PureState::from(psi0).normalized();

    // ---- echo with every default resolved
    ojson echo;
    echo["system"] = ojson::object();
    if (!preset.empty()) echo["system"]["preset"] = preset;
    echo["system"]["gamma"] = gamma;
    echo["system"]["H"] = complex_matrix_to_json(sc.system.H.mat);
    ojson a_list = ojson::array();
    for (const auto& a : sc.system.A) a_list.push_back(complex_matrix_to_json(a.mat));
    echo["system"]["A"] = a_list;
    echo["kernel"] = ojson::object();
    echo["kernel"]["type"] = kernel_kind;
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, CosineSum>) {
                ojson lines = ojson::array();
                for (const auto& l : f.lines)
                    lines.push_back(
                        {{"weight", real_matrix_to_json(l.weight)}, {"omega", l.omega}});
                echo["kernel"]["lines"] = lines;
            } else if constexpr (std::is_same_v<T, ExponentialDecay>) {
                echo["kernel"]["amplitude"] = real_matrix_to_json(f.amplitude);
                echo["kernel"]["tau_c"] = f.tau_c;
            } else if constexpr (std::is_same_v<T, WhiteApprox>) {
                echo["kernel"]["diffusion"] = real_matrix_to_json(f.diffusion);
                echo["kernel"]["cutoff"] = f.cutoff;
            } else {
                echo["kernel"]["tau_points"] = f.tau.size();
            }
        },
        sc.kernel.form);
    echo["discretization"] = {{"dt", sc.dt},
                              {"T", sc.total_time},
                              {"modes", sc.modes},
                              {"omega_max", sc.omega_max},
                              {"n_max", sc.n_max}};
    echo["run"] = {{"mode", to_string(sc.mode)}, {"n_traj", sc.n_traj}, {"seed", sc.seed}};
    echo["output"] = {{"dir", sc.out_dir}};
    ojson istate = ojson::array();
    for (int i = 0; i < sc.initial_state.dim(); ++i)
        istate.push_back({sc.initial_state.amps(i).real(), sc.initial_state.amps(i).imag()});
    echo["initial_state"] = istate;
    sc.echo_json = echo.dump(2);
    return sc;
}

Scenario parse_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

// ------------------------------------------------------------ run modes

namespace {

struct ModeOutput {
    std::vector<CheckResult> checks;
    std::vector<std::string> outputs;
};

std::string traj_filename(const char* stem, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d.csv", stem, index);
    return buf;
}

int subsample_stride(int steps, int target_points) {
    return std::max(1, steps / target_points);
}

ojson rho_series_json(const std::vector<MixedState>& rho, const TimeGrid& grid, int stride) {
    ojson series = ojson::array();
    for (int n = 0; n <= grid.steps; n += stride)
        series.push_back({{"t", grid.t(n)},
                          {"rho", complex_matrix_to_json(rho[static_cast<std::size_t>(n)].mat)}});
    return series;
}

ModeOutput run_factorize(const Scenario& sc, const std::filesystem::path& dir) {
    ModeOutput out;
    const auto md = sc.decomposition();
    write_text_file(dir / "modes.json", md.to_json());
    out.outputs.push_back("modes.json");

    const int d = md.channels;
    std::vector<std::string> header{"tau"};
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            header.push_back("D_" + std::to_string(a) + "_" + std::to_string(b));
            header.push_back("Dt_" + std::to_string(a) + "_" + std::to_string(b));
        }
    header.push_back("max_abs_err");
    CsvWriter csv(dir / "reconstruction.csv", header);
    double sup = 0.0;
    for (int i = -100; i <= 100; ++i) {
        const double tau = 0.05 * i;
        const RealMatrix exact = sc.kernel.evaluate(tau);
        const RealMatrix approx = reconstruct(md, tau);
        std::vector<double> row{tau};
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                row.push_back(exact(a, b));
                row.push_back(approx(a, b));
            }
        const double err = (exact - approx).cwiseAbs().maxCoeff();
        row.push_back(err);
        csv.row(row);
        sup = std::max(sup, err);
    }
    out.outputs.push_back("reconstruction.csv");
    const bool exact_form = std::holds_alternative<CosineSum>(sc.kernel.form);
    const double threshold = exact_form ? 1e-12 : 2e-2;
    out.checks.push_back({"kernel_reconstruction_sup_error", sup, threshold, sup <= threshold});
    return out;
}

ModeOutput run_noise_stats(const Scenario& sc, const std::filesystem::path& dir,
                           std::uint64_t seed, int threads) {
    ModeOutput out;
    const auto md = sc.decomposition();
    const TimeGrid grid = sc.grid();

    // covariance statistics on a coarse sub-grid (estimation is quadratic in
    // grid size)
    const int stride = subsample_stride(grid.steps, 49);
    const TimeGrid stats_grid{grid.dt * stride, grid.steps / stride};

    std::vector<NoiseTrajectory> mode_samples(static_cast<std::size_t>(sc.n_traj));
    std::vector<NoiseTrajectory> dense_samples(static_cast<std::size_t>(sc.n_traj));
    parallel_for_index(sc.n_traj, threads, [&](int i) {
        mode_samples[static_cast<std::size_t>(i)] = noise_from_hidden(
            sample_hidden(md, seed, static_cast<std::uint64_t>(i)), md, stats_grid);
        dense_samples[static_cast<std::size_t>(i)] = sample_noise_dense(
            sc.kernel, stats_grid, seed + 1, static_cast<std::uint64_t>(i));
    });

    // a few full-resolution exports
    const int keep = std::min(sc.n_traj, 3);
    for (int i = 0; i < keep; ++i) {
        const auto x = sample_hidden(md, seed, static_cast<std::uint64_t>(i));
        const auto w = noise_from_hidden(x, md, grid);
        std::vector<std::string> header{"t"};
        for (int k = 0; k < md.channels; ++k) header.push_back("w_" + std::to_string(k));
        const std::string name = traj_filename("noise", i);
        CsvWriter csv(dir / name, header);
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            for (int k = 0; k < md.channels; ++k) row.push_back(w.values(k, n));
            csv.row(row);
        }
        out.outputs.push_back(name);
        if (i == 0) {
            write_text_file(dir / "hidden_000.json", x.to_json());
            out.outputs.push_back("hidden_000.json");
        }
    }

    const auto est = estimate_covariance(mode_samples);
    const int d = md.channels;
    double max_z = 0.0;
    for (int n1 = 0; n1 < stats_grid.size(); ++n1)
        for (int n2 = 0; n2 < stats_grid.size(); ++n2) {
            const RealMatrix expected = reconstruct(md, stats_grid.t(n1) - stats_grid.t(n2));
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    const double se = est.stderr_(n1 * d + a, n2 * d + b);
                    if (se > 0.0)
                        max_z = std::max(max_z,
                                         std::abs(est.covariance(n1 * d + a, n2 * d + b) -
                                                  expected(a, b)) /
                                             se);
                }
        }

    // two-sample agreement of the samplers at two representative times
    double max_ks = 0.0;
    const int t1 = stats_grid.size() / 3, t2 = (2 * stats_grid.size()) / 3;
    for (int k = 0; k < d; ++k)
        for (int tn : {t1, t2}) {
            std::vector<double> a(static_cast<std::size_t>(sc.n_traj)),
                b(static_cast<std::size_t>(sc.n_traj));
            for (int i = 0; i < sc.n_traj; ++i) {
                a[static_cast<std::size_t>(i)] =
                    mode_samples[static_cast<std::size_t>(i)].values(k, tn);
                b[static_cast<std::size_t>(i)] =
                    dense_samples[static_cast<std::size_t>(i)].values(k, tn);
            }
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            double dist = 0.0;
            std::size_t ia = 0, ib = 0;
            while (ia < a.size() && ib < b.size()) {
                if (a[ia] <= b[ib])
                    ++ia;
                else
                    ++ib;
                dist = std::max(dist, std::abs(static_cast<double>(ia) / a.size() -
                                               static_cast<double>(ib) / b.size()));
            }
            max_ks = std::max(max_ks, dist);
        }
    const double ks_crit = 1.628 * std::sqrt(2.0 / static_cast<double>(sc.n_traj));

    ojson report;
    report["samples"] = sc.n_traj;
    report["stats_grid_points"] = stats_grid.size();
    report["max_abs_z"] = max_z;
    report["max_two_sample_ks"] = max_ks;
    report["ks_critical_1pc"] = ks_crit;
    write_text_file(dir / "covariance_report.json", report.dump(2));
    out.outputs.push_back("covariance_report.json");

    out.checks.push_back({"noise_covariance_max_z", max_z, 5.0, max_z < 5.0});
    out.checks.push_back({"sampler_agreement_ks", max_ks, ks_crit, max_ks < ks_crit});
    return out;
}

ModeOutput run_markov_mode(const Scenario& sc, const std::filesystem::path& dir,
                           std::uint64_t seed, int threads) {
    ModeOutput out;
    const TimeGrid grid = sc.grid();
    const auto ens = run_markov_ensemble(sc.system, sc.initial_state, grid, sc.n_traj, seed,
                                         threads, std::min(sc.n_traj, 3));
    const int d = sc.system.channels();

    for (std::size_t i = 0; i < ens.sample_trajectories.size(); ++i) {
        std::vector<std::string> header{"t"};
        for (int k = 0; k < d; ++k) header.push_back("reA_" + std::to_string(k));
        header.push_back("norm");
        const std::string name = traj_filename("trajectory", static_cast<int>(i));
        CsvWriter csv(dir / name, header);
        const auto& traj = ens.sample_trajectories[i];
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            for (int k = 0; k < d; ++k) row.push_back(traj.expectations(k, n));
            row.push_back(traj.states[static_cast<std::size_t>(n)].norm());
            csv.row(row);
        }
        out.outputs.push_back(name);
    }

    {
        std::vector<std::string> header{"t"};
        for (int k = 0; k < d; ++k) header.push_back("meanA_" + std::to_string(k));
        CsvWriter csv(dir / "ensemble_expectations.csv", header);
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            for (int k = 0; k < d; ++k) row.push_back(ens.mean_expectations(k, n));
            csv.row(row);
        }
        out.outputs.push_back("ensemble_expectations.csv");
    }

    const int stride = subsample_stride(grid.steps, 200);
    write_text_file(dir / "rho_series.json", rho_series_json(ens.average, grid, stride).dump(2));
    out.outputs.push_back("rho_series.json");

    const MixedState oracle =
        lindblad_propagate(MixedState::pure(sc.initial_state), sc.system, grid.total());
    const double td = trace_distance(ens.average.back(), oracle);
    const double stderr_bound = 0.5 / std::sqrt(static_cast<double>(sc.n_traj));
    const double c_dt = 5.0 * sc.system.gamma * sc.system.gamma;
    const double threshold = 3.0 * (stderr_bound + c_dt * grid.dt);
    out.checks.push_back({"markov_vs_lindblad_trace_distance", td, threshold, td <= threshold});
    return out;
}

ModeOutput run_nonmarkov_mode(const Scenario& sc, const std::filesystem::path& dir,
                              std::uint64_t seed, int threads) {
    ModeOutput out;
    const TimeGrid grid = sc.grid();
    const auto md = sc.decomposition();
    const auto iops = interaction_ops(sc.system, grid);
    const LinearPropagator prop(iops, md);
    const int d = sc.system.channels();

    std::vector<RealMatrix> mean_slots(static_cast<std::size_t>(sc.n_traj));
    std::vector<double> weights(static_cast<std::size_t>(sc.n_traj));
    const int keep = std::min(sc.n_traj, 3);
    std::vector<PhysicalTrajectory> kept(static_cast<std::size_t>(keep));

    parallel_for_index(sc.n_traj, threads, [&](int i) {
        const auto x = sample_hidden(md, seed, static_cast<std::uint64_t>(i));
        const auto w0 = noise_from_hidden(x, md, grid);
        auto phys = nonlinear_trajectory(sc.system, md, w0, sc.initial_state);
        mean_slots[static_cast<std::size_t>(i)] = phys.expectations;
        // the physical-measure weight belongs to the untouched linear run
        weights[static_cast<std::size_t>(i)] =
            prop.propagate_to(sc.initial_state.normalized(), w0, grid.steps).norm2();
        if (i < keep) kept[static_cast<std::size_t>(i)] = std::move(phys);
    });

    for (int i = 0; i < keep; ++i) {
        std::vector<std::string> header{"t"};
        for (int k = 0; k < d; ++k) header.push_back("<A_" + std::to_string(k) + ">");
        header.push_back("norm_linear");
        const std::string name = traj_filename("physical", i);
        CsvWriter csv(dir / name, header);
        const auto& phys = kept[static_cast<std::size_t>(i)];
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            for (int k = 0; k < d; ++k) row.push_back(phys.expectations(k, n));
            row.push_back(phys.linear_norm2[static_cast<std::size_t>(n)]);
            csv.row(row);
        }
        out.outputs.push_back(name);
    }

    // the fully redefined noise field of the first trajectory
    if (keep > 0) {
        std::vector<std::string> header{"t"};
        for (int k = 0; k < d; ++k) header.push_back("w_" + std::to_string(k));
        CsvWriter csv(dir / "final_noise_000.csv", header);
        const auto& w = kept[0].final_noise;
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            for (int k = 0; k < d; ++k) row.push_back(w.values(k, n));
            csv.row(row);
        }
        out.outputs.push_back("final_noise_000.csv");
    }

    {
        std::vector<std::string> header{"t"};
        for (int k = 0; k < d; ++k) header.push_back("meanA_" + std::to_string(k));
        CsvWriter csv(dir / "ensemble_expectations.csv", header);
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            for (int k = 0; k < d; ++k) {
                double acc = 0.0;
                for (int i = 0; i < sc.n_traj; ++i)
                    acc += mean_slots[static_cast<std::size_t>(i)](k, n);
                row.push_back(acc / sc.n_traj);
            }
            csv.row(row);
        }
        out.outputs.push_back("ensemble_expectations.csv");
    }

    double mean = 0.0, var = 0.0;
    for (double w : weights) mean += w;
    mean /= weights.size();
    for (double w : weights) var += (w - mean) * (w - mean);
    var /= (weights.size() - 1.0);
    const double se = std::sqrt(var / weights.size());
    const double z = se > 0.0 ? std::abs(mean - 1.0) / se : 0.0;
    out.checks.push_back({"measure_weight_mean_z", z, 3.0, z <= 3.0});
    return out;
}

ModeOutput run_oracle_mode(const Scenario& sc, const std::filesystem::path& dir) {
    ModeOutput out;
    const TimeGrid grid = sc.grid();
    const auto md = sc.decomposition();
    const auto res = influence_propagate(MixedState::pure(sc.initial_state), sc.system, md, grid);

    const int stride = subsample_stride(grid.steps, 200);
    write_text_file(dir / "rho_series.json", rho_series_json(res.rho, grid, stride).dump(2));
    out.outputs.push_back("rho_series.json");

    double trace_err = 0.0;
    for (double t : res.trace) trace_err = std::max(trace_err, std::abs(t - 1.0));
    out.checks.push_back({"influence_trace_preservation", trace_err, 1e-9, trace_err <= 1e-9});

    if (sc.system.dim() <= 8) {
        const double min_ev = influence_choi_min_eigenvalue(sc.system, md, grid);
        out.checks.push_back(
            {"influence_choi_min_eigenvalue", min_ev, -1e-7, min_ev >= -1e-7});
    }

    // dephasing closed form applies to a single commuting channel on a qubit
    const bool commuting =
        sc.system.channels() == 1 && sc.system.dim() == 2 &&
        (sc.system.H.mat * sc.system.A[0].mat - sc.system.A[0].mat * sc.system.H.mat)
                .cwiseAbs()
                .maxCoeff() < 1e-12;
    if (commuting) {
        CsvWriter csv(dir / "coherence.csv", {"t", "coherence", "closed_form"});
        double max_err = 0.0;
        const double c0 = std::abs(MixedState::pure(sc.initial_state).mat(0, 1));
        for (int n = 0; n <= grid.steps; n += stride) {
            const double coh = std::abs(res.rho[static_cast<std::size_t>(n)].mat(0, 1));
            const double closed =
                c0 * dephasing_coherence(md, sc.system.gamma, grid.t(n));
            csv.row({grid.t(n), coh, closed});
            max_err = std::max(max_err, std::abs(coh - closed));
        }
        out.outputs.push_back("coherence.csv");
        out.checks.push_back(
            {"dephasing_closed_form_max_err", max_err, 1e-6, max_err <= 1e-6});
    }
    return out;
}

ModeOutput run_bohm_or_compare(const Scenario& sc, const std::filesystem::path& dir,
                               std::uint64_t seed, int threads, bool with_dictionary) {
    ModeOutput out;
    const TimeGrid grid = sc.grid();
    const auto md = sc.decomposition();
    const auto bc = BathConfig::make(md, sc.n_max);
    const int d = sc.system.channels();

    struct TrajResult {
        BohmTrajectory bohm;
        PhysicalTrajectory collapse;
        double min_fidelity = 1.0;
        double max_norm_drift = 0.0;
        double max_top_population = 0.0;
        double dictionary_rel_err = 0.0;
    };
    std::vector<TrajResult> results(static_cast<std::size_t>(sc.n_traj));

    parallel_for_index(sc.n_traj, threads, [&](int i) {
        TrajResult r;
        const auto x0 = sample_hidden(md, seed, static_cast<std::uint64_t>(i));
        r.bohm = integrate_bohm(sc.system, bc, sc.initial_state, x0, grid);
        const auto w0 = noise_from_hidden(x0, md, grid);
        r.collapse = nonlinear_trajectory(sc.system, md, w0, sc.initial_state);
        for (int n = 0; n <= grid.steps; ++n) {
            r.min_fidelity = std::min(
                r.min_fidelity, fidelity(r.bohm.conditional[static_cast<std::size_t>(n)],
                                         r.collapse.states[static_cast<std::size_t>(n)]));
            r.max_norm_drift = std::max(
                r.max_norm_drift,
                std::abs(r.bohm.joint_norm[static_cast<std::size_t>(n)] - 1.0));
            r.max_top_population =
                std::max(r.max_top_population,
                         r.bohm.top_population[static_cast<std::size_t>(n)]);
        }
        if (with_dictionary) {
            // centered finite difference of w(x(t), s) against the drift law
            double worst = 0.0, scale = 0.0;
            const int t_stride = std::max(1, grid.steps / 25);
            const int s_stride = std::max(1, grid.steps / 25);
            for (int n = t_stride; n + t_stride <= grid.steps; n += t_stride) {
                const auto& x_prev = r.bohm.x[static_cast<std::size_t>(n - 1)];
                const auto& x_next = r.bohm.x[static_cast<std::size_t>(n + 1)];
                for (int s = 0; s <= grid.steps; s += s_stride) {
                    const RealVector w_next = noise_from_hidden_at(x_next, md, grid.t(s));
                    const RealVector w_prev = noise_from_hidden_at(x_prev, md, grid.t(s));
                    const RealMatrix dmat = reconstruct(md, grid.t(n) - grid.t(s));
                    for (int k = 0; k < d; ++k) {
                        const double fd = (w_next(k) - w_prev(k)) / (2.0 * grid.dt);
                        double rhs = 0.0;
                        for (int kp = 0; kp < d; ++kp)
                            rhs += 2.0 * std::sqrt(sc.system.gamma) * dmat(k, kp) *
                                   r.bohm.expectations(kp, n);
                        worst = std::max(worst, std::abs(fd - rhs));
                        scale = std::max(scale, std::abs(rhs));
                    }
                }
            }
            r.dictionary_rel_err = scale > 0.0 ? worst / scale : 0.0;
        }
        results[static_cast<std::size_t>(i)] = std::move(r);
    });

    const int keep = std::min(sc.n_traj, 3);
    for (int i = 0; i < keep; ++i) {
        const auto& r = results[static_cast<std::size_t>(i)];
        std::vector<std::string> header{"t"};
        for (int l = 0; l < md.channels; ++l)
            for (int m = 0; m < md.modes(); ++m)
                header.push_back("xplus_" + std::to_string(l) + "_" + std::to_string(m));
        for (int l = 0; l < md.channels; ++l)
            for (int m = 0; m < md.modes(); ++m)
                header.push_back("xminus_" + std::to_string(l) + "_" + std::to_string(m));
        for (int k = 0; k < d; ++k) header.push_back("<A_" + std::to_string(k) + ">");
        header.push_back("fidelity_vs_collapse");
        const std::string name = traj_filename("bohm", i);
        CsvWriter csv(dir / name, header);
        for (int n = 0; n <= grid.steps; ++n) {
            std::vector<double> row{grid.t(n)};
            const auto& x = r.bohm.x[static_cast<std::size_t>(n)];
            for (int l = 0; l < md.channels; ++l)
                for (int m = 0; m < md.modes(); ++m) row.push_back(x.xplus(l, m));
            for (int l = 0; l < md.channels; ++l)
                for (int m = 0; m < md.modes(); ++m) row.push_back(x.xminus(l, m));
            for (int k = 0; k < d; ++k) row.push_back(r.bohm.expectations(k, n));
            row.push_back(fidelity(r.bohm.conditional[static_cast<std::size_t>(n)],
                                   r.collapse.states[static_cast<std::size_t>(n)]));
            csv.row(row);
        }
        out.outputs.push_back(name);
    }

    double min_fid = 1.0, norm_drift = 0.0, top_pop = 0.0, dict_err = 0.0;
    for (const auto& r : results) {
        min_fid = std::min(min_fid, r.min_fidelity);
        norm_drift = std::max(norm_drift, r.max_norm_drift);
        top_pop = std::max(top_pop, r.max_top_population);
        dict_err = std::max(dict_err, r.dictionary_rel_err);
    }
    out.checks.push_back({"joint_norm_drift", norm_drift, 1e-8, norm_drift <= 1e-8});
    out.checks.push_back({"fock_truncation_top_population", top_pop, 1e-6, top_pop <= 1e-6});
    out.checks.push_back(
        {"equivalence_min_fidelity", min_fid, 1.0 - 1e-3, min_fid >= 1.0 - 1e-3});
    if (with_dictionary)
        out.checks.push_back(
            {"noise_drift_dictionary_max_rel_err", dict_err, 0.01, dict_err <= 0.01});
    return out;
}

}  // namespace

RunResult run(const Scenario& sc, const RunOptions& opts) {
    RunResult result;
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = opts.seed.value_or(sc.seed);
    const std::string out_name = opts.out_dir.value_or(sc.out_dir);
    const RunMode mode = opts.mode_from_scenario ? sc.mode : opts.mode;
    const int threads = resolve_threads(opts.threads);

    std::filesystem::path dir(out_name);
    ModeOutput mo;
    try {
        std::filesystem::create_directories(dir);
        switch (mode) {
            case RunMode::Factorize: mo = run_factorize(sc, dir); break;
            case RunMode::NoiseStats: mo = run_noise_stats(sc, dir, seed, threads); break;
            case RunMode::Markov: mo = run_markov_mode(sc, dir, seed, threads); break;
            case RunMode::NonMarkov: mo = run_nonmarkov_mode(sc, dir, seed, threads); break;
            case RunMode::Oracle: mo = run_oracle_mode(sc, dir); break;
            case RunMode::Bohm: mo = run_bohm_or_compare(sc, dir, seed, threads, false); break;
            case RunMode::Compare: mo = run_bohm_or_compare(sc, dir, seed, threads, true); break;
        }
    } catch (const ConfigError&) {
        result.exit_code = 2;
        throw;
    } catch (const TooLarge&) {
        result.exit_code = 2;
        throw;
    } catch (const Error&) {
        result.exit_code = 3;
        throw;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    bool all_pass = true;
    ojson checks = ojson::array();
    for (const auto& c : mo.checks) {
        checks.push_back({{"name", c.name},
                          {"value", c.value},
                          {"threshold", c.threshold},
                          {"pass", c.pass}});
        all_pass = all_pass && c.pass;
    }

    ojson manifest;
    manifest["version"] = kVersion;
    manifest["mode"] = to_string(mode);
    manifest["seed"] = seed;
    manifest["threads"] = threads;
    manifest["scenario"] = json::parse(sc.echo_json);
    manifest["checks"] = checks;
    manifest["outputs"] = mo.outputs;
    manifest["all_checks_pass"] = all_pass;
    manifest["wall_time_s"] = wall;
    const auto manifest_path = dir / "manifest.json";
    write_text_file(manifest_path, manifest.dump(2) + "\n");

    result.checks = mo.checks;
    result.outputs = mo.outputs;
    result.manifest_path = manifest_path.string();
    result.exit_code = (opts.check && !all_pass) ? 4 : 0;
    return result;
}

}  // namespace collapsar
