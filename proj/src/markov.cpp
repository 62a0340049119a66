#include "collapsar/markov.hpp"

#include <cmath>

#include "collapsar/parallel.hpp"
#include "collapsar/rng.hpp"

namespace collapsar {

CollapseSystem CollapseSystem::make(Operator h, std::vector<Operator> a, double gamma) {
    if (gamma < 0.0) throw InvalidArgument("CollapseSystem: gamma must be >= 0");
    if (a.empty()) throw InvalidArgument("CollapseSystem: at least one collapse operator");
    const int d = h.dim();
    for (const auto& op : a) {
        if (op.dim() != d) throw ShapeError("CollapseSystem: operator dimension mismatch");
        if (!op.hermitian) throw InvalidOperator("CollapseSystem: collapse operators must be Hermitian");
    }
    if (!h.hermitian) throw InvalidOperator("CollapseSystem: Hamiltonian must be Hermitian");
    return CollapseSystem{std::move(h), std::move(a), gamma};
}

CollapseSystem CollapseSystem::dephasing_qubit(double gamma) {
    return make(Operator::zero(2), {pauli_z()}, gamma);
}

PureState ito_step(const PureState& s, const CollapseSystem& sys, const RealVector& dW,
                   double dt) {
    if (s.dim() != sys.dim()) throw ShapeError("ito_step: state dimension mismatch");
    if (dW.size() != sys.channels()) throw ShapeError("ito_step: one increment per channel");
    const double n = s.norm();
    if (!(n > 0.0)) throw DegenerateState("ito_step: zero-norm state");
    if (std::abs(n - 1.0) > 1e-8) throw InvalidArgument("ito_step: state must be unit norm");

    const double root_gamma = std::sqrt(sys.gamma);
    Vector dpsi = Complex(0.0, -1.0) * (sys.H.mat * s.amps) * dt;
    for (int k = 0; k < sys.channels(); ++k) {
        const double mean = expectation(s, sys.A[static_cast<std::size_t>(k)]);
        Vector centered = sys.A[static_cast<std::size_t>(k)].mat * s.amps - mean * s.amps;
        dpsi += root_gamma * dW(k) * centered;
        // (A−⟨A⟩)² ψ applied as two passes of the centered operator
        Vector centered2 = sys.A[static_cast<std::size_t>(k)].mat * centered - mean * centered;
        dpsi -= 0.5 * sys.gamma * dt * centered2;
    }
    Vector out = s.amps + dpsi;
    const double nn = out.norm();
    if (!(nn > 0.0)) throw DegenerateState("ito_step: step annihilated the state");
    return PureState{out / nn};
}

MixedState lindblad_propagate(const MixedState& rho0, const CollapseSystem& sys, double t) {
    const int d = sys.dim();
    if (rho0.dim() != d) throw ShapeError("lindblad_propagate: dimension mismatch");
    const Matrix id = Matrix::Identity(d, d);

    // vec(AρB) = (Bᵀ ⊗ A) vec(ρ), column-major vec.
    Matrix gen = Matrix::Zero(d * d, d * d);
    gen += Complex(0.0, -1.0) *
           (kronecker(id, sys.H.mat) - kronecker(sys.H.mat.transpose(), id));
    for (const auto& a : sys.A) {
        const Matrix& am = a.mat;
        const Matrix a2 = am * am;
        gen += sys.gamma * (kronecker(am.transpose(), am) -
                            0.5 * kronecker(id, a2) - 0.5 * kronecker(a2.transpose(), id));
    }
    const Matrix prop = matrix_exponential(gen * t);
    Vector rvec = Eigen::Map<const Vector>(rho0.mat.data(), d * d);
    Vector out = prop * rvec;
    Matrix rout = Eigen::Map<const Matrix>(out.data(), d, d);
    rout = Matrix(0.5 * (rout + rout.adjoint()));
    return MixedState{rout};
}

MarkovTrajectory run_markov_trajectory(const CollapseSystem& sys, const PureState& psi0,
                                       const TimeGrid& grid, std::uint64_t seed,
                                       std::uint64_t stream) {
    GaussianStream rng(seed, stream);
    const double root_dt = std::sqrt(grid.dt);
    MarkovTrajectory traj;
    traj.grid = grid;
    traj.expectations = RealMatrix::Zero(sys.channels(), grid.size());
    traj.states.reserve(static_cast<std::size_t>(grid.size()));

    PureState psi = psi0.normalized();
    for (int n = 0; n <= grid.steps; ++n) {
        for (int k = 0; k < sys.channels(); ++k)
            traj.expectations(k, n) = expectation(psi, sys.A[static_cast<std::size_t>(k)]);
        traj.states.push_back(psi);
        if (n == grid.steps) break;
        RealVector dW(sys.channels());
        for (int k = 0; k < sys.channels(); ++k) dW(k) = rng.normal(0.0, root_dt);
        psi = ito_step(psi, sys, dW, grid.dt);
    }
    return traj;
}

MarkovEnsembleResult run_markov_ensemble(const CollapseSystem& sys, const PureState& psi0,
                                         const TimeGrid& grid, int n_traj, std::uint64_t seed,
                                         int threads, int keep_trajectories) {
    if (n_traj < 1) throw InvalidArgument("run_markov_ensemble: n_traj must be >= 1");
    const int d = sys.dim();
    const int nt = grid.size();

    // Per-trajectory records land in slots indexed by trajectory, then the
    // reduction runs in index order: results are independent of `threads`.
    std::vector<RealMatrix> exp_slots(static_cast<std::size_t>(n_traj));
    std::vector<std::vector<Matrix>> proj_slots(static_cast<std::size_t>(n_traj));
    std::vector<MarkovTrajectory> kept(static_cast<std::size_t>(std::min(keep_trajectories, n_traj)));

    parallel_for_index(n_traj, threads, [&](int i) {
        MarkovTrajectory traj = run_markov_trajectory(sys, psi0, grid, seed,
                                                      static_cast<std::uint64_t>(i));
        exp_slots[static_cast<std::size_t>(i)] = traj.expectations;
        auto& projs = proj_slots[static_cast<std::size_t>(i)];
        projs.reserve(static_cast<std::size_t>(nt));
        for (const auto& st : traj.states) projs.push_back(st.amps * st.amps.adjoint());
        if (i < static_cast<int>(kept.size())) kept[static_cast<std::size_t>(i)] = std::move(traj);
    });

    MarkovEnsembleResult res;
    res.grid = grid;
    res.mean_expectations = RealMatrix::Zero(sys.channels(), nt);
    std::vector<Matrix> rho_acc(static_cast<std::size_t>(nt), Matrix::Zero(d, d));
    for (int i = 0; i < n_traj; ++i) {
        res.mean_expectations += exp_slots[static_cast<std::size_t>(i)];
        for (int n = 0; n < nt; ++n)
            rho_acc[static_cast<std::size_t>(n)] +=
                proj_slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)];
    }
    res.mean_expectations /= static_cast<double>(n_traj);
    res.average.reserve(static_cast<std::size_t>(nt));
    for (int n = 0; n < nt; ++n)
        res.average.push_back(MixedState{rho_acc[static_cast<std::size_t>(n)] /
                                         static_cast<double>(n_traj)});
    res.sample_trajectories = std::move(kept);
    return res;
}

}  // namespace collapsar
