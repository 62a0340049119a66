// markov.hpp — white-noise collapse dynamics: the Itô integrator for the
// nonlinear stochastic state equation and a Lindblad superoperator oracle for
// its ensemble average.

#pragma once

#include <cstdint>
#include <vector>

#include "collapsar/grid.hpp"
#include "collapsar/quantum.hpp"

namespace collapsar {

// System Hamiltonian, Hermitian collapse operators and the collapse rate γ
// (ħ = 1 throughout).
struct CollapseSystem {
    Operator H;
    std::vector<Operator> A;
    double gamma = 0.0;

    int dim() const { return H.dim(); }
    int channels() const { return static_cast<int>(A.size()); }

    static CollapseSystem make(Operator h, std::vector<Operator> a, double gamma);
    // H = 0, A = {σ_z}: the workhorse test system.
    static CollapseSystem dephasing_qubit(double gamma);
};

// One Euler–Maruyama step of
//   d|ψ⟩ = [−iH dt + Σ_k (√γ (A_k−⟨A_k⟩) dW_k − γ/2 (A_k−⟨A_k⟩)² dt)] |ψ⟩
// followed by exact renormalization. The Wiener increments ΔW_k ~ N(0, Δt)
// are caller-supplied so matched-noise comparisons can share randomness.
PureState ito_step(const PureState& s, const CollapseSystem& sys, const RealVector& dW,
                   double dt);

// ρ̇ = −i[H,ρ] + γ Σ_k (A_k ρ A_k − ½{A_k²,ρ}) by superoperator exponentiation.
MixedState lindblad_propagate(const MixedState& rho0, const CollapseSystem& sys, double t);

struct MarkovTrajectory {
    TimeGrid grid;
    RealMatrix expectations;         // D×(N+1): ⟨A_k⟩ along the trajectory
    std::vector<PureState> states;   // snapshots at every grid point
};

struct MarkovEnsembleResult {
    TimeGrid grid;
    RealMatrix mean_expectations;    // D×(N+1), ensemble mean of ⟨A_k⟩
    std::vector<MixedState> average; // E[|ψ⟩⟨ψ|] at every grid point
    std::vector<MarkovTrajectory> sample_trajectories;  // first few, for export
};

MarkovTrajectory run_markov_trajectory(const CollapseSystem& sys, const PureState& psi0,
                                       const TimeGrid& grid, std::uint64_t seed,
                                       std::uint64_t stream);

MarkovEnsembleResult run_markov_ensemble(const CollapseSystem& sys, const PureState& psi0,
                                         const TimeGrid& grid, int n_traj, std::uint64_t seed,
                                         int threads = 1, int keep_trajectories = 0);

}  // namespace collapsar
