// master.hpp — independent density-matrix propagation of the Gaussian
// influence map, plus closed-form dephasing curves. This is the arbitration
// oracle every ensemble comparison is measured against.

#pragma once

#include <vector>

#include "collapsar/nonmarkov.hpp"

namespace collapsar {

struct InfluenceResult {
    TimeGrid grid;
    std::vector<MixedState> rho;   // interaction picture, one per grid point
    std::vector<double> trace;     // tr ρ(t_n), should stay 1

    // Schrödinger-picture state at a grid point (undo the interaction frame).
    MixedState schrodinger(const InteractionOps& iops, int step) const;
};

// Trotterized time-ordered superoperator exponential. The per-step generator
// reuses the memory operators B_j(n) of the state-level propagator, so both
// discretizations share one quadrature convention:
//
//   L_n ρ = γΔt Σ_j [ A_j(t_n) ρ B_j(n) + B_j(n) ρ A_j(t_n)
//                     − A_j(t_n)B_j(n) ρ − ρ B_j(n)A_j(t_n) ]
//
// which is trace-preserving term by term.
InfluenceResult influence_propagate(const MixedState& rho0, const CollapseSystem& sys,
                                    const ModeDecomposition& md, const TimeGrid& grid);

// Choi-matrix positivity check of the composed map at the final time.
// Returns the smallest Choi eigenvalue (≥ −1e−7 for a CP map at tolerance).
double influence_choi_min_eigenvalue(const CollapseSystem& sys, const ModeDecomposition& md,
                                     const TimeGrid& grid);

// Single-channel commuting case: off-diagonal damping factor exp(−2γF(t))
// with F the double time integral of the kernel.
double dephasing_coherence(const ModeDecomposition& md, double gamma, double t);
double dephasing_coherence(const StationaryKernel& k, double gamma, double t);

struct DensityComparison {
    double trace_distance = 0.0;
    double fidelity = 0.0;
};

DensityComparison compare_density(const MixedState& a, const MixedState& b);

}  // namespace collapsar
