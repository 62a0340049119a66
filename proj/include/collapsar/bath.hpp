// bath.hpp — exact joint system⊗bath unitary evolution in the bath
// interaction picture, position-representation conditioning on the bath
// quadrature variables, guiding velocities, trajectory integration, and the
// bath trace.
//
// Each (ℓ, m) mode pair carries two unit oscillators, "+" and "−", with zero
// free Hamiltonian (everything sits in the bath interaction picture), coupled
// through their momenta:
//
//   H^I(t) = H_sys⊗1 + √(2γ) Σ_k A_k ⊗ Σ_{ℓ,m} κ^ℓ_{k,m} [cos(ω_m t) p̂⁺_{ℓ,m}
//                                                          + sin(ω_m t) p̂⁻_{ℓ,m}]
//
// Oscillators live in a truncated Fock basis; positions enter through Hermite
// functions, so the vacuum and the p̂ matrix elements are exact.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "collapsar/noise.hpp"
#include "collapsar/nonmarkov.hpp"

namespace collapsar {

struct BathConfig {
    ModeDecomposition md;
    int n_max = 2;                    // Fock levels 0..n_max−1 per oscillator
    long dim_cap = 1L << 21;          // cap on dim_sys · n_max^(2DM)

    int oscillators() const { return 2 * md.channels * md.modes(); }
    // Oscillator slot for (ℓ, m, σ); σ = 0 is "+", σ = 1 is "−".
    int slot(int l, int m, int sigma) const { return 2 * (l * md.modes() + m) + sigma; }
    long bath_dim() const;
    long total_dim(int dim_sys) const;

    static BathConfig make(ModeDecomposition md, int n_max, long dim_cap = 1L << 21);
};

// Amplitude tensor over [system ⊗ oscillators], system index slowest,
// oscillator slots in BathConfig order. Mutable in place; one trajectory owns
// its JointState.
struct JointState {
    Vector amp;
    int dim_sys = 0;
    int n_max = 0;
    int channels = 0;
    int modes = 0;
    double time = 0.0;

    int oscillators() const { return 2 * channels * modes; }
    double norm() const { return amp.norm(); }

    // Population of the top Fock level, maximized over oscillators — the
    // truncation monitor.
    double top_level_population() const;

    static JointState initial(const BathConfig& bc, const PureState& psi0);
    void dump(const std::filesystem::path& path_base) const;  // .json header + .bin payload
};

// Dense interaction-picture Hamiltonian for small configurations (tests and
// the generic-velocity oracle); throws TooLarge above the dense-operator cap.
Operator build_interaction(const BathConfig& bc, const CollapseSystem& sys, double t);

// Matrix-free propagation: Ψ ← exp(−iΔt H^I(time+Δt/2)) Ψ, adaptive Taylor
// applied to the vector; norm preserved to roundoff at desk-scale steps.
void evolve_joint(JointState& psi, const BathConfig& bc, const CollapseSystem& sys, double dt);

// Normalized harmonic-oscillator eigenfunction φ_n(x) by upward recurrence.
double hermite_point(int n, double x);
std::vector<double> hermite_values(int n_levels, double x);

// System state conditioned on bath positions: contraction of the bath
// indices against Π φ_{n}(x), divided by the vacuum amplitude ⟨x|0⟩ so that
// conditional_state(t=0) returns ψ0 exactly. `weighted` carries the physical
// importance weight: E_vacuum[weighted·weighted†] = tr_bath |Ψ⟩⟨Ψ|.
struct ConditionalState {
    PureState weighted;
    PureState normalized;
    double norm2 = 0.0;  // ‖weighted‖²
};

ConditionalState conditional_state(const JointState& psi, const HiddenVariables& x);

// Guiding velocities for every quadrature variable.
struct Velocities {
    RealMatrix plus;   // D×M
    RealMatrix minus;  // D×M
};

// Analytic form: v⁺_{ℓ,m} = √(2γ) cos(ω_m t) Σ_k κ^ℓ_{k,m} ⟨A_k⟩_cond (sin for −).
Velocities guiding_velocity(const JointState& psi, const HiddenVariables& x,
                            const BathConfig& bc, const CollapseSystem& sys, double t);

// Projector-form velocity Re⟨Ψ|Π_x V̂|Ψ⟩ / ⟨Ψ|Π_x|Ψ⟩ with V̂ = −i[x̂, H^I(t)],
// evaluated with dense operators. Agrees with the analytic form to roundoff;
// kept as the independent route for the algebra check.
Velocities guiding_velocity_generic(const JointState& psi, const HiddenVariables& x,
                                    const BathConfig& bc, const CollapseSystem& sys, double t);

struct BohmTrajectory {
    TimeGrid grid;
    std::vector<HiddenVariables> x;        // x(t_n)
    std::vector<PureState> conditional;    // normalized conditional states
    RealMatrix expectations;               // D×(N+1): ⟨A_k⟩ in the conditional state
    std::vector<double> joint_norm;        // ‖Ψ(t_n)‖ monitor
    std::vector<double> top_population;    // truncation monitor per grid point
};

// Lockstep integration: joint state by two midpoint half-steps per Δt,
// hidden variables by the explicit midpoint rule with the velocity field
// evaluated on the half-evolved state.
BohmTrajectory integrate_bohm(const CollapseSystem& sys, const BathConfig& bc,
                              const PureState& psi0, const HiddenVariables& x0,
                              const TimeGrid& grid);

// Partial trace over all bath modes.
MixedState trace_out_bath(const JointState& psi);

}  // namespace collapsar
