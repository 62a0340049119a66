// nonmarkov.hpp — colored-noise collapse dynamics. The linear state equation
// is stepped as a first-order Trotter product of per-step exponentials
//
//   |φ(t_{n+1})⟩ = exp(G_n)|φ(t_n)⟩,
//   G_n = √γ Δt Σ_j A^I_j(t_n) [ w_j(t_n) − 2√γ Σ_{m≤n} c_m Δt D̃_jk(t_m,t_n) A^I_k(t_m) ],
//
// with trapezoidal history weights c_m (½ at m = n, 1 otherwise; the ½ on the
// diagonal is the symmetric-point convention for the equal-time Heaviside).
// The physical trajectory re-propagates the linear equation from t = 0 under
// a noise field that is itself redefined every step,
//
//   w_k(v) → w_k(v) + 2√γ Δt D̃_jk(t_n, v) ⟨A_j⟩_{t_n}   (all grid v),
//
// which is the rectangle discretization of the running noise shift.

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "collapsar/markov.hpp"
#include "collapsar/noise.hpp"

namespace collapsar {

// Precomputed interaction-picture collapse operators A^I_k(t_n) = e^{iHt}A_k e^{−iHt}
// together with the Schrödinger-picture rotations e^{−iHt_n}.
struct InteractionOps {
    TimeGrid grid;
    int dim = 0;
    int channels = 0;
    double gamma = 0.0;
    std::vector<std::vector<Matrix>> a_int;   // [n][k]
    std::vector<Matrix> to_schrodinger;       // [n] = e^{−iH t_n}

    const Matrix& A(int n, int k) const {
        return a_int[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)];
    }
};

InteractionOps interaction_ops(const CollapseSystem& sys, const TimeGrid& grid);

// Memory operators B_j(n) = Σ_k Σ_{m≤n} c_m Δt D̃_jk(t_m,t_n) A^I_k(t_m),
// maintained by incremental cos/sin running sums per mode. The influence-map
// oracle consumes exactly these, so state-level and density-level
// propagators share one quadrature convention by construction.
std::vector<std::vector<Matrix>> memory_operators(const InteractionOps& iops,
                                                  const ModeDecomposition& md);

// Unnormalized linear trajectory in the interaction picture.
struct LinearTrajectory {
    TimeGrid grid;
    std::vector<PureState> states;  // |φ(t_n)⟩, interaction picture
    std::vector<double> norms2;     // ‖φ(t_n)‖²
};

// Per-step generators are cached at construction; only the noise scalars
// change between propagations, which is what makes the O(N²) re-propagation
// of the physical trajectory affordable.
class LinearPropagator {
  public:
    LinearPropagator(const InteractionOps& iops, const ModeDecomposition& md);

    LinearTrajectory propagate(const PureState& psi0, const NoiseTrajectory& w) const;
    // Endpoint-only propagation through the first n_end steps.
    PureState propagate_to(const PureState& psi0, const NoiseTrajectory& w, int n_end) const;

    const TimeGrid& grid() const { return grid_; }

  private:
    TimeGrid grid_;
    int dim_;
    int channels_;
    std::vector<Matrix> drift_;                  // [n] = −2γΔt Σ_j A^I_j(t_n) B_j(n)
    std::vector<std::vector<Matrix>> coupling_;  // [n][j] = √γΔt A^I_j(t_n)
    // fixed-size mirrors of the tables for the dim-2 hot path
    std::vector<Eigen::Matrix2cd> drift2_;
    std::vector<Eigen::Matrix2cd> coupling2_;    // flattened [n*channels + j]

    void steps_2x2(Eigen::Vector2cd& phi, const NoiseTrajectory& w, int n_begin,
                   int n_end) const;

    friend PureState fd_insertion(const LinearPropagator&, const InteractionOps&,
                                  const NoiseTrajectory&, const PureState&, int, int, int);
};

LinearTrajectory linear_propagate(const InteractionOps& iops, const ModeDecomposition& md,
                                  const NoiseTrajectory& w, const PureState& psi0);

// δ|φ(t)⟩/δw_k(s): propagate to step s, insert √γ A^I_k(t_s), continue with
// the unchanged subsequent step generators. s > t is rejected — the state
// cannot depend on future noise.
PureState fd_insertion(const LinearPropagator& prop, const InteractionOps& iops,
                       const NoiseTrajectory& w, const PureState& psi0, int s_step,
                       int channel, int t_step);

// One rectangle of the running-noise integral (all grid points shifted).
NoiseTrajectory redefine_noise_step(const NoiseTrajectory& w_current,
                                    const ModeDecomposition& md, const RealVector& a_mean,
                                    double t, double dt, double gamma);

// ‖φ(t_n)‖², the density of the physical measure relative to the sampling one.
double measure_weight(const LinearTrajectory& ltraj, int step);

// Normalized physical trajectory, Schrödinger picture.
struct PhysicalTrajectory {
    TimeGrid grid;
    std::vector<PureState> states;        // |ψ(t_n)⟩, unit norm
    RealMatrix expectations;              // D×(N+1): ⟨A_k⟩ at each grid point
    std::vector<double> linear_norm2;     // ‖φ(t_n)‖² under the running noise
    NoiseTrajectory final_noise;          // w^{[T]}
    std::map<int, NoiseTrajectory> noise_snapshots;  // w^{[t_n]} at requested steps
};

PhysicalTrajectory nonlinear_trajectory(const CollapseSystem& sys, const ModeDecomposition& md,
                                        const NoiseTrajectory& w0, const PureState& psi0,
                                        const std::vector<int>& noise_snapshot_steps = {});

// ------------------------------------------------------------ diagnostics

// Bounded-moment functionals of the noise at grid times (degree ≤ 2).
struct NoiseFunctional {
    int degree = 0;      // 0: f ≡ 1; 1: w_k1(t1); 2: w_k1(t1)·w_k2(t2)
    int channel1 = 0, channel2 = 0;
    double t1 = 0.0, t2 = 0.0;

    static NoiseFunctional one();
    static NoiseFunctional linear(double t, int channel = 0);
    static NoiseFunctional quadratic(double t1, double t2, int c1 = 0, int c2 = 0);

    double evaluate(const NoiseTrajectory& w) const;
};

// Paired two-estimator test of E[f(w^{[T]})] = E[f(w)·‖φ_w(T)‖²] over a
// sampled ensemble; reports the z-score of the difference.
struct GirsanovReport {
    double lhs_mean = 0.0, lhs_stderr = 0.0;
    double rhs_mean = 0.0, rhs_stderr = 0.0;
    double diff_mean = 0.0, diff_stderr = 0.0;
    double z = 0.0;
    int samples = 0;
};

GirsanovReport girsanov_check(const CollapseSystem& sys, const ModeDecomposition& md,
                              const TimeGrid& grid, const PureState& psi0,
                              const NoiseFunctional& f, int n_traj, std::uint64_t seed,
                              int threads = 1);

}  // namespace collapsar
