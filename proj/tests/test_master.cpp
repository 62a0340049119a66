#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "collapsar/master.hpp"
#include "oracles.hpp"

using namespace collapsar;

namespace {

PureState plus_state() {
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    return PureState::from(v);
}

ModeDecomposition single_mode(double kappa2 = 1.0, double omega = 2.0) {
    return factorize(StationaryKernel::single_mode(kappa2, omega), 0, 0.0);
}

}  // namespace

TEST_CASE("influence map at gamma = 0 is the identity in the interaction picture") {
    const auto sys = CollapseSystem::make(Operator::hermitian_op(0.6 * pauli_x().mat),
                                          {pauli_z()}, 0.0);
    const MixedState rho0 = MixedState::pure(plus_state());
    const auto res = influence_propagate(rho0, sys, single_mode(), make_grid(1.0, 1e-2));
    CHECK((res.rho.back().mat - rho0.mat).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("dephasing coherence: closed form with full revival, matched to 1e-6") {
    const double gamma = 0.5, kappa2 = 1.0, omega0 = 2.0;
    const auto sys = CollapseSystem::dephasing_qubit(gamma);
    const auto md = single_mode(kappa2, omega0);
    const TimeGrid grid = make_grid(M_PI, 1e-3);  // revival at t = 2π/ω₀ = π
    const auto res = influence_propagate(MixedState::pure(plus_state()), sys, md, grid);
    for (int n : {500, 1571, 2500, grid.steps}) {
        const double t = grid.t(n);
        const double f = kappa2 * 2.0 * (1.0 - std::cos(omega0 * t)) / (omega0 * omega0);
        const double expected = 0.5 * std::exp(-2.0 * gamma * f);
        CHECK(std::abs(std::abs(res.rho[static_cast<std::size_t>(n)].mat(0, 1)) - expected) <
              1e-6);
    }
    // revival: coherence back to 1/2 within 1e-3 at the grid point nearest π
    CHECK(std::abs(std::abs(res.rho.back().mat(0, 1)) - 0.5) < 1e-3);
    // cross-check the exponent against 2-D quadrature of the kernel
    const double f_quad = oracles::trapezoid_2d(
        [&](double u, double v) { return reconstruct(md, u - v)(0, 0); }, 1.0, 600);
    CHECK(dephasing_coherence(md, gamma, 1.0) ==
          doctest::Approx(std::exp(-2.0 * gamma * f_quad)).epsilon(1e-5));
}

TEST_CASE("wide-band white kernel reproduces the Lindblad solution") {
    const double gamma = 0.5;
    const auto sys = CollapseSystem::dephasing_qubit(gamma);
    const auto md = factorize(StationaryKernel::white_scalar(1.0, 200.0), 400, 200.0);
    const TimeGrid grid = make_grid(1.0, 5e-4);
    const auto res = influence_propagate(MixedState::pure(plus_state()), sys, md, grid);
    const MixedState lind = lindblad_propagate(MixedState::pure(plus_state()), sys, 1.0);
    CHECK(trace_distance(res.rho.back(), lind) <= 1e-3);
}

TEST_CASE("dephasing_coherence trivia: one at t = 0, white limit, revival") {
    const auto md = single_mode(1.0, 2.0);
    CHECK(dephasing_coherence(md, 0.7, 0.0) == 1.0);
    CHECK(dephasing_coherence(md, 0.7, M_PI) == doctest::Approx(1.0));  // F(2π/ω₀) = 0
    const auto white = StationaryKernel::white_scalar(1.0, 5000.0);
    for (double t : {0.5, 1.0})
        CHECK(dephasing_coherence(white, 0.7, t) ==
              doctest::Approx(std::exp(-2.0 * 0.7 * t)).epsilon(2e-3));
}

TEST_CASE("trace is preserved at every step and the state stays physical") {
    const auto sys = CollapseSystem::make(Operator::hermitian_op(0.4 * pauli_x().mat),
                                          {pauli_z()}, 0.8);
    const auto res = influence_propagate(MixedState::pure(plus_state()), sys,
                                         single_mode(0.9, 1.3), make_grid(2.0, 2e-3));
    for (std::size_t n = 0; n < res.rho.size(); n += 100) {
        CHECK(std::abs(res.trace[n] - 1.0) < 1e-9);
        CHECK_NOTHROW(res.rho[n].validate());
    }
}

TEST_CASE("the composed map is completely positive (Choi test)") {
    const auto sys = CollapseSystem::make(Operator::hermitian_op(0.4 * pauli_x().mat),
                                          {pauli_z()}, 0.8);
    const double min_ev =
        influence_choi_min_eigenvalue(sys, single_mode(0.9, 1.3), make_grid(1.0, 2e-3));
    CHECK(min_ev >= -1e-7);
}

TEST_CASE("influence map equals the linear-ensemble average step for step") {
    // same quadrature convention on both sides: for the commuting case the
    // two routes agree to roundoff, not just to O(dt)
    const double gamma = 0.5;
    const auto sys = CollapseSystem::dephasing_qubit(gamma);
    const auto md = single_mode(1.0, 2.0);
    const TimeGrid grid = make_grid(1.0, 1e-2);
    const auto res = influence_propagate(MixedState::pure(plus_state()), sys, md, grid);

    // dephasing: the linear ensemble average of rho01 is deterministic,
    // exp(−4γ Σ_n Σ_{m≤n} c_m Δt² D(t_m − t_n)) — rebuild that sum directly
    double acc = 0.0;
    for (int n = 0; n < grid.steps; ++n)
        for (int m = 0; m <= n; ++m) {
            const double c = (m == n) ? 0.5 : 1.0;
            acc += c * grid.dt * grid.dt * reconstruct(md, grid.t(m) - grid.t(n))(0, 0);
        }
    const double expected = 0.5 * std::exp(-4.0 * gamma * acc);
    CHECK(std::abs(res.rho.back().mat(0, 1)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("compare_density on the documented pairs") {
    const MixedState a = MixedState::pure(PureState::basis(2, 0));
    const auto same = compare_density(a, a);
    CHECK(same.trace_distance == doctest::Approx(0.0));
    CHECK(same.fidelity == doctest::Approx(1.0));

    const MixedState b = MixedState::pure(PureState::basis(2, 1));
    const auto orth = compare_density(a, b);
    CHECK(orth.trace_distance == doctest::Approx(1.0));
    CHECK(orth.fidelity == doctest::Approx(0.0).epsilon(1e-12));

    const auto half = compare_density(MixedState::maximally_mixed(2), a);
    CHECK(half.trace_distance == doctest::Approx(0.5));
    CHECK(half.fidelity == doctest::Approx(0.5));
}

TEST_CASE("four-way closure on the dephasing qubit (deterministic three of four)") {
    // closed form == influence map == linear-SSE ensemble; the bath route is
    // covered in the joint-evolution suite.
    const double gamma = 0.4;
    const auto sys = CollapseSystem::dephasing_qubit(gamma);
    const auto md = single_mode(0.8, 1.7);
    const TimeGrid grid = make_grid(1.5, 1e-3);
    const auto oracle = influence_propagate(MixedState::pure(plus_state()), sys, md, grid);
    const double closed = 0.5 * dephasing_coherence(md, gamma, grid.total());
    CHECK(std::abs(std::abs(oracle.rho.back().mat(0, 1)) - closed) < 1e-6);

    const auto iops = interaction_ops(sys, grid);
    const LinearPropagator prop(iops, md);
    Complex coh = 0.0;
    const int n_traj = 4000;
    for (int i = 0; i < n_traj; ++i) {
        const auto w = noise_from_hidden(sample_hidden(md, 61, static_cast<std::uint64_t>(i)),
                                         md, grid);
        const PureState fin = prop.propagate_to(plus_state(), w, grid.steps);
        coh += fin.amps(0) * std::conj(fin.amps(1));
    }
    coh /= static_cast<double>(n_traj);
    CHECK(std::abs(std::abs(coh) - closed) / closed < 0.02);
}
