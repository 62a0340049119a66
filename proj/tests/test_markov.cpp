#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "collapsar/markov.hpp"
#include "collapsar/master.hpp"
#include "collapsar/rng.hpp"
#include "oracles.hpp"

using namespace collapsar;

namespace {

PureState plus_state() {
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    return PureState::from(v);
}

}  // namespace

TEST_CASE("a joint eigenstate of all collapse operators is a fixed point") {
    const auto sys = CollapseSystem::dephasing_qubit(1.5);
    const PureState up = PureState::basis(2, 0);
    RealVector dw(1);
    for (double w : {0.3, -2.0, 0.0}) {
        dw << w;
        const PureState out = ito_step(up, sys, dw, 1e-2);
        CHECK(fidelity(out, up) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("ito_step validates its state preconditions") {
    const auto sys = CollapseSystem::dephasing_qubit(1.0);
    RealVector dw(1);
    dw << 0.1;
    Vector v(2);
    v << 2.0, 0.0;  // not unit norm
    CHECK_THROWS_AS(ito_step(PureState::from(v), sys, dw, 1e-3), InvalidArgument);
    CHECK_THROWS_AS(ito_step(PureState{Vector::Zero(2)}, sys, dw, 1e-3), DegenerateState);
}

TEST_CASE("gamma = 0 reduces to a unitary Euler step with O(dt^2) norm drift") {
    const Operator h = Operator::hermitian_op(0.5 * pauli_x().mat);
    const auto sys = CollapseSystem::make(h, {pauli_z()}, 0.0);
    const PureState psi = plus_state();
    RealVector dw(1);
    dw << 0.7;  // must be irrelevant at gamma = 0
    const double dt = 1e-3;
    const PureState out = ito_step(psi, sys, dw, dt);
    // compare against the exact unitary step; Euler direction error is O(dt^2)
    const Matrix u = matrix_exponential(Complex(0, -dt) * h.mat);
    const PureState exact = PureState::from(u * psi.amps);
    CHECK(1.0 - fidelity(out, exact) < 1e-10);  // (dt^2)^2 scale
    // pre-normalization drift of the raw Euler update is O(dt^2)
    Vector raw = psi.amps + Complex(0, -dt) * (h.mat * psi.amps);
    CHECK(std::abs(raw.norm() - 1.0) < dt * dt);
}

TEST_CASE("collapse-operator expectation increments are a martingale") {
    const auto sys = CollapseSystem::dephasing_qubit(1.0);
    Vector v(2);
    v << std::cos(0.5), std::sin(0.5);
    const PureState psi = PureState::from(v);
    const double m0 = expectation(psi, pauli_z());
    GaussianStream rng(17);
    const double dt = 1e-3;
    const int n = 10000;
    std::vector<double> increments(n);
    for (int i = 0; i < n; ++i) {
        RealVector dw(1);
        dw << rng.normal(0.0, std::sqrt(dt));
        increments[static_cast<std::size_t>(i)] =
            expectation(ito_step(psi, sys, dw, dt), pauli_z()) - m0;
    }
    const auto ms = oracles::mean_stderr(increments);
    CHECK(std::abs(ms.mean) < 3.0 * ms.stderr_);
}

TEST_CASE("lindblad_propagate at gamma = 0 is unitary conjugation") {
    const Operator h = Operator::hermitian_op(0.8 * pauli_y().mat);
    const auto sys = CollapseSystem::make(h, {pauli_z()}, 0.0);
    const MixedState rho0 = MixedState::pure(plus_state());
    const double t = 0.9;
    const MixedState rho = lindblad_propagate(rho0, sys, t);
    const Matrix u = matrix_exponential(Complex(0, -t) * h.mat);
    const Matrix expected = u * rho0.mat * u.adjoint();
    CHECK((rho.mat - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dephasing coherence decays as exp(-2 gamma t)") {
    const double gamma = 0.8;
    const auto sys = CollapseSystem::dephasing_qubit(gamma);
    const MixedState rho0 = MixedState::pure(plus_state());
    for (double t : {0.1, 0.5, 2.0}) {
        const MixedState rho = lindblad_propagate(rho0, sys, t);
        CHECK(std::abs(rho.mat(0, 1)) ==
              doctest::Approx(0.5 * std::exp(-2.0 * gamma * t)).epsilon(1e-10));
        CHECK(rho.trace_real() == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("the maximally mixed state is stationary under Hermitian collapse") {
    const auto sys = CollapseSystem::make(Operator::zero(2), {pauli_x()}, 2.0);
    const MixedState rho = lindblad_propagate(MixedState::maximally_mixed(2), sys, 1.3);
    CHECK((rho.mat - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trajectory norms are exactly one after every step") {
    const auto sys = CollapseSystem::dephasing_qubit(1.0);
    const auto traj = run_markov_trajectory(sys, plus_state(), make_grid(0.5, 1e-2), 3, 0);
    for (const auto& s : traj.states) CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("fixed seed reproduces a trajectory exactly") {
    const auto sys = CollapseSystem::dephasing_qubit(1.0);
    const TimeGrid grid = make_grid(0.2, 1e-2);
    const auto t1 = run_markov_trajectory(sys, plus_state(), grid, 123, 5);
    const auto t2 = run_markov_trajectory(sys, plus_state(), grid, 123, 5);
    CHECK((t1.expectations - t2.expectations).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ensemble average matches the Lindblad oracle for the dephasing qubit") {
    const double gamma = 1.0;
    const auto sys = CollapseSystem::dephasing_qubit(gamma);
    const TimeGrid grid = make_grid(1.0, 2e-3);
    const int n_traj = 4000;
    const auto ens = run_markov_ensemble(sys, plus_state(), grid, n_traj, 7);
    const MixedState oracle = lindblad_propagate(MixedState::pure(plus_state()), sys, 1.0);
    const double td = trace_distance(ens.average.back(), oracle);
    // per-trajectory coherence has variance <= 1/4
    const double stderr_bound = 0.5 / std::sqrt(static_cast<double>(n_traj));
    const double c_dt = 5.0 * gamma * gamma;
    CHECK(td <= 3.0 * (stderr_bound + c_dt * grid.dt));
}

TEST_CASE("ensemble mean of <A> is constant in time when [H, A] = 0 (martingale)") {
    const auto sys = CollapseSystem::dephasing_qubit(1.5);
    Vector v(2);
    v << std::cos(0.7), std::sin(0.7);
    const TimeGrid grid = make_grid(1.0, 5e-3);
    const auto ens = run_markov_ensemble(sys, PureState::from(v), grid, 4000, 11);
    const double m0 = ens.mean_expectations(0, 0);
    const double stderr_bound = 1.0 / std::sqrt(4000.0);
    for (int n = 0; n < grid.size(); n += 40)
        CHECK(std::abs(ens.mean_expectations(0, n) - m0) < 4.0 * stderr_bound);
}

TEST_CASE("strong collapse resolves into eigenstates with Born-rule frequencies") {
    const auto sys = CollapseSystem::dephasing_qubit(2.0);
    const TimeGrid grid = make_grid(4.0, 4e-3);
    const int n_traj = 2000;
    const auto ens = run_markov_ensemble(sys, plus_state(), grid, n_traj, 29);
    int up = 0, resolved = 0;
    for (int i = 0; i < n_traj; ++i) {
        const auto traj = run_markov_trajectory(sys, plus_state(), grid, 29,
                                                static_cast<std::uint64_t>(i));
        const double m = traj.expectations(0, grid.steps);
        if (std::abs(m) > 0.99) ++resolved;
        if (m > 0.99) ++up;
    }
    const double sigma = std::sqrt(0.25 / n_traj);
    CHECK(static_cast<double>(resolved) / n_traj > 0.95);
    CHECK(std::abs(static_cast<double>(up) / n_traj - 0.5) < 3.0 * sigma + 0.02);
}

TEST_CASE("weak convergence: halving dt roughly halves the bias of E[<A>^2]") {
    // Exact reference by Gauss-Hermite quadrature of the weighted linear
    // solution: E[m_T^2] = E_X[ tanh^2(2√γ X) e^{−2γT} cosh(2√γ X) ],
    // X ~ N(0, T) for white noise. Common Wiener paths across resolutions
    // (coarse increments are sums of fine ones) keep the ratio estimates tight.
    const double gamma = 1.0;
    const auto sys = CollapseSystem::make(Operator::zero(2), {pauli_z()}, gamma);
    const double T = 1.0;
    const auto gh = oracles::gauss_hermite(60);
    double exact = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
        const double x = gh.nodes[i] * std::sqrt(2.0 * T);  // N(0,T) via e^{−u²} nodes
        const double th = 2.0 * std::sqrt(gamma) * x;
        exact += gh.weights[i] / std::sqrt(M_PI) * std::tanh(th) * std::tanh(th) *
                 std::exp(-2.0 * gamma * T) * std::cosh(th);
    }

    const int n_traj = 40000;
    const int fine_steps = 48;
    const double dt_f = T / fine_steps;
    double m2_48 = 0.0, m2_24 = 0.0, m2_12 = 0.0;
    for (int i = 0; i < n_traj; ++i) {
        GaussianStream rng(333, static_cast<std::uint64_t>(i));
        std::vector<double> dw(fine_steps);
        for (auto& w : dw) w = rng.normal(0.0, std::sqrt(dt_f));
        RealVector d(1);
        PureState s48 = plus_state(), s24 = plus_state(), s12 = plus_state();
        for (int n = 0; n < fine_steps; ++n) {
            d << dw[static_cast<std::size_t>(n)];
            s48 = ito_step(s48, sys, d, dt_f);
        }
        for (int n = 0; n < fine_steps; n += 2) {
            d << dw[static_cast<std::size_t>(n)] + dw[static_cast<std::size_t>(n + 1)];
            s24 = ito_step(s24, sys, d, 2.0 * dt_f);
        }
        for (int n = 0; n < fine_steps; n += 4) {
            d << dw[static_cast<std::size_t>(n)] + dw[static_cast<std::size_t>(n + 1)] +
                     dw[static_cast<std::size_t>(n + 2)] + dw[static_cast<std::size_t>(n + 3)];
            s12 = ito_step(s12, sys, d, 4.0 * dt_f);
        }
        const double m48 = expectation(s48, pauli_z());
        const double m24 = expectation(s24, pauli_z());
        const double m12 = expectation(s12, pauli_z());
        m2_48 += m48 * m48;
        m2_24 += m24 * m24;
        m2_12 += m12 * m12;
    }
    m2_48 /= n_traj;
    m2_24 /= n_traj;
    m2_12 /= n_traj;
    const double ratio_a = (m2_12 - exact) / (m2_24 - exact);
    const double ratio_b = (m2_24 - exact) / (m2_48 - exact);
    CHECK(ratio_a > 1.5);
    CHECK(ratio_a < 2.8);
    CHECK(ratio_b > 1.5);
    CHECK(ratio_b < 2.8);
}
