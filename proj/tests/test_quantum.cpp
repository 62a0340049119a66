#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "collapsar/quantum.hpp"
#include "collapsar/rng.hpp"
#include "oracles.hpp"

using namespace collapsar;

namespace {

Matrix random_matrix(int dim, GaussianStream& rng) {
    Matrix m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = Complex(rng.normal(), rng.normal());
    return m;
}

}  // namespace

TEST_CASE("matrix exponential of zero is the identity") {
    GaussianStream rng(1);
    const Operator o = Operator::general(random_matrix(4, rng));
    const Operator e = matrix_exponential(o, 0.0);
    CHECK((e.mat - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("exp(-i pi/2 sigma_x) = -i sigma_x") {
    const Operator e = matrix_exponential(pauli_x(), Complex(0.0, -M_PI / 2.0));
    const Matrix expected = Complex(0.0, -1.0) * pauli_x().mat;
    CHECK((e.mat - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("matrix exponential matches the Taylor-series oracle") {
    GaussianStream rng(7);
    const Matrix r = random_matrix(8, rng);
    const Matrix m = 0.25 * (r - r.adjoint());  // anti-Hermitian, moderate norm
    const Matrix lib = matrix_exponential(Operator::general(m), 1.0).mat;
    const Matrix ref = oracles::taylor_exp(m);
    CHECK((lib - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("2x2 fast path agrees with the Taylor oracle, including large norms") {
    GaussianStream rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = random_matrix(2, rng);
        if (trial % 2) m *= 10.0;
        const Matrix lib = matrix_exponential(Operator::general(m), Complex(0.3, -0.2)).mat;
        const Matrix ref = oracles::taylor_exp(Complex(0.3, -0.2) * m, 300);
        CHECK((lib - ref).cwiseAbs().maxCoeff() <
              1e-12 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("exponential additivity for commuting arguments") {
    GaussianStream rng(9);
    Matrix m = random_matrix(6, rng);
    const Operator o = Operator::general(m);
    const Matrix a = matrix_exponential(o, Complex(0.4, 0.1)).mat;
    const Matrix b = matrix_exponential(o, Complex(-0.1, 0.2)).mat;
    const Matrix ab = matrix_exponential(o, Complex(0.3, 0.3)).mat;
    CHECK((a * b - ab).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("matrix exponential rejects non-finite input") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Operator::general(m), InvalidOperator);
}

TEST_CASE("tensor embedding onto slot 0 of [2,3] acts as sigma_z x identity") {
    const Operator e = tensor_embed(pauli_z(), 0, {2, 3});
    for (int m = 0; m < 3; ++m) {
        Vector v = Vector::Zero(6);
        v(0 * 3 + m) = 1.0;  // |0>|m>
        Vector w = e.mat * v;
        CHECK((w - v).norm() == doctest::Approx(0.0));
    }
}

TEST_CASE("embedding the identity gives the global identity") {
    const Operator e = tensor_embed(Operator::identity(3), 1, {2, 3, 2});
    CHECK((e.mat - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tensor embedding equals the brute-force Kronecker construction") {
    const Operator e = tensor_embed(pauli_x(), 1, {2, 2});
    const Matrix ref = oracles::kron(Matrix::Identity(2, 2), pauli_x().mat);
    CHECK((e.mat - ref).cwiseAbs().maxCoeff() == 0.0);

    GaussianStream rng(12);
    const Matrix m = random_matrix(3, rng);
    const Matrix lib = tensor_embed(m, 1, {2, 3, 4});
    const Matrix ref2 = oracles::kron(oracles::kron(Matrix::Identity(2, 2), m),
                                      Matrix::Identity(4, 4));
    CHECK((lib - ref2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("embedding is associative with operator products") {
    GaussianStream rng(13);
    const Matrix a = random_matrix(3, rng), b = random_matrix(3, rng);
    const Matrix lhs = tensor_embed(Matrix(a * b), 1, {2, 3});
    const Matrix rhs = tensor_embed(a, 1, {2, 3}) * tensor_embed(b, 1, {2, 3});
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("tensor embedding rejects shape mismatch and oversized products") {
    CHECK_THROWS_AS(tensor_embed(pauli_x(), 1, {2, 3}), ShapeError);
    CHECK_THROWS_AS(tensor_embed(pauli_x(), 5, {2, 2}), ShapeError);
    CHECK_THROWS_AS(tensor_embed(pauli_x(), 0, {2, 32, 32}), TooLarge);
}

TEST_CASE("partial trace of a product state recovers the factor") {
    GaussianStream rng(21);
    Matrix a = random_matrix(2, rng);
    a = a * a.adjoint();
    a /= a.trace();
    Matrix b = random_matrix(3, rng);
    b = b * b.adjoint();
    b /= b.trace();
    const MixedState joint = MixedState::from(oracles::kron(a, b));
    const MixedState ra = partial_trace(joint, {0}, {2, 3});
    CHECK((ra.mat - a).cwiseAbs().maxCoeff() < 1e-14);
    const MixedState rb = partial_trace(joint, {1}, {2, 3});
    CHECK((rb.mat - b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("tracing one qubit of a Bell state leaves the maximally mixed state") {
    Vector bell = Vector::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const MixedState rho = MixedState::pure(PureState::from(bell));
    const MixedState r = partial_trace(rho, {0}, {2, 2});
    CHECK((r.mat - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("partial trace matches the index-summation oracle on a random 2x4 state") {
    GaussianStream rng(22);
    Vector psi(8);
    for (int i = 0; i < 8; ++i) psi(i) = Complex(rng.normal(), rng.normal());
    psi.normalize();
    const MixedState rho = MixedState::pure(PureState::from(psi));
    const Matrix keep_first = oracles::ptrace_keep_first(rho.mat, 2, 4);
    const Matrix keep_second = oracles::ptrace_keep_second(rho.mat, 2, 4);
    CHECK((partial_trace(rho, {0}, {2, 4}).mat - keep_first).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((partial_trace(rho, {1}, {2, 4}).mat - keep_second).cwiseAbs().maxCoeff() < 1e-13);
    // trace and positivity preserved
    CHECK(partial_trace(rho, {0}, {2, 4}).trace_real() == doctest::Approx(1.0));
}

TEST_CASE("expectation in an eigenstate returns the eigenvalue") {
    const PureState up = PureState::basis(2, 0);
    CHECK(expectation(up, pauli_z()) == doctest::Approx(1.0));
    const PureState down = PureState::basis(2, 1);
    CHECK(expectation(down, pauli_z()) == doctest::Approx(-1.0));
}

TEST_CASE("expectation of sigma_z vanishes in the balanced superposition") {
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    CHECK(std::abs(expectation(PureState::from(v), pauli_z())) < 1e-10);
}

TEST_CASE("expectation handles unnormalized states: 2|0>+|1> gives 3/5") {
    Vector v(2);
    v << 2.0, 1.0;
    CHECK(expectation(PureState::from(v), pauli_z()) == doctest::Approx(0.6));
}

TEST_CASE("expectation is invariant under complex rescaling") {
    GaussianStream rng(31);
    Vector v(3);
    for (int i = 0; i < 3; ++i) v(i) = Complex(rng.normal(), rng.normal());
    const Matrix r = random_matrix(3, rng);
    const Operator op = Operator::hermitian_op(0.5 * (r + r.adjoint()));
    const double base = expectation(PureState::from(v), op);
    const Complex scale(rng.normal(), rng.normal());
    const double scaled = expectation(PureState::from(Vector(scale * v)), op);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("expectation rejects the zero state") {
    CHECK_THROWS_AS(expectation(PureState{Vector::Zero(2)}, pauli_z()), DegenerateState);
}

TEST_CASE("fidelity ignores global scale and phase") {
    GaussianStream rng(41);
    Vector v(4);
    for (int i = 0; i < 4; ++i) v(i) = Complex(rng.normal(), rng.normal());
    const PureState a = PureState::from(v);
    const PureState b = PureState::from(Vector(Complex(0.3, -1.7) * v));
    CHECK(fidelity(a, b) == doctest::Approx(1.0));
}

TEST_CASE("fidelity of orthogonal states is zero; half for the balanced overlap") {
    CHECK(fidelity(PureState::basis(2, 0), PureState::basis(2, 1)) == doctest::Approx(0.0));
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    CHECK(fidelity(PureState::from(v), PureState::basis(2, 0)) == doctest::Approx(0.5));
}

TEST_CASE("Hermitian construction symmetrizes small asymmetry and rejects large") {
    Matrix m = pauli_x().mat;
    m(0, 1) += Complex(0.0, 1e-10);
    const Operator o = Operator::hermitian_op(m);
    CHECK((o.mat - o.mat.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    Matrix bad = pauli_x().mat;
    bad(0, 1) += 1e-3;
    CHECK_THROWS_AS(Operator::hermitian_op(bad), InvalidOperator);
}

TEST_CASE("mixed-state validation catches the documented violations") {
    const MixedState ok = MixedState::maximally_mixed(3);
    CHECK_NOTHROW(ok.validate());
    Matrix neg = Matrix::Identity(2, 2);
    neg(1, 1) = -0.1;
    neg(0, 0) = 1.1;
    CHECK_THROWS_AS(MixedState::from(neg).validate(), NotPositiveSemiDefinite);
}

TEST_CASE("ladder operators satisfy the momentum matrix-element formula") {
    const Matrix p = quadrature_p(6);
    for (int n = 0; n + 1 < 6; ++n) {
        CHECK(p(n, n + 1).imag() == doctest::Approx(-std::sqrt((n + 1) / 2.0)));
        CHECK(p(n, n + 1).real() == doctest::Approx(0.0));
    }
    // [x, p] = i on the interior of the truncated space
    const Matrix comm = quadrature_x(6) * p - p * quadrature_x(6);
    for (int n = 0; n < 5; ++n) CHECK(std::abs(comm(n, n) - Complex(0.0, 1.0)) < 1e-12);
}
