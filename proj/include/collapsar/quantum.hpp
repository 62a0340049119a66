// quantum.hpp — dense complex linear-algebra substrate: operators, pure and
// mixed states, tensor embedding, matrix exponentials, partial trace,
// expectations and fidelities. Everything is an immutable value after
// construction and safe to share across trajectory workers.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "collapsar/errors.hpp"

namespace collapsar {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr int kMaxOperatorDim = 1024;

// ---------------------------------------------------------------- Operator

struct Operator {
    Matrix mat;
    bool hermitian = false;

    int dim() const { return static_cast<int>(mat.rows()); }

    // General (possibly non-Hermitian) operator. Rejects non-finite entries.
    static Operator general(Matrix m);

    // Hermitian operator: symmetrized as (M + M†)/2 at construction, rejected
    // if the asymmetry exceeds 1e-8 relative to the largest entry.
    static Operator hermitian_op(Matrix m);

    static Operator identity(int dim);
    static Operator zero(int dim);
};

// 2x2 helpers used throughout tests and presets.
Operator pauli_x();
Operator pauli_y();
Operator pauli_z();

// Truncated ladder operators on n_levels Fock states.
Matrix ladder_lower(int n_levels);              // a
Matrix ladder_raise(int n_levels);              // a†
Matrix quadrature_x(int n_levels);              // (a + a†)/√2
Matrix quadrature_p(int n_levels);              // (a − a†)/(i√2)

// ---------------------------------------------------------------- states

struct PureState {
    Vector amps;

    int dim() const { return static_cast<int>(amps.size()); }
    double norm() const { return amps.norm(); }
    double norm2() const { return amps.squaredNorm(); }

    static PureState from(Vector v);
    static PureState basis(int dim, int index);

    PureState normalized() const;
};

struct MixedState {
    Matrix mat;

    int dim() const { return static_cast<int>(mat.rows()); }
    double trace_real() const { return mat.trace().real(); }

    static MixedState from(Matrix m);
    static MixedState pure(const PureState& s);      // normalized projector
    static MixedState maximally_mixed(int dim);

    // Invariant check: Hermitian within 1e-10, trace within 1e-8 of
    // expected_trace, eigenvalues ≥ −1e-8. Throws on violation.
    void validate(double expected_trace = 1.0) const;
};

// ---------------------------------------------------------------- operations

// exp(scale·O), scaling-and-squaring with a Padé core (closed form at dim 2).
Operator matrix_exponential(const Operator& op, Complex scale);
Matrix matrix_exponential(const Matrix& m);

// Allocation-free fixed-size variant for the trajectory hot loops.
Eigen::Matrix2cd matrix_exponential_2x2(const Eigen::Matrix2cd& m);

// O acting on subsystem `slot` of a product space with subsystem dims `dims`,
// identity elsewhere.
Operator tensor_embed(const Operator& op, int slot, const std::vector<int>& dims);
Matrix tensor_embed(const Matrix& op, int slot, const std::vector<int>& dims);

Matrix kronecker(const Matrix& a, const Matrix& b);

// Partial trace keeping the subsystems listed in `keep` (ascending order of
// slot index defines the output ordering).
MixedState partial_trace(const MixedState& rho, const std::vector<int>& keep,
                         const std::vector<int>& dims);

// ⟨s|O|s⟩ / ⟨s|s⟩ for Hermitian O; tolerates unnormalized states.
double expectation(const PureState& s, const Operator& op);

// |⟨a|b⟩|² / (‖a‖²‖b‖²) ∈ [0,1]; scale and global-phase invariant.
double fidelity(const PureState& a, const PureState& b);

// ½‖a−b‖₁ via the eigenvalues of the Hermitian difference.
double trace_distance(const MixedState& a, const MixedState& b);

// Uhlmann fidelity (tr√(√a b √a))².
double mixed_fidelity(const MixedState& a, const MixedState& b);

// Symmetric PSD square root; eigenvalues below -clamp_tol throw, small
// negatives are clamped to zero.
RealMatrix psd_sqrt(const RealMatrix& m, double clamp_tol = 1e-10);

}  // namespace collapsar
