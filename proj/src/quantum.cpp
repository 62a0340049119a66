#include "collapsar/quantum.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace collapsar {

namespace {

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

// exp(M) for 2x2 via exp(M) = e^{μ}[cosh(q)I + sinh(q)/q (M − μI)] with
// μ = tr(M)/2 and q² = det-free discriminant. cosh(q) and sinh(q)/q are even
// in q, so no branch choice is needed; a series in q² covers the small-|q|
// region.
Eigen::Matrix2cd exp_2x2_core(const Eigen::Matrix2cd& m) {
    const Complex a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    const Complex mu = 0.5 * (a + d);
    const Complex p = 0.5 * (a - d);
    const Complex q2 = p * p + b * c;
    Complex ch, shq;  // cosh(q), sinh(q)/q
    if (std::abs(q2) < 1e-4) {
        ch = 1.0 + q2 * (0.5 + q2 * (1.0 / 24.0 + q2 / 720.0));
        shq = 1.0 + q2 * (1.0 / 6.0 + q2 * (1.0 / 120.0 + q2 / 5040.0));
    } else {
        const Complex q = std::sqrt(q2);
        ch = std::cosh(q);
        shq = std::sinh(q) / q;
    }
    const Complex e = std::exp(mu);
    Eigen::Matrix2cd out;
    out(0, 0) = e * (ch + shq * p);
    out(0, 1) = e * shq * b;
    out(1, 0) = e * shq * c;
    out(1, 1) = e * (ch - shq * p);
    return out;
}

}  // namespace

Eigen::Matrix2cd matrix_exponential_2x2(const Eigen::Matrix2cd& m) {
    const double nrm = m.cwiseAbs().maxCoeff();
    if (nrm <= 1.0) return exp_2x2_core(m);
    int s = 0;
    double f = 1.0;
    while (nrm * f > 1.0 && s < 60) {
        f *= 0.5;
        ++s;
    }
    Eigen::Matrix2cd r = exp_2x2_core(m * f);
    for (int i = 0; i < s; ++i) r = r * r;
    return r;
}

// ---------------------------------------------------------------- Operator

Operator Operator::general(Matrix m) {
    if (m.rows() != m.cols()) throw ShapeError("Operator: matrix must be square");
    if (m.rows() == 0 || m.rows() > kMaxOperatorDim)
        throw TooLarge("Operator: dimension outside configured range");
    if (!all_finite(m)) throw InvalidOperator("Operator: non-finite entries");
    return Operator{std::move(m), false};
}

Operator Operator::hermitian_op(Matrix m) {
    if (m.rows() != m.cols()) throw ShapeError("Operator: matrix must be square");
    if (m.rows() == 0 || m.rows() > kMaxOperatorDim)
        throw TooLarge("Operator: dimension outside configured range");
    if (!all_finite(m)) throw InvalidOperator("Operator: non-finite entries");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * scale)
        throw InvalidOperator("Operator: Hermiticity violated beyond 1e-8");
    Matrix sym = 0.5 * (m + m.adjoint());
    return Operator{std::move(sym), true};
}

Operator Operator::identity(int dim) {
    return Operator{Matrix::Identity(dim, dim), true};
}

Operator Operator::zero(int dim) {
    return Operator{Matrix::Zero(dim, dim), true};
}

Operator pauli_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return Operator{m, true};
}

Operator pauli_y() {
    Matrix m(2, 2);
    m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
    return Operator{m, true};
}

Operator pauli_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return Operator{m, true};
}

Matrix ladder_lower(int n_levels) {
    Matrix m = Matrix::Zero(n_levels, n_levels);
    for (int n = 1; n < n_levels; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
    return m;
}

Matrix ladder_raise(int n_levels) {
    return ladder_lower(n_levels).adjoint();
}

Matrix quadrature_x(int n_levels) {
    return (ladder_lower(n_levels) + ladder_raise(n_levels)) / std::sqrt(2.0);
}

Matrix quadrature_p(int n_levels) {
    return (ladder_lower(n_levels) - ladder_raise(n_levels)) / Complex(0.0, std::sqrt(2.0));
}

// ---------------------------------------------------------------- states

PureState PureState::from(Vector v) {
    if (v.size() == 0) throw ShapeError("PureState: empty amplitude vector");
    if (!v.allFinite()) throw InvalidOperator("PureState: non-finite amplitudes");
    return PureState{std::move(v)};
}

PureState PureState::basis(int dim, int index) {
    if (index < 0 || index >= dim) throw ShapeError("PureState::basis: index out of range");
    Vector v = Vector::Zero(dim);
    v(index) = 1.0;
    return PureState{std::move(v)};
}

PureState PureState::normalized() const {
    const double n = norm();
    if (n <= 0.0) throw DegenerateState("PureState: cannot normalize zero state");
    return PureState{amps / n};
}

MixedState MixedState::from(Matrix m) {
    if (m.rows() != m.cols()) throw ShapeError("MixedState: matrix must be square");
    if (!m.allFinite()) throw InvalidOperator("MixedState: non-finite entries");
    return MixedState{std::move(m)};
}

MixedState MixedState::pure(const PureState& s) {
    const double n2 = s.norm2();
    if (n2 <= 0.0) throw DegenerateState("MixedState::pure: zero state");
    return MixedState{s.amps * s.amps.adjoint() / n2};
}

MixedState MixedState::maximally_mixed(int dim) {
    return MixedState{Matrix::Identity(dim, dim) / static_cast<double>(dim)};
}

void MixedState::validate(double expected_trace) const {
    const double scale = std::max(1.0, mat.cwiseAbs().maxCoeff());
    if ((mat - mat.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw InvalidOperator("MixedState: not Hermitian within 1e-10");
    if (std::abs(mat.trace().real() - expected_trace) > 1e-8 ||
        std::abs(mat.trace().imag()) > 1e-8)
        throw InvalidOperator("MixedState: trace deviates from declared value");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (mat + mat.adjoint()));
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw NotPositiveSemiDefinite("MixedState: negative eigenvalue beyond 1e-8");
}

// ---------------------------------------------------------------- operations

Matrix matrix_exponential(const Matrix& m) {
    if (!m.allFinite()) throw InvalidOperator("matrix_exponential: non-finite entries");
    if (m.rows() == 2) return matrix_exponential_2x2(m);
    return m.exp();
}

Operator matrix_exponential(const Operator& op, Complex scale) {
    Matrix scaled = scale * op.mat;
    return Operator::general(matrix_exponential(scaled));
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Matrix tensor_embed(const Matrix& op, int slot, const std::vector<int>& dims) {
    if (slot < 0 || slot >= static_cast<int>(dims.size()))
        throw ShapeError("tensor_embed: slot out of range");
    long total = 1;
    for (int d : dims) {
        if (d <= 0) throw ShapeError("tensor_embed: non-positive subsystem dimension");
        total *= d;
    }
    if (total > kMaxOperatorDim) throw TooLarge("tensor_embed: product dimension exceeds cap");
    if (op.rows() != dims[static_cast<std::size_t>(slot)])
        throw ShapeError("tensor_embed: operator does not match slot dimension");

    Matrix out = Matrix::Identity(1, 1);
    for (int s = 0; s < static_cast<int>(dims.size()); ++s) {
        if (s == slot)
            out = kronecker(out, op);
        else
            out = kronecker(out, Matrix::Identity(dims[static_cast<std::size_t>(s)],
                                                   dims[static_cast<std::size_t>(s)]));
    }
    return out;
}

Operator tensor_embed(const Operator& op, int slot, const std::vector<int>& dims) {
    Matrix m = tensor_embed(op.mat, slot, dims);
    return Operator{std::move(m), op.hermitian};
}

MixedState partial_trace(const MixedState& rho, const std::vector<int>& keep,
                         const std::vector<int>& dims) {
    const int n_sub = static_cast<int>(dims.size());
    long total = 1;
    for (int d : dims) total *= d;
    if (rho.dim() != total) throw ShapeError("partial_trace: dims inconsistent with state");

    std::vector<bool> kept(static_cast<std::size_t>(n_sub), false);
    long keep_dim = 1;
    for (int k : keep) {
        if (k < 0 || k >= n_sub) throw ShapeError("partial_trace: keep slot out of range");
        if (kept[static_cast<std::size_t>(k)]) throw ShapeError("partial_trace: repeated keep slot");
        kept[static_cast<std::size_t>(k)] = true;
        keep_dim *= dims[static_cast<std::size_t>(k)];
    }

    // Row-major strides for the full index and the kept/traced sub-indices.
    std::vector<long> stride(static_cast<std::size_t>(n_sub), 1);
    for (int s = n_sub - 2; s >= 0; --s)
        stride[static_cast<std::size_t>(s)] =
            stride[static_cast<std::size_t>(s + 1)] * dims[static_cast<std::size_t>(s + 1)];

    std::vector<int> keep_slots, trace_slots;
    for (int s = 0; s < n_sub; ++s)
        (kept[static_cast<std::size_t>(s)] ? keep_slots : trace_slots).push_back(s);

    long trace_dim = total / keep_dim;
    Matrix out = Matrix::Zero(keep_dim, keep_dim);

    // Enumerate kept and traced multi-indices by mixed radix decomposition.
    auto offset = [&](long counter, const std::vector<int>& slots) {
        long off = 0;
        for (int s = static_cast<int>(slots.size()) - 1; s >= 0; --s) {
            const int slot = slots[static_cast<std::size_t>(s)];
            const long d = dims[static_cast<std::size_t>(slot)];
            off += (counter % d) * stride[static_cast<std::size_t>(slot)];
            counter /= d;
        }
        return off;
    };

    for (long i = 0; i < keep_dim; ++i) {
        const long row_base = offset(i, keep_slots);
        for (long j = 0; j < keep_dim; ++j) {
            const long col_base = offset(j, keep_slots);
            Complex sum = 0.0;
            for (long tr = 0; tr < trace_dim; ++tr) {
                const long t_off = offset(tr, trace_slots);
                sum += rho.mat(row_base + t_off, col_base + t_off);
            }
            out(i, j) = sum;
        }
    }
    return MixedState{std::move(out)};
}

double expectation(const PureState& s, const Operator& op) {
    if (s.dim() != op.dim()) throw ShapeError("expectation: dimension mismatch");
    const double n2 = s.norm2();
    if (n2 <= 0.0) throw DegenerateState("expectation: zero-norm state");
    const Complex val = (s.amps.adjoint() * op.mat * s.amps)(0) / n2;
    return val.real();
}

double fidelity(const PureState& a, const PureState& b) {
    if (a.dim() != b.dim()) throw ShapeError("fidelity: dimension mismatch");
    const double na = a.norm2(), nb = b.norm2();
    if (na <= 0.0 || nb <= 0.0) throw DegenerateState("fidelity: zero-norm state");
    const Complex ov = (a.amps.adjoint() * b.amps)(0);
    return std::norm(ov) / (na * nb);
}

double trace_distance(const MixedState& a, const MixedState& b) {
    if (a.dim() != b.dim()) throw ShapeError("trace_distance: dimension mismatch");
    Matrix diff = a.mat - b.mat;
    diff = Matrix(0.5 * (diff + diff.adjoint()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(diff);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

namespace {

Matrix hermitian_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

double mixed_fidelity(const MixedState& a, const MixedState& b) {
    if (a.dim() != b.dim()) throw ShapeError("mixed_fidelity: dimension mismatch");
    const Matrix sa = hermitian_sqrt(a.mat);
    const Matrix inner = hermitian_sqrt(sa * b.mat * sa);
    const double t = inner.trace().real();
    return t * t;
}

RealMatrix psd_sqrt(const RealMatrix& m, double clamp_tol) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (m + m.transpose()));
    RealVector ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -clamp_tol * scale)
            throw NotPositiveSemiDefinite("psd_sqrt: negative eigenvalue beyond tolerance");
        ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace collapsar
