#include "collapsar/master.hpp"

#include <cmath>

namespace collapsar {

MixedState InfluenceResult::schrodinger(const InteractionOps& iops, int step) const {
    const Matrix& u = iops.to_schrodinger[static_cast<std::size_t>(step)];
    return MixedState{u * rho[static_cast<std::size_t>(step)].mat * u.adjoint()};
}

namespace {

// Superoperator matrix of the per-step generator on the column-major vec
// space: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
Matrix step_generator(const Matrix& a_now, const Matrix& b_mem, double gamma_dt) {
    const int d = static_cast<int>(a_now.rows());
    const Matrix id = Matrix::Identity(d, d);
    Matrix gen = kronecker(b_mem.transpose(), a_now);    // A ρ B
    gen += kronecker(a_now.transpose(), b_mem);          // B ρ A
    gen -= kronecker(id, a_now * b_mem);                 // A B ρ
    gen -= kronecker((b_mem * a_now).transpose(), id);   // ρ B A
    return gamma_dt * gen;
}

std::vector<Matrix> step_propagators(const CollapseSystem& sys, const ModeDecomposition& md,
                                     const TimeGrid& grid) {
    const InteractionOps iops = interaction_ops(sys, grid);
    const auto memory = memory_operators(iops, md);
    const int d = sys.dim();
    std::vector<Matrix> props;
    props.reserve(static_cast<std::size_t>(grid.steps));
    for (int n = 0; n < grid.steps; ++n) {
        Matrix gen = Matrix::Zero(d * d, d * d);
        for (int j = 0; j < sys.channels(); ++j)
            gen += step_generator(iops.A(n, j),
                                  memory[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)],
                                  sys.gamma * grid.dt);
        props.push_back(matrix_exponential(gen));
    }
    return props;
}

}  // namespace

InfluenceResult influence_propagate(const MixedState& rho0, const CollapseSystem& sys,
                                    const ModeDecomposition& md, const TimeGrid& grid) {
    const int d = sys.dim();
    if (rho0.dim() != d) throw ShapeError("influence_propagate: dimension mismatch");
    const auto props = step_propagators(sys, md, grid);

    InfluenceResult out;
    out.grid = grid;
    out.rho.reserve(static_cast<std::size_t>(grid.size()));
    out.trace.reserve(static_cast<std::size_t>(grid.size()));

    Vector rvec = Eigen::Map<const Vector>(rho0.mat.data(), d * d);
    for (int n = 0; n <= grid.steps; ++n) {
        Matrix rho = Eigen::Map<const Matrix>(rvec.data(), d, d);
        rho = Matrix(0.5 * (rho + rho.adjoint()));
        out.rho.push_back(MixedState{rho});
        out.trace.push_back(rho.trace().real());
        if (n < grid.steps) rvec = props[static_cast<std::size_t>(n)] * rvec;
    }
    return out;
}

double influence_choi_min_eigenvalue(const CollapseSystem& sys, const ModeDecomposition& md,
                                     const TimeGrid& grid) {
    const int d = sys.dim();
    const auto props = step_propagators(sys, md, grid);
    Matrix total = Matrix::Identity(d * d, d * d);
    for (const auto& p : props) total = p * total;

    // Choi = Σ_ij E_ij ⊗ M(E_ij)
    Matrix choi = Matrix::Zero(d * d, d * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Matrix eij = Matrix::Zero(d, d);
            eij(i, j) = 1.0;
            Vector v = Eigen::Map<const Vector>(eij.data(), d * d);
            Vector mv = total * v;
            Matrix m_eij = Eigen::Map<const Matrix>(mv.data(), d, d);
            choi.block(i * d, j * d, d, d) = m_eij;
        }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (choi + choi.adjoint()));
    return es.eigenvalues().minCoeff();
}

double dephasing_coherence(const ModeDecomposition& md, double gamma, double t) {
    if (md.channels != 1)
        throw InvalidArgument("dephasing_coherence: single-channel scenario required");
    return std::exp(-2.0 * gamma * double_integral(md, t)(0, 0));
}

double dephasing_coherence(const StationaryKernel& k, double gamma, double t) {
    if (k.channels() != 1)
        throw InvalidArgument("dephasing_coherence: single-channel scenario required");
    return std::exp(-2.0 * gamma * double_integral(k, t)(0, 0));
}

DensityComparison compare_density(const MixedState& a, const MixedState& b) {
    if (a.dim() != b.dim()) throw ShapeError("compare_density: dimension mismatch");
    return DensityComparison{trace_distance(a, b), mixed_fidelity(a, b)};
}

}  // namespace collapsar
