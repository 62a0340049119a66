#include "collapsar/nonmarkov.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "collapsar/parallel.hpp"

namespace collapsar {

InteractionOps interaction_ops(const CollapseSystem& sys, const TimeGrid& grid) {
    InteractionOps ops;
    ops.grid = grid;
    ops.dim = sys.dim();
    ops.channels = sys.channels();
    ops.gamma = sys.gamma;
    const int nt = grid.size();
    ops.a_int.resize(static_cast<std::size_t>(nt));
    ops.to_schrodinger.resize(static_cast<std::size_t>(nt));

    const bool free_system = sys.H.mat.cwiseAbs().maxCoeff() == 0.0;
    if (free_system) {
        std::vector<Matrix> plain;
        plain.reserve(static_cast<std::size_t>(ops.channels));
        for (const auto& a : sys.A) plain.push_back(a.mat);
        for (int n = 0; n < nt; ++n) {
            ops.a_int[static_cast<std::size_t>(n)] = plain;
            ops.to_schrodinger[static_cast<std::size_t>(n)] = Matrix::Identity(ops.dim, ops.dim);
        }
        return ops;
    }

    // U_n = e^{iH t_n} accumulated from the single-step factor; the unitary
    // product keeps the 1e-11 accuracy budget at desk-scale grids.
    const Matrix u_step = matrix_exponential(Complex(0.0, 1.0) * grid.dt * sys.H.mat);
    Matrix u = Matrix::Identity(ops.dim, ops.dim);
    for (int n = 0; n < nt; ++n) {
        auto& row = ops.a_int[static_cast<std::size_t>(n)];
        row.reserve(static_cast<std::size_t>(ops.channels));
        for (const auto& a : sys.A) {
            Matrix ai = u * a.mat * u.adjoint();
            row.push_back(0.5 * (ai + ai.adjoint()));
        }
        ops.to_schrodinger[static_cast<std::size_t>(n)] = u.adjoint();
        if (n + 1 < nt) u = u_step * u;
    }
    return ops;
}

std::vector<std::vector<Matrix>> memory_operators(const InteractionOps& iops,
                                                  const ModeDecomposition& md) {
    if (md.channels != iops.channels)
        throw ShapeError("memory_operators: kernel channels != collapse channels");
    const int nt = iops.grid.size();
    const int d = iops.dim;
    const int n_modes = md.modes();
    const double dt = iops.grid.dt;

    // Running sums C_{μℓ} = Σ_m c_m Δt cos(ω_μ t_m) R_{μℓ}(t_m) and the sine
    // counterpart, with R_{μℓ}(t) = Σ_k K_μ(k,ℓ) A^I_k(t). The diagonal entry
    // enters with weight ½ when B(n) is formed and is promoted to full weight
    // afterwards.
    std::vector<std::vector<Matrix>> cos_sum(
        static_cast<std::size_t>(n_modes),
        std::vector<Matrix>(static_cast<std::size_t>(md.channels), Matrix::Zero(d, d)));
    auto sin_sum = cos_sum;

    std::vector<std::vector<Matrix>> result(
        static_cast<std::size_t>(nt),
        std::vector<Matrix>(static_cast<std::size_t>(iops.channels), Matrix::Zero(d, d)));

    std::vector<Matrix> r_ml(static_cast<std::size_t>(md.channels), Matrix::Zero(d, d));
    for (int n = 0; n < nt; ++n) {
        const double t = iops.grid.t(n);
        for (int mu = 0; mu < n_modes; ++mu) {
            const RealMatrix& km = md.kappa[static_cast<std::size_t>(mu)];
            const double c = std::cos(md.omega(mu) * t);
            const double s = std::sin(md.omega(mu) * t);
            for (int l = 0; l < md.channels; ++l) {
                Matrix& r = r_ml[static_cast<std::size_t>(l)];
                r.setZero();
                for (int k = 0; k < md.channels; ++k)
                    if (km(k, l) != 0.0) r += km(k, l) * iops.A(n, k);
                // half weight for the new diagonal entry
                cos_sum[static_cast<std::size_t>(mu)][static_cast<std::size_t>(l)] +=
                    0.5 * dt * c * r;
                sin_sum[static_cast<std::size_t>(mu)][static_cast<std::size_t>(l)] +=
                    0.5 * dt * s * r;
            }
        }
        // B_j(n) = Σ_μ Σ_ℓ K_μ(j,ℓ)[cos(ω_μ t_n) C_{μℓ} + sin(ω_μ t_n) S_{μℓ}]
        for (int mu = 0; mu < n_modes; ++mu) {
            const RealMatrix& km = md.kappa[static_cast<std::size_t>(mu)];
            const double c = std::cos(md.omega(mu) * t);
            const double s = std::sin(md.omega(mu) * t);
            for (int j = 0; j < iops.channels; ++j)
                for (int l = 0; l < md.channels; ++l)
                    if (km(j, l) != 0.0)
                        result[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)] +=
                            km(j, l) *
                            (c * cos_sum[static_cast<std::size_t>(mu)][static_cast<std::size_t>(l)] +
                             s * sin_sum[static_cast<std::size_t>(mu)][static_cast<std::size_t>(l)]);
        }
        // promote the diagonal entry to full weight for later rows
        for (int mu = 0; mu < n_modes; ++mu) {
            const RealMatrix& km = md.kappa[static_cast<std::size_t>(mu)];
            const double c = std::cos(md.omega(mu) * t);
            const double s = std::sin(md.omega(mu) * t);
            for (int l = 0; l < md.channels; ++l) {
                Matrix& r = r_ml[static_cast<std::size_t>(l)];
                r.setZero();
                for (int k = 0; k < md.channels; ++k)
                    if (km(k, l) != 0.0) r += km(k, l) * iops.A(n, k);
                cos_sum[static_cast<std::size_t>(mu)][static_cast<std::size_t>(l)] +=
                    0.5 * dt * c * r;
                sin_sum[static_cast<std::size_t>(mu)][static_cast<std::size_t>(l)] +=
                    0.5 * dt * s * r;
            }
        }
    }
    return result;
}

// ------------------------------------------------------------ propagator

LinearPropagator::LinearPropagator(const InteractionOps& iops, const ModeDecomposition& md)
    : grid_(iops.grid), dim_(iops.dim), channels_(iops.channels) {
    const auto memory = memory_operators(iops, md);
    const double dt = grid_.dt;
    const double root_gamma = std::sqrt(iops.gamma);
    const int n_steps = grid_.steps;

    drift_.resize(static_cast<std::size_t>(n_steps), Matrix::Zero(dim_, dim_));
    coupling_.resize(static_cast<std::size_t>(n_steps));
    for (int n = 0; n < n_steps; ++n) {
        Matrix g = Matrix::Zero(dim_, dim_);
        auto& coup = coupling_[static_cast<std::size_t>(n)];
        coup.reserve(static_cast<std::size_t>(channels_));
        for (int j = 0; j < channels_; ++j) {
            g -= 2.0 * iops.gamma * dt * iops.A(n, j) *
                 memory[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
            coup.push_back(root_gamma * dt * iops.A(n, j));
        }
        drift_[static_cast<std::size_t>(n)] = g;
    }
    if (dim_ == 2) {
        drift2_.reserve(static_cast<std::size_t>(n_steps));
        coupling2_.reserve(static_cast<std::size_t>(n_steps * channels_));
        for (int n = 0; n < n_steps; ++n) {
            drift2_.push_back(drift_[static_cast<std::size_t>(n)]);
            for (int j = 0; j < channels_; ++j)
                coupling2_.push_back(
                    coupling_[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)]);
        }
    }
}

void LinearPropagator::steps_2x2(Eigen::Vector2cd& phi, const NoiseTrajectory& w, int n_begin,
                                 int n_end) const {
    Eigen::Matrix2cd g;
    for (int n = n_begin; n < n_end; ++n) {
        g = drift2_[static_cast<std::size_t>(n)];
        for (int j = 0; j < channels_; ++j)
            g.noalias() += w.values(j, n) * coupling2_[static_cast<std::size_t>(n * channels_ + j)];
        phi = (matrix_exponential_2x2(g) * phi).eval();
    }
}

PureState LinearPropagator::propagate_to(const PureState& psi0, const NoiseTrajectory& w,
                                         int n_end) const {
    require_same_grid(grid_, w.grid, "LinearPropagator");
    if (n_end < 0 || n_end > grid_.steps)
        throw InvalidArgument("LinearPropagator: step out of range");
    if (psi0.dim() != dim_) throw ShapeError("LinearPropagator: state dimension mismatch");

    if (dim_ == 2) {
        Eigen::Vector2cd phi(psi0.amps(0), psi0.amps(1));
        steps_2x2(phi, w, 0, n_end);
        Vector out(2);
        out << phi(0), phi(1);
        return PureState{std::move(out)};
    }

    Vector phi = psi0.amps;
    Matrix g(dim_, dim_);
    for (int n = 0; n < n_end; ++n) {
        g = drift_[static_cast<std::size_t>(n)];
        for (int j = 0; j < channels_; ++j)
            g += w.values(j, n) * coupling_[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
        phi = matrix_exponential(g) * phi;
    }
    return PureState{std::move(phi)};
}

LinearTrajectory LinearPropagator::propagate(const PureState& psi0,
                                             const NoiseTrajectory& w) const {
    require_same_grid(grid_, w.grid, "LinearPropagator");
    if (psi0.dim() != dim_) throw ShapeError("LinearPropagator: state dimension mismatch");

    LinearTrajectory out;
    out.grid = grid_;
    out.states.reserve(static_cast<std::size_t>(grid_.size()));
    out.norms2.reserve(static_cast<std::size_t>(grid_.size()));

    if (dim_ == 2) {
        Eigen::Vector2cd phi(psi0.amps(0), psi0.amps(1));
        for (int n = 0; n <= grid_.steps; ++n) {
            Vector v(2);
            v << phi(0), phi(1);
            out.norms2.push_back(v.squaredNorm());
            out.states.push_back(PureState{std::move(v)});
            if (n == grid_.steps) break;
            steps_2x2(phi, w, n, n + 1);
        }
        return out;
    }

    Vector phi = psi0.amps;
    Matrix g(dim_, dim_);
    for (int n = 0; n <= grid_.steps; ++n) {
        out.states.push_back(PureState{phi});
        out.norms2.push_back(phi.squaredNorm());
        if (n == grid_.steps) break;
        g = drift_[static_cast<std::size_t>(n)];
        for (int j = 0; j < channels_; ++j)
            g += w.values(j, n) * coupling_[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
        phi = matrix_exponential(g) * phi;
    }
    return out;
}

LinearTrajectory linear_propagate(const InteractionOps& iops, const ModeDecomposition& md,
                                  const NoiseTrajectory& w, const PureState& psi0) {
    if (psi0.norm() <= 0.0) throw DegenerateState("linear_propagate: zero initial state");
    LinearPropagator prop(iops, md);
    return prop.propagate(psi0, w);
}

PureState fd_insertion(const LinearPropagator& prop, const InteractionOps& iops,
                       const NoiseTrajectory& w, const PureState& psi0, int s_step,
                       int channel, int t_step) {
    if (s_step > t_step)
        throw InvalidArgument("fd_insertion: the state does not depend on future noise");
    if (s_step < 0 || t_step > prop.grid_.steps)
        throw InvalidArgument("fd_insertion: step out of range");
    if (channel < 0 || channel >= prop.channels_)
        throw ShapeError("fd_insertion: channel out of range");

    PureState phi = prop.propagate_to(psi0, w, s_step);
    Vector v = std::sqrt(iops.gamma) * (iops.A(s_step, channel) * phi.amps);
    if (prop.dim_ == 2) {
        Eigen::Vector2cd p2(v(0), v(1));
        prop.steps_2x2(p2, w, s_step, t_step);
        v << p2(0), p2(1);
        return PureState{std::move(v)};
    }
    Matrix g(prop.dim_, prop.dim_);
    for (int n = s_step; n < t_step; ++n) {
        g = prop.drift_[static_cast<std::size_t>(n)];
        for (int j = 0; j < prop.channels_; ++j)
            g += w.values(j, n) *
                 prop.coupling_[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
        v = matrix_exponential(g) * v;
    }
    return PureState{std::move(v)};
}

NoiseTrajectory redefine_noise_step(const NoiseTrajectory& w_current,
                                    const ModeDecomposition& md, const RealVector& a_mean,
                                    double t, double dt, double gamma) {
    if (a_mean.size() != md.channels)
        throw ShapeError("redefine_noise_step: expectation vector size mismatch");
    NoiseTrajectory out = w_current;
    const double f = 2.0 * std::sqrt(gamma) * dt;
    for (int v = 0; v < w_current.grid.size(); ++v) {
        const RealMatrix dmat = reconstruct(md, t - w_current.grid.t(v));
        // w_k += 2√γ Δt D̃_jk(t, v) ⟨A_j⟩ ; D̃ built here is symmetric in (j,k)
        out.values.col(v) += f * dmat.transpose() * a_mean;
    }
    return out;
}

double measure_weight(const LinearTrajectory& ltraj, int step) {
    if (step < 0 || step > ltraj.grid.steps)
        throw InvalidArgument("measure_weight: step out of range");
    return ltraj.norms2[static_cast<std::size_t>(step)];
}

PhysicalTrajectory nonlinear_trajectory(const CollapseSystem& sys, const ModeDecomposition& md,
                                        const NoiseTrajectory& w0, const PureState& psi0,
                                        const std::vector<int>& noise_snapshot_steps) {
    const TimeGrid grid = w0.grid;
    const InteractionOps iops = interaction_ops(sys, grid);
    const LinearPropagator prop(iops, md);
    const int nt = grid.size();
    const int d_ch = sys.channels();

    // Kernel row cache on the lag grid: D̃(|n−v|·Δt) is all the redefinition
    // ever needs.
    std::vector<RealMatrix> lag(static_cast<std::size_t>(nt));
    for (int l = 0; l < nt; ++l) lag[static_cast<std::size_t>(l)] = reconstruct(md, grid.t(l));

    PureState psi0n = psi0.normalized();

    PhysicalTrajectory out;
    out.grid = grid;
    out.states.reserve(static_cast<std::size_t>(nt));
    out.expectations = RealMatrix::Zero(d_ch, nt);
    out.linear_norm2.reserve(static_cast<std::size_t>(nt));

    NoiseTrajectory w_cur = w0;  // w^{[t_0]} = w^{[0]}
    const double shift_f = 2.0 * std::sqrt(sys.gamma) * grid.dt;

    for (int n = 0; n <= grid.steps; ++n) {
        if (std::binary_search(noise_snapshot_steps.begin(), noise_snapshot_steps.end(), n))
            out.noise_snapshots.emplace(n, w_cur);

        // (a) re-propagate the linear equation from 0 to t_n under w^{[t_n]}
        PureState phi = prop.propagate_to(psi0n, w_cur, n);
        const double n2 = phi.norm2();
        if (!(n2 > 1e-300))
            throw DegenerateState("nonlinear_trajectory: linear state reached zero norm at step " +
                                  std::to_string(n));
        out.linear_norm2.push_back(n2);

        // (b) normalize and record ⟨A_k⟩ (picture-independent values)
        PureState psi_int{phi.amps / std::sqrt(n2)};
        RealVector a_mean(d_ch);
        for (int k = 0; k < d_ch; ++k)
            a_mean(k) = (psi_int.amps.adjoint() * iops.A(n, k) * psi_int.amps)(0).real();
        out.expectations.col(n) = a_mean;
        out.states.push_back(
            PureState{iops.to_schrodinger[static_cast<std::size_t>(n)] * psi_int.amps});

        // (c) shift the whole noise trajectory by one rectangle of the
        //     running-noise integral
        if (n < grid.steps) {
            for (int v = 0; v < nt; ++v) {
                const RealMatrix& dmat = lag[static_cast<std::size_t>(std::abs(n - v))];
                w_cur.values.col(v) += shift_f * dmat.transpose() * a_mean;
            }
        }
    }
    out.final_noise = std::move(w_cur);
    return out;
}

// ------------------------------------------------------------ diagnostics

NoiseFunctional NoiseFunctional::one() {
    return NoiseFunctional{};
}

NoiseFunctional NoiseFunctional::linear(double t, int channel) {
    NoiseFunctional f;
    f.degree = 1;
    f.t1 = t;
    f.channel1 = channel;
    return f;
}

NoiseFunctional NoiseFunctional::quadratic(double t1, double t2, int c1, int c2) {
    NoiseFunctional f;
    f.degree = 2;
    f.t1 = t1;
    f.t2 = t2;
    f.channel1 = c1;
    f.channel2 = c2;
    return f;
}

namespace {

int grid_index(const TimeGrid& grid, double t) {
    const int n = static_cast<int>(std::llround(t / grid.dt));
    if (n < 0 || n > grid.steps || std::abs(grid.t(n) - t) > 1e-9 * std::max(1.0, std::abs(t)))
        throw InvalidArgument("NoiseFunctional: time not on the grid");
    return n;
}

}  // namespace

double NoiseFunctional::evaluate(const NoiseTrajectory& w) const {
    switch (degree) {
        case 0:
            return 1.0;
        case 1:
            return w.values(channel1, grid_index(w.grid, t1));
        case 2:
            return w.values(channel1, grid_index(w.grid, t1)) *
                   w.values(channel2, grid_index(w.grid, t2));
        default:
            throw InvalidArgument("NoiseFunctional: degree must be 0, 1 or 2");
    }
}

GirsanovReport girsanov_check(const CollapseSystem& sys, const ModeDecomposition& md,
                              const TimeGrid& grid, const PureState& psi0,
                              const NoiseFunctional& f, int n_traj, std::uint64_t seed,
                              int threads) {
    if (n_traj < 2) throw InvalidArgument("girsanov_check: need at least two trajectories");
    const InteractionOps iops = interaction_ops(sys, grid);
    const LinearPropagator prop(iops, md);
    const PureState psi0n = psi0.normalized();

    std::vector<double> lhs(static_cast<std::size_t>(n_traj));
    std::vector<double> rhs(static_cast<std::size_t>(n_traj));

    parallel_for_index(n_traj, threads, [&](int i) {
        GaussianStream rng(seed, static_cast<std::uint64_t>(i));
        const HiddenVariables x = sample_hidden(md, rng);
        const NoiseTrajectory w = noise_from_hidden(x, md, grid);

        // LHS: functional of the fully redefined noise at the final time.
        const PhysicalTrajectory phys = nonlinear_trajectory(sys, md, w, psi0n);
        lhs[static_cast<std::size_t>(i)] = f.evaluate(phys.final_noise);

        // RHS: functional of the raw noise weighted by ‖φ_w(T)‖².
        const PureState phi = prop.propagate_to(psi0n, w, grid.steps);
        rhs[static_cast<std::size_t>(i)] = f.evaluate(w) * phi.norm2();
    });

    auto mean_stderr = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= (n - 1.0);
        return std::pair<double, double>(mean, std::sqrt(var / n));
    };

    GirsanovReport rep;
    rep.samples = n_traj;
    std::tie(rep.lhs_mean, rep.lhs_stderr) = mean_stderr(lhs);
    std::tie(rep.rhs_mean, rep.rhs_stderr) = mean_stderr(rhs);
    std::vector<double> diff(static_cast<std::size_t>(n_traj));
    for (int i = 0; i < n_traj; ++i)
        diff[static_cast<std::size_t>(i)] =
            lhs[static_cast<std::size_t>(i)] - rhs[static_cast<std::size_t>(i)];
    std::tie(rep.diff_mean, rep.diff_stderr) = mean_stderr(diff);
    rep.z = rep.diff_stderr > 0.0 ? rep.diff_mean / rep.diff_stderr : 0.0;
    return rep;
}

}  // namespace collapsar
