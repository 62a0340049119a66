#include "collapsar/bath.hpp"

#include <cmath>
#include <fstream>

#include "nlohmann/json.hpp"

namespace collapsar {

// ------------------------------------------------------------ config/state

BathConfig BathConfig::make(ModeDecomposition md, int n_max, long dim_cap) {
    if (n_max < 2) throw InvalidArgument("BathConfig: n_max must be >= 2");
    BathConfig bc{std::move(md), n_max, dim_cap};
    if (bc.bath_dim() <= 0) throw TooLarge("BathConfig: bath dimension overflows");
    return bc;
}

long BathConfig::bath_dim() const {
    long d = 1;
    for (int b = 0; b < oscillators(); ++b) {
        if (d > dim_cap) return -1;
        d *= n_max;
    }
    return d;
}

long BathConfig::total_dim(int dim_sys) const {
    const long bd = bath_dim();
    if (bd < 0 || bd * dim_sys > dim_cap)
        throw TooLarge("BathConfig: total dimension exceeds the configured cap");
    return bd * dim_sys;
}

JointState JointState::initial(const BathConfig& bc, const PureState& psi0) {
    const long total = bc.total_dim(psi0.dim());
    const long bath = total / psi0.dim();
    JointState st;
    st.amp = Vector::Zero(total);
    st.dim_sys = psi0.dim();
    st.n_max = bc.n_max;
    st.channels = bc.md.channels;
    st.modes = bc.md.modes();
    st.time = 0.0;
    const PureState p = psi0.normalized();
    for (int s = 0; s < st.dim_sys; ++s) st.amp(s * bath) = p.amps(s);  // bath vacuum
    return st;
}

double JointState::top_level_population() const {
    const long total = amp.size();
    const int B = oscillators();
    double worst = 0.0;
    long stride = 1;
    for (int b = B - 1; b >= 0; --b) {
        // entries whose index along oscillator b equals n_max−1
        double pop = 0.0;
        const long block = stride * n_max;
        for (long base = 0; base < total; base += block)
            for (long i = 0; i < stride; ++i)
                pop += std::norm(amp(base + (n_max - 1) * stride + i));
        worst = std::max(worst, pop);
        stride = block;
    }
    return worst;
}

void JointState::dump(const std::filesystem::path& path_base) const {
    nlohmann::ordered_json j;
    j["dim_sys"] = dim_sys;
    j["n_max"] = n_max;
    j["channels"] = channels;
    j["modes"] = modes;
    j["time"] = time;
    j["endianness"] = "little";
    j["format"] = "float64 interleaved re/im";
    j["length"] = static_cast<long>(amp.size());
    std::ofstream hdr(path_base.string() + ".json");
    hdr << j.dump(2) << '\n';

    std::ofstream bin(path_base.string() + ".bin", std::ios::binary);
    for (Eigen::Index i = 0; i < amp.size(); ++i) {
        const double re = amp(i).real(), im = amp(i).imag();
        bin.write(reinterpret_cast<const char*>(&re), sizeof(double));
        bin.write(reinterpret_cast<const char*>(&im), sizeof(double));
    }
}

// ------------------------------------------------------------ Hamiltonian

namespace {

// System operators T_{ℓm} = Σ_k κ^ℓ_{k,m} A_k; the oscillator (ℓ,m,σ) couples
// as √(2γ)·trig(ω_m t)·T_{ℓm} ⊗ p̂.
std::vector<Matrix> coupling_system_ops(const BathConfig& bc, const CollapseSystem& sys) {
    std::vector<Matrix> t_ops;
    const int M = bc.md.modes();
    t_ops.reserve(static_cast<std::size_t>(bc.md.channels * M));
    for (int l = 0; l < bc.md.channels; ++l)
        for (int m = 0; m < M; ++m) {
            Matrix t = Matrix::Zero(sys.dim(), sys.dim());
            for (int k = 0; k < bc.md.channels; ++k)
                t += bc.md.kappa[static_cast<std::size_t>(m)](k, l) *
                     sys.A[static_cast<std::size_t>(k)].mat;
            t_ops.push_back(std::move(t));
        }
    return t_ops;
}

// Matrix-free application of H^I(t); `out` is overwritten.
class JointHamiltonian {
  public:
    JointHamiltonian(const BathConfig& bc, const CollapseSystem& sys)
        : bc_(bc),
          sys_(sys),
          t_ops_(coupling_system_ops(bc, sys)),
          root_2gamma_(std::sqrt(2.0 * sys.gamma)) {
        const int nm = bc.n_max;
        p_up_.resize(static_cast<std::size_t>(nm), 0.0);
        for (int n = 0; n + 1 < nm; ++n)
            p_up_[static_cast<std::size_t>(n)] = std::sqrt(0.5 * (n + 1));  // |⟨n|p̂|n+1⟩|
    }

    void apply(double t, const JointState& st, const Vector& in, Vector& out,
               Vector& scratch) const {
        const long total = in.size();
        const long bath = total / st.dim_sys;
        out.setZero();

        // H_sys ⊗ 1 : columns of the (bath × sys) view are system components.
        if (sys_.H.mat.cwiseAbs().maxCoeff() != 0.0) {
            Eigen::Map<const Matrix> min(in.data(), bath, st.dim_sys);
            Eigen::Map<Matrix> mout(out.data(), bath, st.dim_sys);
            mout.noalias() += min * sys_.H.mat.transpose();
        }

        const int M = bc_.md.modes();
        for (int l = 0; l < bc_.md.channels; ++l)
            for (int m = 0; m < M; ++m) {
                const Matrix& t_op = t_ops_[static_cast<std::size_t>(l * M + m)];
                if (t_op.cwiseAbs().maxCoeff() == 0.0) continue;
                const double c = root_2gamma_ * std::cos(bc_.md.omega(m) * t);
                const double s = root_2gamma_ * std::sin(bc_.md.omega(m) * t);
                if (c != 0.0) add_coupling(st, in, out, scratch, t_op, bc_.slot(l, m, 0), c);
                if (s != 0.0) add_coupling(st, in, out, scratch, t_op, bc_.slot(l, m, 1), s);
            }
    }

  private:
    // out += coeff · (T ⊗ p̂_slot) in
    void add_coupling(const JointState& st, const Vector& in, Vector& out, Vector& scratch,
                      const Matrix& t_op, int slot, double coeff) const {
        const long total = in.size();
        const int B = st.oscillators();
        long stride = 1;
        for (int b = B - 1; b > slot; --b) stride *= st.n_max;
        apply_p(in, scratch, stride, st.n_max, total);

        const long bath = total / st.dim_sys;
        Eigen::Map<const Matrix> msc(scratch.data(), bath, st.dim_sys);
        Eigen::Map<Matrix> mout(out.data(), bath, st.dim_sys);
        mout.noalias() += coeff * (msc * t_op.transpose());
    }

    // scratch = p̂ (axis with the given stride) applied to in;
    // (p̂ψ)[n] = −i√((n+1)/2) ψ[n+1] + i√(n/2) ψ[n−1]
    void apply_p(const Vector& in, Vector& scratch, long stride, int nm, long total) const {
        scratch.setZero();
        const Complex mi(0.0, -1.0), pi_(0.0, 1.0);
        const long block = stride * nm;
        for (long base = 0; base < total; base += block) {
            for (int n = 0; n < nm; ++n) {
                const long row = base + n * stride;
                if (n + 1 < nm) {
                    const Complex f = mi * p_up_[static_cast<std::size_t>(n)];
                    for (long i = 0; i < stride; ++i)
                        scratch(row + i) += f * in(row + stride + i);
                }
                if (n > 0) {
                    const Complex f = pi_ * p_up_[static_cast<std::size_t>(n - 1)];
                    for (long i = 0; i < stride; ++i)
                        scratch(row + i) += f * in(row - stride + i);
                }
            }
        }
    }

    const BathConfig& bc_;
    const CollapseSystem& sys_;
    std::vector<Matrix> t_ops_;
    double root_2gamma_;
    std::vector<double> p_up_;
};

// y = exp(−i dt H(t_mid)) y, truncated Taylor with norm-based stopping.
void taylor_exp_apply(const JointHamiltonian& h, double t_mid, double dt, JointState& st,
                      Vector& term, Vector& h_term, Vector& scratch) {
    term = st.amp;
    const Complex factor(0.0, -dt);
    double y_norm = st.amp.norm();
    for (int j = 1; j <= 60; ++j) {
        h.apply(t_mid, st, term, h_term, scratch);
        term = (factor / static_cast<double>(j)) * h_term;
        st.amp += term;
        const double tn = term.norm();
        y_norm = std::max(y_norm, st.amp.norm());
        if (tn <= 1e-15 * y_norm) return;
    }
    throw Error("evolve_joint: Taylor series did not converge; reduce dt");
}

}  // namespace

Operator build_interaction(const BathConfig& bc, const CollapseSystem& sys, double t) {
    const long total = bc.total_dim(sys.dim());
    if (total > kMaxOperatorDim)
        throw TooLarge("build_interaction: dense dimension exceeds operator cap");
    const int B = bc.oscillators();
    std::vector<int> dims(static_cast<std::size_t>(B) + 1, bc.n_max);
    dims[0] = sys.dim();

    Matrix h = tensor_embed(sys.H.mat, 0, dims);
    const Matrix p_mat = quadrature_p(bc.n_max);
    const auto t_ops = coupling_system_ops(bc, sys);
    const double root_2gamma = std::sqrt(2.0 * sys.gamma);
    const int M = bc.md.modes();
    for (int l = 0; l < bc.md.channels; ++l)
        for (int m = 0; m < M; ++m) {
            const Matrix& t_op = t_ops[static_cast<std::size_t>(l * M + m)];
            const double c = std::cos(bc.md.omega(m) * t);
            const double s = std::sin(bc.md.omega(m) * t);
            const Matrix sys_part = tensor_embed(t_op, 0, dims);
            if (c != 0.0)
                h += root_2gamma * c * sys_part *
                     tensor_embed(p_mat, 1 + bc.slot(l, m, 0), dims);
            if (s != 0.0)
                h += root_2gamma * s * sys_part *
                     tensor_embed(p_mat, 1 + bc.slot(l, m, 1), dims);
        }
    return Operator::hermitian_op(std::move(h));
}

void evolve_joint(JointState& psi, const BathConfig& bc, const CollapseSystem& sys, double dt) {
    JointHamiltonian h(bc, sys);
    Vector term(psi.amp.size()), h_term(psi.amp.size()), scratch(psi.amp.size());
    taylor_exp_apply(h, psi.time + 0.5 * dt, dt, psi, term, h_term, scratch);
    psi.time += dt;
}

// ------------------------------------------------------------ Hermite

double hermite_point(int n, double x) {
    if (n < 0) throw InvalidArgument("hermite_point: level must be >= 0");
    double prev = 0.0;
    double cur = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);  // φ_0
    for (int k = 0; k < n; ++k) {
        const double next = std::sqrt(2.0 / (k + 1)) * x * cur -
                            std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

std::vector<double> hermite_values(int n_levels, double x) {
    std::vector<double> out(static_cast<std::size_t>(n_levels));
    double prev = 0.0;
    double cur = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);
    for (int k = 0; k < n_levels; ++k) {
        out[static_cast<std::size_t>(k)] = cur;
        const double next = std::sqrt(2.0 / (k + 1)) * x * cur -
                            std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
        prev = cur;
        cur = next;
    }
    return out;
}

// ------------------------------------------------------------ conditioning

namespace {

// ⟨x|Ψ⟩: contract every oscillator axis against φ_n(x_b); returns the raw
// system vector (no vacuum division).
Vector contract_positions(const JointState& st, const HiddenVariables& x) {
    if (x.channels() != st.channels || x.modes() != st.modes)
        throw ShapeError("conditional_state: hidden-variable shape mismatch");
    const int B = st.oscillators();
    std::vector<Complex> cur(st.amp.data(), st.amp.data() + st.amp.size());
    std::vector<Complex> next;
    // axes are contracted innermost-first; slot b has stride n_max^{B−1−b}
    for (int b = B - 1; b >= 0; --b) {
        const int pair = b / 2;
        const int l = pair / st.modes;
        const int m = pair % st.modes;
        const double xv = (b % 2 == 0) ? x.xplus(l, m) : x.xminus(l, m);
        const std::vector<double> h = hermite_values(st.n_max, xv);
        const std::size_t outer = cur.size() / static_cast<std::size_t>(st.n_max);
        next.assign(outer, Complex(0.0, 0.0));
        for (std::size_t o = 0; o < outer; ++o) {
            Complex acc(0.0, 0.0);
            const Complex* row = cur.data() + o * static_cast<std::size_t>(st.n_max);
            for (int n = 0; n < st.n_max; ++n) acc += row[n] * h[static_cast<std::size_t>(n)];
            next[o] = acc;
        }
        cur.swap(next);
    }
    return Eigen::Map<const Vector>(cur.data(), static_cast<Eigen::Index>(cur.size()));
}

double log_vacuum_amplitude(const HiddenVariables& x) {
    // ⟨x|0⟩ = Π_b π^{−1/4} e^{−x_b²/2}
    double sum_sq = x.xplus.squaredNorm() + x.xminus.squaredNorm();
    const int B = 2 * x.channels() * x.modes();
    return -0.25 * B * std::log(M_PI) - 0.5 * sum_sq;
}

}  // namespace

ConditionalState conditional_state(const JointState& psi, const HiddenVariables& x) {
    Vector raw = contract_positions(psi, x);
    const double weight = std::exp(-log_vacuum_amplitude(x));  // 1/⟨x|0⟩
    Vector weighted = raw * weight;
    const double n2 = weighted.squaredNorm();
    if (!(n2 > 0.0) || !weighted.allFinite())
        throw DegenerateState("conditional_state: wave-function node (zero contraction)");
    ConditionalState out;
    out.weighted = PureState{weighted};
    out.normalized = PureState{weighted / std::sqrt(n2)};
    out.norm2 = n2;
    return out;
}

// ------------------------------------------------------------ velocities

Velocities guiding_velocity(const JointState& psi, const HiddenVariables& x,
                            const BathConfig& bc, const CollapseSystem& sys, double t) {
    const ConditionalState cond = conditional_state(psi, x);
    RealVector a_mean(sys.channels());
    for (int k = 0; k < sys.channels(); ++k)
        a_mean(k) = expectation(cond.normalized, sys.A[static_cast<std::size_t>(k)]);

    const int M = bc.md.modes();
    Velocities v{RealMatrix::Zero(bc.md.channels, M), RealMatrix::Zero(bc.md.channels, M)};
    const double root_2gamma = std::sqrt(2.0 * sys.gamma);
    for (int l = 0; l < bc.md.channels; ++l)
        for (int m = 0; m < M; ++m) {
            double coupling = 0.0;  // Σ_k κ^ℓ_{k,m} ⟨A_k⟩
            for (int k = 0; k < bc.md.channels; ++k)
                coupling += bc.md.kappa[static_cast<std::size_t>(m)](k, l) * a_mean(k);
            v.plus(l, m) = root_2gamma * std::cos(bc.md.omega(m) * t) * coupling;
            v.minus(l, m) = root_2gamma * std::sin(bc.md.omega(m) * t) * coupling;
        }
    return v;
}

Velocities guiding_velocity_generic(const JointState& psi, const HiddenVariables& x,
                                    const BathConfig& bc, const CollapseSystem& sys, double t) {
    const Operator h = build_interaction(bc, sys, t);
    const int B = bc.oscillators();
    std::vector<int> dims(static_cast<std::size_t>(B) + 1, bc.n_max);
    dims[0] = sys.dim();
    const Matrix x_mat = quadrature_x(bc.n_max);

    const Vector cond_raw = contract_positions(psi, x);
    const double denom = cond_raw.squaredNorm();
    if (!(denom > 0.0)) throw DegenerateState("guiding_velocity_generic: node");

    const int M = bc.md.modes();
    Velocities v{RealMatrix::Zero(bc.md.channels, M), RealMatrix::Zero(bc.md.channels, M)};
    for (int l = 0; l < bc.md.channels; ++l)
        for (int m = 0; m < M; ++m)
            for (int sigma = 0; sigma < 2; ++sigma) {
                const Matrix xop = tensor_embed(x_mat, 1 + bc.slot(l, m, sigma), dims);
                const Matrix vel_op = Complex(0.0, -1.0) * (xop * h.mat - h.mat * xop);
                JointState chi = psi;
                chi.amp = vel_op * psi.amp;
                const Vector chi_cond = contract_positions(chi, x);
                const double num = (cond_raw.adjoint() * chi_cond)(0).real();
                (sigma == 0 ? v.plus : v.minus)(l, m) = num / denom;
            }
    return v;
}

// ------------------------------------------------------------ integration

BohmTrajectory integrate_bohm(const CollapseSystem& sys, const BathConfig& bc,
                              const PureState& psi0, const HiddenVariables& x0,
                              const TimeGrid& grid) {
    if (bc.md.channels != sys.channels())
        throw ShapeError("integrate_bohm: kernel channels != collapse channels");
    JointState psi = JointState::initial(bc, psi0);
    HiddenVariables x = x0;

    JointHamiltonian h(bc, sys);
    Vector term(psi.amp.size()), h_term(psi.amp.size()), scratch(psi.amp.size());

    BohmTrajectory traj;
    traj.grid = grid;
    traj.x.reserve(static_cast<std::size_t>(grid.size()));
    traj.conditional.reserve(static_cast<std::size_t>(grid.size()));
    traj.expectations = RealMatrix::Zero(sys.channels(), grid.size());
    traj.joint_norm.reserve(static_cast<std::size_t>(grid.size()));
    traj.top_population.reserve(static_cast<std::size_t>(grid.size()));

    const double dt = grid.dt;
    for (int n = 0; n <= grid.steps; ++n) {
        const ConditionalState cond = conditional_state(psi, x);
        traj.x.push_back(x);
        traj.conditional.push_back(cond.normalized);
        for (int k = 0; k < sys.channels(); ++k)
            traj.expectations(k, n) =
                expectation(cond.normalized, sys.A[static_cast<std::size_t>(k)]);
        traj.joint_norm.push_back(psi.norm());
        traj.top_population.push_back(psi.top_level_population());
        if (n == grid.steps) break;

        const double t = grid.t(n);
        // explicit midpoint: velocity at the half step, on the half-evolved state
        const Velocities v1 = guiding_velocity(psi, x, bc, sys, t);
        HiddenVariables x_half = x;
        x_half.xplus += 0.5 * dt * v1.plus;
        x_half.xminus += 0.5 * dt * v1.minus;

        taylor_exp_apply(h, t + 0.25 * dt, 0.5 * dt, psi, term, h_term, scratch);
        psi.time = t + 0.5 * dt;

        const Velocities v2 = guiding_velocity(psi, x_half, bc, sys, t + 0.5 * dt);
        x.xplus += dt * v2.plus;
        x.xminus += dt * v2.minus;

        taylor_exp_apply(h, t + 0.75 * dt, 0.5 * dt, psi, term, h_term, scratch);
        psi.time = t + dt;
    }
    return traj;
}

MixedState trace_out_bath(const JointState& psi) {
    const long bath = psi.amp.size() / psi.dim_sys;
    Eigen::Map<const Matrix> m(psi.amp.data(), bath, psi.dim_sys);
    Matrix rho = (m.adjoint() * m).transpose();  // ρ(s,s') = Σ_β Ψ[s,β] Ψ*[s',β]
    rho = Matrix(0.5 * (rho + rho.adjoint()));
    return MixedState{rho};
}

}  // namespace collapsar
