#include "collapsar/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "nlohmann/json.hpp"

namespace collapsar {

namespace {

void require_psd_matrix(const RealMatrix& m, const char* what) {
    if (m.rows() != m.cols()) throw ShapeError(std::string(what) + ": matrix must be square");
    if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entries");
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (m + m.transpose()));
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-10 * scale)
        throw NotPositiveSemiDefinite(std::string(what) + ": weight matrix not PSD");
}

double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

}  // namespace

// ------------------------------------------------------------ sine integral

// Power series up to x = 18, asymptotic auxiliary expansion beyond
// (Si = π/2 − f cos − g sin with f ~ 1/x − 2!/x³ + …, g ~ 1/x² − 3!/x⁴ + …);
// absolute error below ~1e-8 everywhere.
double sine_integral(double x) {
    const double ax = std::abs(x);
    double si;
    if (ax <= 18.0) {
        double term = ax;  // k = 0 term: x
        double sum = ax;
        for (int k = 1; k <= 60; ++k) {
            const double tk = 2.0 * k;
            term *= -ax * ax / (tk * (tk + 1.0));
            sum += term / (tk + 1.0);
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        si = sum;
    } else {
        double f = 0.0, g = 0.0;
        double term_f = 1.0 / ax;
        double term_g = 1.0 / (ax * ax);
        double prev_f = std::abs(term_f), prev_g = std::abs(term_g);
        for (int k = 0; k < 40; ++k) {
            f += term_f;
            g += term_g;
            term_f *= -(2.0 * k + 1.0) * (2.0 * k + 2.0) / (ax * ax);
            term_g *= -(2.0 * k + 2.0) * (2.0 * k + 3.0) / (ax * ax);
            // asymptotic series: stop once terms grow again
            if (std::abs(term_f) > prev_f || std::abs(term_g) > prev_g) break;
            prev_f = std::abs(term_f);
            prev_g = std::abs(term_g);
        }
        si = M_PI / 2.0 - f * std::cos(ax) - g * std::sin(ax);
    }
    return x < 0.0 ? -si : si;
}

// ------------------------------------------------------------ kernel forms

StationaryKernel StationaryKernel::cosine_sum(std::vector<CosineSum::Line> lines) {
    if (lines.empty()) throw InvalidArgument("cosine_sum: at least one line required");
    const int d = static_cast<int>(lines.front().weight.rows());
    for (const auto& line : lines) {
        require_psd_matrix(line.weight, "cosine_sum");
        if (line.weight.rows() != d) throw ShapeError("cosine_sum: inconsistent channel count");
        if (line.omega < 0.0) throw InvalidArgument("cosine_sum: omega must be >= 0");
    }
    return StationaryKernel{CosineSum{std::move(lines)}};
}

StationaryKernel StationaryKernel::single_mode(double weight, double omega) {
    RealMatrix g(1, 1);
    g(0, 0) = weight;
    return cosine_sum({CosineSum::Line{g, omega}});
}

StationaryKernel StationaryKernel::exponential(RealMatrix amplitude, double tau_c) {
    require_psd_matrix(amplitude, "exponential");
    if (!(tau_c > 0.0)) throw InvalidArgument("exponential: tau_c must be positive");
    return StationaryKernel{ExponentialDecay{std::move(amplitude), tau_c}};
}

StationaryKernel StationaryKernel::white(RealMatrix diffusion, double cutoff) {
    require_psd_matrix(diffusion, "white");
    if (!(cutoff > 0.0)) throw InvalidArgument("white: cutoff must be positive");
    return StationaryKernel{WhiteApprox{std::move(diffusion), cutoff}};
}

StationaryKernel StationaryKernel::white_scalar(double diffusion, double cutoff) {
    RealMatrix d(1, 1);
    d(0, 0) = diffusion;
    return white(d, cutoff);
}

StationaryKernel StationaryKernel::grid_tabulated(std::vector<double> tau,
                                                  std::vector<RealMatrix> values) {
    if (tau.size() < 2 || tau.size() != values.size())
        throw InvalidArgument("grid_tabulated: need matching tau/value arrays, length >= 2");
    if (std::abs(tau.front()) > 1e-14) throw InvalidArgument("grid_tabulated: tau must start at 0");
    const double step = tau[1] - tau[0];
    if (!(step > 0.0)) throw InvalidArgument("grid_tabulated: tau grid must increase");
    for (std::size_t i = 1; i < tau.size(); ++i)
        if (std::abs(tau[i] - tau[i - 1] - step) > 1e-10 * step)
            throw InvalidArgument("grid_tabulated: tau grid must be uniform");
    const int d = static_cast<int>(values.front().rows());
    for (const auto& v : values)
        if (v.rows() != d || v.cols() != d)
            throw ShapeError("grid_tabulated: inconsistent sample shapes");
    return StationaryKernel{GridTabulated{std::move(tau), std::move(values)}};
}

int StationaryKernel::channels() const {
    return std::visit(
        [](const auto& f) -> int {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, CosineSum>)
                return static_cast<int>(f.lines.front().weight.rows());
            else if constexpr (std::is_same_v<T, ExponentialDecay>)
                return static_cast<int>(f.amplitude.rows());
            else if constexpr (std::is_same_v<T, WhiteApprox>)
                return static_cast<int>(f.diffusion.rows());
            else
                return static_cast<int>(f.values.front().rows());
        },
        form);
}

RealMatrix StationaryKernel::evaluate(double tau) const {
    const double at = std::abs(tau);
    return std::visit(
        [&](const auto& f) -> RealMatrix {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, CosineSum>) {
                RealMatrix out = RealMatrix::Zero(f.lines.front().weight.rows(),
                                                  f.lines.front().weight.cols());
                for (const auto& line : f.lines) out += line.weight * std::cos(line.omega * tau);
                return out;
            } else if constexpr (std::is_same_v<T, ExponentialDecay>) {
                return f.amplitude * std::exp(-at / f.tau_c);
            } else if constexpr (std::is_same_v<T, WhiteApprox>) {
                return f.diffusion * (f.cutoff / M_PI) * sinc(f.cutoff * at);
            } else {
                const double step = f.tau[1] - f.tau[0];
                const double pos = at / step;
                const auto i = static_cast<std::size_t>(std::floor(pos));
                if (i + 1 >= f.tau.size()) return RealMatrix::Zero(f.values.front().rows(),
                                                                   f.values.front().cols());
                const double w = pos - static_cast<double>(i);
                return (1.0 - w) * f.values[i] + w * f.values[i + 1];
            }
        },
        form);
}

bool kernel_is_psd(const StationaryKernel& k, double span, int grid_points, double tol) {
    const int d = k.channels();
    const int n = grid_points;
    RealMatrix block(n * d, n * d);
    const double dt = span / static_cast<double>(n - 1);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            block.block(a * d, b * d, d, d) = k.evaluate(dt * (a - b));
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (block + block.transpose()));
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    return es.eigenvalues().minCoeff() >= -tol * scale;
}

// ------------------------------------------------------------ operations

RealMatrix spectral_density(const StationaryKernel& k, double omega) {
    if (omega < 0.0) throw InvalidArgument("spectral_density: omega must be >= 0");
    return std::visit(
        [&](const auto& f) -> RealMatrix {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, CosineSum>) {
                throw UseModeListDirectly("spectral_density: cosine-sum kernels are discrete lines");
            } else if constexpr (std::is_same_v<T, ExponentialDecay>) {
                const double tc = f.tau_c;
                return f.amplitude * (2.0 / M_PI) * tc / (1.0 + omega * omega * tc * tc);
            } else if constexpr (std::is_same_v<T, WhiteApprox>) {
                if (omega < f.cutoff) return f.diffusion / M_PI;
                return RealMatrix::Zero(f.diffusion.rows(), f.diffusion.cols());
            } else {
                // Trapezoidal cosine transform over the tabulated range.
                const double step = f.tau[1] - f.tau[0];
                RealMatrix s = RealMatrix::Zero(f.values.front().rows(),
                                                f.values.front().cols());
                for (std::size_t i = 0; i < f.tau.size(); ++i) {
                    const double w = (i == 0 || i + 1 == f.tau.size()) ? 0.5 : 1.0;
                    s += w * f.values[i] * std::cos(omega * f.tau[i]);
                }
                s *= (2.0 / M_PI) * step;
                Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (s + s.transpose()));
                const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
                if (es.eigenvalues().minCoeff() < -1e-10 * scale * 100.0)
                    throw NotPositiveSemiDefinite(
                        "spectral_density: tabulated kernel density not PSD");
                return s;
            }
        },
        k.form);
}

ModeDecomposition factorize(const StationaryKernel& k, int mode_count, double omega_max) {
    if (const auto* cs = std::get_if<CosineSum>(&k.form)) {
        // Exact: one mode per line, K = G^{1/2}, no Δω factor.
        ModeDecomposition md;
        md.channels = k.channels();
        md.omega.resize(static_cast<Eigen::Index>(cs->lines.size()));
        md.kappa.reserve(cs->lines.size());
        md.delta_omega = 0.0;
        for (std::size_t m = 0; m < cs->lines.size(); ++m) {
            md.omega(static_cast<Eigen::Index>(m)) = cs->lines[m].omega;
            md.kappa.push_back(psd_sqrt(cs->lines[m].weight));
        }
        return md;
    }
    if (mode_count < 1) throw InvalidArgument("factorize: mode count must be >= 1");
    if (!(omega_max > 0.0)) throw InvalidArgument("factorize: omega_max must be positive");

    // Slowly decaying spectra (the Lorentzian) carry non-negligible mass above
    // omega_max; truncating there floors the reconstruction error at the tail
    // mass no matter how large M is. The midpoint grid is therefore continued
    // past omega_max until the remaining tail drops below a threshold that
    // shrinks as 1/M, so refining M keeps reducing the total error.
    int extra = 0;
    if (const auto* exp_form = std::get_if<ExponentialDecay>(&k.form)) {
        const double dw = omega_max / static_cast<double>(mode_count);
        const double tol = 0.2 / static_cast<double>(mode_count);
        double w_end = omega_max;
        // relative tail mass of the Lorentzian beyond w: (2/π) arctan(1/(w τ_c))
        while ((2.0 / M_PI) * std::atan(1.0 / (w_end * exp_form->tau_c)) > tol &&
               extra < 1 << 20) {
            w_end += dw;
            ++extra;
        }
    }

    ModeDecomposition md;
    md.channels = k.channels();
    md.delta_omega = omega_max / static_cast<double>(mode_count);
    const int total_modes = mode_count + extra;
    md.omega.resize(total_modes);
    md.kappa.reserve(static_cast<std::size_t>(total_modes));
    for (int m = 0; m < total_modes; ++m) {
        const double w = (static_cast<double>(m) + 0.5) * md.delta_omega;
        md.omega(m) = w;
        RealMatrix s = spectral_density(k, w) * md.delta_omega;
        md.kappa.push_back(psd_sqrt(s));
    }
    return md;
}

RealMatrix reconstruct(const ModeDecomposition& md, double tau) {
    RealMatrix out = RealMatrix::Zero(md.channels, md.channels);
    for (int m = 0; m < md.modes(); ++m)
        out += md.kappa[static_cast<std::size_t>(m)] *
               md.kappa[static_cast<std::size_t>(m)].transpose() * std::cos(md.omega(m) * tau);
    return out;
}

namespace {

// ∫₀ᵗ∫₀ᵗ cos(ω(u−v)) du dv = 2(1−cos ωt)/ω², continuous at ω = 0.
double cosine_double_integral(double omega, double t) {
    if (std::abs(omega * t) < 1e-6) {
        const double x = omega * t;
        return t * t * (1.0 - x * x / 12.0);
    }
    return 2.0 * (1.0 - std::cos(omega * t)) / (omega * omega);
}

}  // namespace

RealMatrix double_integral(const ModeDecomposition& md, double t) {
    if (t < 0.0) throw InvalidArgument("double_integral: t must be >= 0");
    RealMatrix out = RealMatrix::Zero(md.channels, md.channels);
    for (int m = 0; m < md.modes(); ++m)
        out += md.kappa[static_cast<std::size_t>(m)] *
               md.kappa[static_cast<std::size_t>(m)].transpose() *
               cosine_double_integral(md.omega(m), t);
    return out;
}

RealMatrix double_integral(const StationaryKernel& k, double t) {
    if (t < 0.0) throw InvalidArgument("double_integral: t must be >= 0");
    return std::visit(
        [&](const auto& f) -> RealMatrix {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, CosineSum>) {
                RealMatrix out = RealMatrix::Zero(f.lines.front().weight.rows(),
                                                  f.lines.front().weight.cols());
                for (const auto& line : f.lines)
                    out += line.weight * cosine_double_integral(line.omega, t);
                return out;
            } else if constexpr (std::is_same_v<T, ExponentialDecay>) {
                // 2a[τ_c t − τ_c²(1 − e^{−t/τ_c})]
                const double tc = f.tau_c;
                return 2.0 * f.amplitude * (tc * t - tc * tc * (1.0 - std::exp(-t / tc)));
            } else if constexpr (std::is_same_v<T, WhiteApprox>) {
                // (2/π)[t·Si(Ωt) − (1 − cos Ωt)/Ω] → t as Ω → ∞
                const double om = f.cutoff;
                const double val =
                    (2.0 / M_PI) * (t * sine_integral(om * t) - (1.0 - std::cos(om * t)) / om);
                return f.diffusion * val;
            } else {
                // Stationary reduction F(t) = 2∫₀ᵗ (t−τ) D(τ) dτ, trapezoid on the grid.
                const double step = f.tau[1] - f.tau[0];
                RealMatrix acc = RealMatrix::Zero(f.values.front().rows(),
                                                  f.values.front().cols());
                const double tmax = std::min(t, f.tau.back());
                const auto n_full = static_cast<std::size_t>(std::floor(tmax / step));
                for (std::size_t i = 0; i <= n_full && i < f.tau.size(); ++i) {
                    const double ti = f.tau[i];
                    const double w = (i == 0 || i == n_full) ? 0.5 : 1.0;
                    acc += w * (t - ti) * f.values[i] * step;
                }
                return 2.0 * acc;
            }
        },
        k.form);
}

// ------------------------------------------------------------ JSON round trip

std::string ModeDecomposition::to_json() const {
    nlohmann::ordered_json j;
    j["channels"] = channels;
    j["delta_omega"] = delta_omega;
    j["omega"] = std::vector<double>(omega.data(), omega.data() + omega.size());
    auto& kap = j["kappa"] = nlohmann::ordered_json::array();
    for (const auto& km : kappa) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (Eigen::Index r = 0; r < km.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(km.cols()));
            for (Eigen::Index c = 0; c < km.cols(); ++c)
                row[static_cast<std::size_t>(c)] = km(r, c);
            rows.push_back(row);
        }
        kap.push_back(rows);
    }
    return j.dump(2);
}

ModeDecomposition ModeDecomposition::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ModeDecomposition md;
    md.channels = j.at("channels").get<int>();
    md.delta_omega = j.value("delta_omega", 0.0);
    const auto om = j.at("omega").get<std::vector<double>>();
    md.omega.resize(static_cast<Eigen::Index>(om.size()));
    for (std::size_t i = 0; i < om.size(); ++i) md.omega(static_cast<Eigen::Index>(i)) = om[i];
    for (const auto& km : j.at("kappa")) {
        RealMatrix k(md.channels, md.channels);
        for (int r = 0; r < md.channels; ++r)
            for (int c = 0; c < md.channels; ++c)
                k(r, c) = km.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c))
                              .get<double>();
        md.kappa.push_back(k);
    }
    if (static_cast<int>(md.kappa.size()) != md.modes())
        throw ConfigError("ModeDecomposition: omega/kappa length mismatch");
    return md;
}

}  // namespace collapsar
