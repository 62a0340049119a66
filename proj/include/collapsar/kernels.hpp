// kernels.hpp — stationary noise kernels D_jk(t−s), their spectral densities,
// and the factorization into a finite set of oscillator modes
//   D̃_jk(τ) = Σ_m (K_m K_mᵀ)_jk cos(ω_m τ),   κ^ℓ_{k,m} = K_m(k,ℓ),
// which every propagator downstream consumes.

#pragma once

#include <string>
#include <variant>
#include <vector>

#include "collapsar/quantum.hpp"

namespace collapsar {

// ------------------------------------------------------------ kernel forms

// Discrete lines: D(τ) = Σ_m G_m cos(ω_m τ), G_m ⪰ 0.
struct CosineSum {
    struct Line {
        RealMatrix weight;  // G_m, D×D PSD
        double omega;       // ≥ 0
    };
    std::vector<Line> lines;
};

// D(τ) = amplitude · exp(−|τ|/tau_c).
struct ExponentialDecay {
    RealMatrix amplitude;  // D×D PSD
    double tau_c;          // > 0
};

// Band-limited white noise: D(τ) = diffusion · sin(Ω τ)/(π τ), flat spectrum
// diffusion/π on [0, Ω).
struct WhiteApprox {
    RealMatrix diffusion;  // D×D PSD (d_jk)
    double cutoff;         // Ω > 0
};

// Samples of D on a uniform τ grid starting at 0; even extension in τ with
// linear interpolation between nodes.
struct GridTabulated {
    std::vector<double> tau;          // uniform, tau[0] == 0
    std::vector<RealMatrix> values;   // one D×D matrix per node
};

struct StationaryKernel {
    std::variant<CosineSum, ExponentialDecay, WhiteApprox, GridTabulated> form;

    int channels() const;
    // D(τ); even under τ → −τ together with matrix transpose.
    RealMatrix evaluate(double tau) const;

    static StationaryKernel cosine_sum(std::vector<CosineSum::Line> lines);
    static StationaryKernel single_mode(double weight, double omega);  // scalar line
    static StationaryKernel exponential(RealMatrix amplitude, double tau_c);
    static StationaryKernel white(RealMatrix diffusion, double cutoff);
    static StationaryKernel white_scalar(double diffusion, double cutoff);
    static StationaryKernel grid_tabulated(std::vector<double> tau,
                                           std::vector<RealMatrix> values);
};

// PSD sanity check: block covariance over `grid_points` equally spaced times
// in [0, span] must have eigenvalues ≥ −tol (relative).
bool kernel_is_psd(const StationaryKernel& k, double span, int grid_points,
                   double tol = 1e-8);

// ------------------------------------------------------------ decomposition

struct ModeDecomposition {
    int channels = 0;                 // D
    RealVector omega;                 // M frequencies, ≥ 0
    std::vector<RealMatrix> kappa;    // M matrices K_m, D×D; κ^ℓ_{k,m} = K_m(k,ℓ)
    double delta_omega = 0.0;         // grid spacing (0 for exact line kernels)

    int modes() const { return static_cast<int>(omega.size()); }

    std::string to_json() const;
    static ModeDecomposition from_json(const std::string& text);
};

// ------------------------------------------------------------ operations

// S(ω) with D(τ) = ∫₀^∞ S(ω) cos(ωτ) dω. CosineSum has no density (its lines
// are exact) and throws UseModeListDirectly.
RealMatrix spectral_density(const StationaryKernel& k, double omega);

// Midpoint discretization ω_m = (m+½)·ω_max/M with K_m = √(S(ω_m)·Δω);
// CosineSum maps exactly, one mode per line with K = G^{1/2}.
ModeDecomposition factorize(const StationaryKernel& k, int mode_count, double omega_max);

// D̃(τ) = Σ_m K_m K_mᵀ cos(ω_m τ).
RealMatrix reconstruct(const ModeDecomposition& md, double tau);

// F(t) = ∫₀ᵗ∫₀ᵗ D(u−v) du dv.
RealMatrix double_integral(const StationaryKernel& k, double t);
RealMatrix double_integral(const ModeDecomposition& md, double t);

// ∫₀ˣ sin(u)/u du; used by the band-limited white kernel's closed forms.
double sine_integral(double x);

}  // namespace collapsar
