// noise.hpp — Gaussian noise machinery: Born-rule sampling of the bath
// quadrature variables, the linear map from those variables to the noise
// field, a dense-covariance oracle sampler, and covariance estimation.

#pragma once

#include <cstdint>
#include <vector>

#include "collapsar/grid.hpp"
#include "collapsar/kernels.hpp"
#include "collapsar/rng.hpp"

namespace collapsar {

// Quadrature pair (x⁺, x⁻) per (channel-factor ℓ, mode m). Born-sampled
// components are i.i.d. Gaussian with mean 0 and variance ½ (the vacuum
// position distribution of unit oscillators).
struct HiddenVariables {
    RealMatrix xplus;   // D×M
    RealMatrix xminus;  // D×M

    int channels() const { return static_cast<int>(xplus.rows()); }
    int modes() const { return static_cast<int>(xplus.cols()); }

    static HiddenVariables zero(int channels, int modes);
    std::string to_json() const;
};

// Vector noise field sampled on a uniform grid: values(k, n) = w_k(t_n).
struct NoiseTrajectory {
    TimeGrid grid;
    RealMatrix values;  // D×(steps+1)

    int channels() const { return static_cast<int>(values.rows()); }
    double w(int channel, int n) const { return values(channel, n); }
};

// Vacuum (Born-rule) sample of the hidden variables.
HiddenVariables sample_hidden(const ModeDecomposition& md, GaussianStream& rng);
HiddenVariables sample_hidden(const ModeDecomposition& md, std::uint64_t seed,
                              std::uint64_t stream = 0);

// w_k(t) = √2 Σ_{ℓ,m} κ^ℓ_{k,m} (cos(ω_m t) x⁺_{ℓ,m} + sin(ω_m t) x⁻_{ℓ,m});
// Born-sampled inputs give Cov[w_j(u) w_k(v)] = D̃_jk(u−v) exactly.
NoiseTrajectory noise_from_hidden(const HiddenVariables& x, const ModeDecomposition& md,
                                  const TimeGrid& grid);

// Noise values at one time, same linear map.
RealVector noise_from_hidden_at(const HiddenVariables& x, const ModeDecomposition& md,
                                double t);

// Oracle sampler: draws from the multivariate Gaussian with block covariance
// D_jk(t_n − t_n') by dense eigen-factorization of the grid covariance.
NoiseTrajectory sample_noise_dense(const StationaryKernel& k, const TimeGrid& grid,
                                   GaussianStream& rng);
NoiseTrajectory sample_noise_dense(const StationaryKernel& k, const TimeGrid& grid,
                                   std::uint64_t seed, std::uint64_t stream = 0);

// Unbiased empirical covariance of an ensemble sharing one grid, with the
// Monte Carlo standard error of every entry. Entries are indexed by the
// flattened (time, channel) pair a = n*D + j.
struct CovarianceEstimate {
    RealMatrix covariance;  // (N+1)D × (N+1)D
    RealMatrix stderr_;     // same shape
    RealVector mean;        // (N+1)D
    int samples = 0;
};

CovarianceEstimate estimate_covariance(const std::vector<NoiseTrajectory>& trajectories);

}  // namespace collapsar
