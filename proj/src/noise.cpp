#include "collapsar/noise.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

#include "nlohmann/json.hpp"

namespace collapsar {

HiddenVariables HiddenVariables::zero(int channels, int modes) {
    return HiddenVariables{RealMatrix::Zero(channels, modes), RealMatrix::Zero(channels, modes)};
}

std::string HiddenVariables::to_json() const {
    // Flattened ℓ-major: index ℓ*M + m.
    nlohmann::ordered_json j;
    std::vector<double> xp, xm;
    for (int l = 0; l < channels(); ++l)
        for (int m = 0; m < modes(); ++m) {
            xp.push_back(xplus(l, m));
            xm.push_back(xminus(l, m));
        }
    j["xplus"] = xp;
    j["xminus"] = xm;
    return j.dump(2);
}

HiddenVariables sample_hidden(const ModeDecomposition& md, GaussianStream& rng) {
    const double sigma = 1.0 / std::sqrt(2.0);  // vacuum variance 1/2
    HiddenVariables x = HiddenVariables::zero(md.channels, md.modes());
    for (int l = 0; l < md.channels; ++l)
        for (int m = 0; m < md.modes(); ++m) x.xplus(l, m) = rng.normal(0.0, sigma);
    for (int l = 0; l < md.channels; ++l)
        for (int m = 0; m < md.modes(); ++m) x.xminus(l, m) = rng.normal(0.0, sigma);
    return x;
}

HiddenVariables sample_hidden(const ModeDecomposition& md, std::uint64_t seed,
                              std::uint64_t stream) {
    GaussianStream rng(seed, stream);
    return sample_hidden(md, rng);
}

namespace {

// Per-mode channel amplitudes y±_m = √2 K_m x±_col(m); the time loop then
// only mixes them with trig factors.
struct ModeAmplitudes {
    RealMatrix plus;   // D×M
    RealMatrix minus;  // D×M
};

ModeAmplitudes mode_amplitudes(const HiddenVariables& x, const ModeDecomposition& md) {
    if (x.channels() != md.channels || x.modes() != md.modes())
        throw ShapeError("noise_from_hidden: hidden-variable shape does not match modes");
    const double root2 = std::sqrt(2.0);
    ModeAmplitudes y{RealMatrix(md.channels, md.modes()), RealMatrix(md.channels, md.modes())};
    for (int m = 0; m < md.modes(); ++m) {
        y.plus.col(m) = root2 * md.kappa[static_cast<std::size_t>(m)] * x.xplus.col(m);
        y.minus.col(m) = root2 * md.kappa[static_cast<std::size_t>(m)] * x.xminus.col(m);
    }
    return y;
}

}  // namespace

RealVector noise_from_hidden_at(const HiddenVariables& x, const ModeDecomposition& md,
                                double t) {
    const ModeAmplitudes y = mode_amplitudes(x, md);
    RealVector w = RealVector::Zero(md.channels);
    for (int m = 0; m < md.modes(); ++m)
        w += std::cos(md.omega(m) * t) * y.plus.col(m) + std::sin(md.omega(m) * t) * y.minus.col(m);
    return w;
}

NoiseTrajectory noise_from_hidden(const HiddenVariables& x, const ModeDecomposition& md,
                                  const TimeGrid& grid) {
    const ModeAmplitudes y = mode_amplitudes(x, md);
    NoiseTrajectory traj{grid, RealMatrix::Zero(md.channels, grid.size())};
    const int d = md.channels;
    for (int n = 0; n <= grid.steps; ++n) {
        const double t = grid.t(n);
        double* col = traj.values.data() + static_cast<std::ptrdiff_t>(n) * d;
        for (int m = 0; m < md.modes(); ++m) {
            const double c = std::cos(md.omega(m) * t);
            const double s = std::sin(md.omega(m) * t);
            const double* yp = y.plus.data() + static_cast<std::ptrdiff_t>(m) * d;
            const double* ym = y.minus.data() + static_cast<std::ptrdiff_t>(m) * d;
            for (int k = 0; k < d; ++k) col[k] += c * yp[k] + s * ym[k];
        }
    }
    return traj;
}

NoiseTrajectory sample_noise_dense(const StationaryKernel& k, const TimeGrid& grid,
                                   GaussianStream& rng) {
    const int d = k.channels();
    const int n = grid.size();
    const int total = n * d;
    RealMatrix cov(total, total);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            cov.block(a * d, b * d, d, d) = k.evaluate(grid.t(a) - grid.t(b));

    Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (cov + cov.transpose()));
    RealVector ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-8 * scale)
            throw NotPositiveSemiDefinite("sample_noise_dense: grid covariance not PSD");
        ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    }
    RealVector z(total);
    for (int i = 0; i < total; ++i) z(i) = rng.normal();
    RealVector w = es.eigenvectors() * (ev.asDiagonal() * z);

    NoiseTrajectory traj{grid, RealMatrix::Zero(d, n)};
    for (int a = 0; a < n; ++a)
        for (int j = 0; j < d; ++j) traj.values(j, a) = w(a * d + j);
    return traj;
}

NoiseTrajectory sample_noise_dense(const StationaryKernel& k, const TimeGrid& grid,
                                   std::uint64_t seed, std::uint64_t stream) {
    GaussianStream rng(seed, stream);
    return sample_noise_dense(k, grid, rng);
}

CovarianceEstimate estimate_covariance(const std::vector<NoiseTrajectory>& trajectories) {
    if (trajectories.size() < 2)
        throw InvalidArgument("estimate_covariance: need at least two trajectories");
    const TimeGrid grid = trajectories.front().grid;
    const int d = trajectories.front().channels();
    for (const auto& tr : trajectories) {
        require_same_grid(grid, tr.grid, "estimate_covariance");
        if (tr.channels() != d) throw ShapeError("estimate_covariance: channel mismatch");
    }
    const int total = grid.size() * d;
    const int ns = static_cast<int>(trajectories.size());

    RealVector mean = RealVector::Zero(total);
    auto flatten = [&](const NoiseTrajectory& tr) {
        RealVector v(total);
        for (int n = 0; n < grid.size(); ++n)
            for (int j = 0; j < d; ++j) v(n * d + j) = tr.values(j, n);
        return v;
    };
    for (const auto& tr : trajectories) mean += flatten(tr);
    mean /= static_cast<double>(ns);

    RealMatrix cov = RealMatrix::Zero(total, total);
    RealMatrix second = RealMatrix::Zero(total, total);  // of centered products
    for (const auto& tr : trajectories) {
        const RealVector c = flatten(tr) - mean;
        const RealMatrix prod = c * c.transpose();
        cov += prod;
        second += prod.cwiseProduct(prod);
    }
    CovarianceEstimate est;
    est.samples = ns;
    est.mean = mean;
    est.covariance = cov / static_cast<double>(ns - 1);
    // Standard error of the mean of the centered products.
    RealMatrix var_of_prod =
        (second - cov.cwiseProduct(cov) / static_cast<double>(ns)) / static_cast<double>(ns - 1);
    est.stderr_ = (var_of_prod.cwiseMax(0.0) / static_cast<double>(ns)).cwiseSqrt();
    return est;
}

}  // namespace collapsar
