// oracles.hpp — independent reference implementations used only by tests:
// brute-force constructions and quadratures the library code never touches.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "collapsar/quantum.hpp"

namespace oracles {

using collapsar::Complex;
using collapsar::Matrix;
using collapsar::RealMatrix;
using collapsar::RealVector;
using collapsar::Vector;

// Plain 200-term Taylor series for exp(M); independent of the library's
// Padé/scaling route.
inline Matrix taylor_exp(const Matrix& m, int terms = 200) {
    Matrix acc = Matrix::Identity(m.rows(), m.cols());
    Matrix pow = Matrix::Identity(m.rows(), m.cols());
    for (int k = 1; k <= terms; ++k) {
        pow = pow * m / static_cast<double>(k);
        acc += pow;
    }
    return acc;
}

// Explicit Kronecker product chain for embedding checks.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Index-summation partial trace for a bipartite split dA ⊗ dB, keeping A.
inline Matrix ptrace_keep_first(const Matrix& rho, int da, int db) {
    Matrix out = Matrix::Zero(da, da);
    for (int i = 0; i < da; ++i)
        for (int j = 0; j < da; ++j) {
            Complex s = 0.0;
            for (int b = 0; b < db; ++b) s += rho(i * db + b, j * db + b);
            out(i, j) = s;
        }
    return out;
}

inline Matrix ptrace_keep_second(const Matrix& rho, int da, int db) {
    Matrix out = Matrix::Zero(db, db);
    for (int i = 0; i < db; ++i)
        for (int j = 0; j < db; ++j) {
            Complex s = 0.0;
            for (int a = 0; a < da; ++a) s += rho(a * db + i, a * db + j);
            out(i, j) = s;
        }
    return out;
}

// Gauss–Hermite nodes/weights (weight e^{−x²}) by Golub–Welsch.
struct GaussHermite {
    std::vector<double> nodes, weights;
};

inline GaussHermite gauss_hermite(int n) {
    RealMatrix jac = RealMatrix::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double off = std::sqrt(0.5 * i);
        jac(i - 1, i) = off;
        jac(i, i - 1) = off;
    }
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(jac);
    GaussHermite gh;
    gh.nodes.resize(static_cast<std::size_t>(n));
    gh.weights.resize(static_cast<std::size_t>(n));
    const double mu0 = std::sqrt(M_PI);
    for (int i = 0; i < n; ++i) {
        gh.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        gh.weights[static_cast<std::size_t>(i)] = mu0 * v0 * v0;
    }
    return gh;
}

// 2-D trapezoid quadrature of f(u,v) over [0,t]².
template <typename F>
double trapezoid_2d(const F& f, double t, int n) {
    const double h = t / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
            const double wi = (i == 0 || i == n) ? 0.5 : 1.0;
            const double wj = (j == 0 || j == n) ? 0.5 : 1.0;
            acc += wi * wj * f(i * h, j * h);
        }
    return acc * h * h;
}

// Sample mean and standard error.
struct MeanStderr {
    double mean = 0.0, stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    return MeanStderr{mean, std::sqrt(var / n)};
}

// Two-sample Kolmogorov–Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        const double fa = static_cast<double>(i) / static_cast<double>(a.size());
        const double fb = static_cast<double>(j) / static_cast<double>(b.size());
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

// One-sample KS statistic against a tabulated CDF (parallel sorted grids).
inline double ks_one_sample(std::vector<double> samples, const std::vector<double>& grid,
                            const std::vector<double>& cdf) {
    std::sort(samples.begin(), samples.end());
    double d = 0.0;
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        // CDF value at the sample by linear interpolation on the grid
        const double x = samples[i];
        auto it = std::lower_bound(grid.begin(), grid.end(), x);
        double f;
        if (it == grid.begin())
            f = cdf.front();
        else if (it == grid.end())
            f = cdf.back();
        else {
            const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
            const double w = (x - grid[hi - 1]) / (grid[hi] - grid[hi - 1]);
            f = (1.0 - w) * cdf[hi - 1] + w * cdf[hi];
        }
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    }
    return d;
}

}  // namespace oracles
