// rng.hpp — reproducible Gaussian streams.
//
// Ensembles derive one stream per trajectory from (master seed, trajectory
// index), so trajectories are independent and reproducible no matter how the
// work is scheduled. The normal transform is written out explicitly
// (polar Box-Muller on raw engine words) because std::normal_distribution is
// implementation-defined and would break the byte-identical-output contract.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace collapsar {

class GaussianStream {
  public:
    explicit GaussianStream(std::uint64_t seed, std::uint64_t stream = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                          static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream & 0xffffffffu),
                          static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    // Uniform in (0,1), 53-bit resolution.
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal, polar Box-Muller with one cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace collapsar
