// grid.hpp — uniform time grids shared by every propagator.

#pragma once

#include <cmath>
#include <vector>

#include "collapsar/errors.hpp"

namespace collapsar {

// Uniform grid t_n = n*dt, n = 0..steps. Immutable value type.
struct TimeGrid {
    double dt = 0.0;
    int steps = 0;

    double t(int n) const { return static_cast<double>(n) * dt; }
    int size() const { return steps + 1; }
    double total() const { return t(steps); }

    std::vector<double> times() const {
        std::vector<double> out(static_cast<std::size_t>(size()));
        for (int n = 0; n <= steps; ++n) out[static_cast<std::size_t>(n)] = t(n);
        return out;
    }

    bool operator==(const TimeGrid& other) const {
        return steps == other.steps &&
               std::abs(dt - other.dt) <= 1e-12 * std::max(std::abs(dt), std::abs(other.dt));
    }
    bool operator!=(const TimeGrid& other) const { return !(*this == other); }
};

inline TimeGrid make_grid(double total_time, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("make_grid: dt must be positive");
    if (!(total_time >= dt)) throw InvalidArgument("make_grid: total time must be at least dt");
    const int steps = static_cast<int>(std::llround(total_time / dt));
    return TimeGrid{dt, steps};
}

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* where) {
    if (a != b) throw GridMismatch(std::string(where) + ": time grids differ");
}

}  // namespace collapsar
