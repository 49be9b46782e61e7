#pragma once

#include "tpshock/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace tpshock {

enum class Boundary { outflow, dirichlet, periodic };

// Uniform grid on [-L, L] with x = 0 a node. dt = 0 means "use the default
// 0.4 * dx", which keeps the explicit flux stage well inside its stability
// bound for the speeds we run.
struct GridSpec {
    double L = 40.0;
    double dx = 0.05;
    double dt = 0.0;
    Boundary boundary = Boundary::outflow;

    void validate() const {
        if (L <= 0.0 || dx <= 0.0) throw ConfigError("grid: L and dx must be positive");
        const double ratio = L / dx;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
            throw ConfigError("grid: L must be an integer multiple of dx so x=0 is a node");
        }
        if (dt < 0.0) throw ConfigError("grid: dt must be nonnegative");
    }

    int nx() const { return 2 * static_cast<int>(std::round(L / dx)) + 1; }
    double x(int i) const { return -L + i * dx; }

    Eigen::VectorXd nodes() const {
        const int n = nx();
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = x(i);
        return v;
    }

    double time_step() const { return dt > 0.0 ? dt : 0.4 * dx; }
};

}  // namespace tpshock
