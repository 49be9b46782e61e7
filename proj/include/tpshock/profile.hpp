#pragma once

#include "tpshock/flux.hpp"
#include "tpshock/grid.hpp"

#include <numbers>
#include <vector>

namespace tpshock {

// Stationary viscous shock profile sampled on a uniform grid. The profile
// solves u' = f(u) - f(u_-) in the zero-speed frame, so the stored derivative
// comes from the flux itself rather than from differencing the samples.
struct ShockProfile {
    GridSpec grid;
    double period = 2.0 * std::numbers::pi;
    Vec x;
    Mat u;   // nx x N
    Mat ux;  // nx x N, ODE right-hand side evaluated at the samples
    Vec u_minus;
    Vec u_plus;
    double speed = 0.0;
    double tail_rate = 0.0;
    double residual = 0.0;  // max re-integration defect between neighbor nodes
    CharacteristicData chardata;
    FluxModel model;

    int dim() const { return static_cast<int>(u.cols()); }
    int nx() const { return static_cast<int>(u.rows()); }
    Vec at(int i) const { return u.row(i).transpose(); }
};

// Integrates the profile ODE along the one-dimensional connecting manifold
// (unstable at u_- for family 1, stable at u_+ for family N) and resamples to
// the grid, centered so the first component at x = 0 equals the midpoint.
ShockProfile solve_stationary_profile(const FluxModel& model, const Vec& u_minus,
                                      const Vec& u_plus, const GridSpec& grid);

// Least-squares decay rate of log|u(x) - u_pm| over the outer quarter of each
// half-domain, ignoring points at the floating-point floor; returns the
// smaller of the two sides.
double profile_tail_rate(const ShockProfile& profile);

// Time-periodic linearization coefficients stored through their temporal
// Fourier modes:
//   A(x, t) = m0(x) + sum_{k=1..K} 2 Re( mk(x) e^{2 pi i k t / T} ).
// Each N x N matrix is flattened column-major into one column of an
// (N*N) x nx array, so a whole-grid evaluation is a couple of axpys.
struct PeriodicCoefficientField {
    double period = 2.0 * std::numbers::pi;
    int dim = 1;
    Vec x;
    Mat mode0;                           // (N*N) x nx
    std::vector<Eigen::MatrixXcd> modes; // k = 1..K
    Mat dmode0;                          // x-derivatives, same layout
    std::vector<Eigen::MatrixXcd> dmodes;
    Mat limit_minus, limit_plus;         // N x N limits as x -> -/+ infinity

    int nx() const { return static_cast<int>(x.size()); }
    int kmax() const { return static_cast<int>(modes.size()); }

    Mat at(int i, double t) const;       // A(x_i, t), t reduced mod period
    void eval(double t, Mat& out) const; // all nodes, out is (N*N) x nx
    void eval_dx(double t, Mat& out) const;
};

// A(x,t) = f_u(profile) + eps * exp(-x^2/width^2) * cos(2 pi t / period) * B
// with B a fixed unit-norm matrix. eps = 0 reproduces the stationary
// linearization exactly.
PeriodicCoefficientField manufactured_periodic_coefficients(const ShockProfile& base,
                                                            double eps, double envelope_width,
                                                            double period);

// Space- and time-independent coefficients, mostly for oracle tests.
PeriodicCoefficientField constant_coefficient_field(const Mat& A0, const Vec& x, double period);

}  // namespace tpshock
