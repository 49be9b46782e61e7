#pragma once

#include "tpshock/flux.hpp"
#include "tpshock/grid.hpp"
#include "tpshock/profile.hpp"

#include <vector>

namespace tpshock {

// One time slice of a solution: nx rows, one column per component.
using Field = Mat;

struct Trajectory {
    GridSpec grid;
    std::vector<double> times;
    std::vector<Field> states;

    const Field& back() const { return states.back(); }
};

// IMEX evolution of u_t + f(u)_x = u_xx: Crank-Nicolson diffusion (tridiagonal
// solve per component), explicit conservative flux differencing. Boundary rule
// comes from the grid (outflow extrapolation by default). Snapshots every
// snap_every time units; 0 keeps only the initial and final slices.
Trajectory evolve_nonlinear(const FluxModel& model, const Field& u0, double t_final,
                            const GridSpec& grid, double snap_every = 0.0);

// v_t = v_xx - (A(x,t) v)_x - damping * v from time s to t.
Field evolve_linearized(const PeriodicCoefficientField& coeffs, const Field& v0, double s,
                        double t, const GridSpec& grid, double damping = 0.0);

// Evolves the formal adjoint w_t = w_xx + A^T(x,t) w_x backward across
// [anchor - duration, anchor] in forward time; w0 lives at `anchor`
// (default: anchor = duration). Each step is the exact transpose of the
// corresponding forward step, so discrete duality holds to roundoff.
// Requires dirichlet or periodic boundaries.
Field adjoint_evolve(const PeriodicCoefficientField& coeffs, const Field& w0, double duration,
                     const GridSpec& grid, double anchor = -1.0, double damping = 0.0);

// Trapezoid integral per component.
Vec mass(const Field& v, const GridSpec& grid);

// Discrete || (1+x^2)^{weight_power} v ||_{H^order} with centered differences;
// derivatives up to order 3 are supported.
double weighted_sobolev_norm(const Field& v, const GridSpec& grid, int order = 3,
                             double weight_power = 0.75);

// The stepping core, exposed for modules that drive it manually (monodromy
// columns, parametrix marching, iteration-map bookkeeping). A stepper holds
// work buffers, so each thread needs its own instance.
class LinearStepper {
public:
    LinearStepper(const PeriodicCoefficientField& coeffs, const GridSpec& grid, double dt,
                  double damping, Boundary boundary);
    // Coefficient-free variant used by the nonlinear path.
    LinearStepper(const GridSpec& grid, double dt, int dim, Boundary boundary);

    double dt() const { return dt_; }
    int nx() const { return nx_; }
    int dim() const { return dim_; }

    // One step of v_{n+1} = K_-^{-1} (K_+ v_n - dt D_f(A(t) v_n)).
    void step(Field& v, double t);
    // Same plus dt * force (force sampled by the caller, usually at t+dt/2).
    void step_forced(Field& v, double t, const Field& force);
    // Exact transpose of step(., t).
    void step_adjoint(Field& w, double t);
    // u_{n+1} = K_-^{-1} (K_+ u_n - dt D_f(f(u_n))).
    void step_nonlinear(const FluxModel& model, Field& u);

private:
    void factor();
    const Field& coefficients_at(double t);
    void apply_laplacian(const Field& v, Field& out) const;
    void apply_k_plus(const Field& v, Field& out) const;
    void solve_k_minus(Field& v) const;
    void coefficient_times(const Field& v, double t, Field& out);
    void apply_flux_divergence(const Field& g, Field& out) const;
    void apply_flux_divergence_transpose(const Field& z, Field& out) const;
    void enforce_boundary(Field& v) const;

    const PeriodicCoefficientField* coeffs_;
    GridSpec grid_;
    double dt_;
    double damping_;
    Boundary boundary_;
    int nx_;
    int dim_;
    double inv_dx2_;

    // Thomas factorization of K_- (same for every component).
    Vec thomas_inv_, thomas_cp_;
    double off_ = 0.0;    // constant sub/super diagonal of K_-
    int sys_lo_, sys_n_;  // row range the implicit solve acts on
    // Sherman-Morrison data for the periodic (cyclic) solve.
    Vec cyc_q_;
    double cyc_gamma_ = 0.0, cyc_denom_ = 1.0;

    Mat coef_buf_;  // (N*N) x nx
    bool coef_cached_ = false;
    Field work_a_, work_b_, work_c_;
};

}  // namespace tpshock
