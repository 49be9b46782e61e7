#include "tpshock/pde.hpp"

#include "tpshock/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tpshock {

namespace {

constexpr double kBlowUpFactor = 1e3;
constexpr double kCflMargin = 1.9;  // von Neumann bound is 2/a^2 (k -> 0)

void check_field(const Field& v, int nx, int dim, const char* who) {
    if (v.rows() != nx || v.cols() != dim) {
        throw NumericalError("DimensionMismatch", std::string(who) + ": field shape mismatch");
    }
    if (!v.allFinite()) throw ConfigError(std::string(who) + ": field has non-finite entries");
}

// Upper bound on the spectral radius of every A(x_i, t) in the field.
double coefficient_speed_bound(const PeriodicCoefficientField& c) {
    double b = c.mode0.cwiseAbs().colwise().sum().maxCoeff();
    for (const auto& m : c.modes) b += 2.0 * m.cwiseAbs().colwise().sum().maxCoeff();
    return b;
}

double state_speed_bound(const FluxModel& model, const Field& u) {
    double b = 0.0;
    for (int i = 0; i < u.rows(); ++i) {
        const Mat j = model.f_u(u.row(i).transpose());
        b = std::max(b, j.cwiseAbs().rowwise().sum().maxCoeff());
    }
    return b;
}

void check_cfl(double dt, double speed_bound) {
    if (speed_bound <= 0.0) return;
    const double limit = kCflMargin / (speed_bound * speed_bound);
    if (dt > limit) {
        throw NumericalError("CFLViolation",
                             "dt = " + std::to_string(dt) + " exceeds the explicit-flux bound " +
                                 std::to_string(limit) + " for speed " +
                                 std::to_string(speed_bound));
    }
}

struct StepCount {
    long n;
    double dt;
};

StepCount split_interval(double duration, double dt_base) {
    const long n = std::max(1L, std::lround(duration / dt_base));
    return {n, duration / static_cast<double>(n)};
}

void pin_boundary(Field& v, Boundary boundary) {
    if (boundary == Boundary::dirichlet) {
        v.row(0).setZero();
        v.row(v.rows() - 1).setZero();
    } else if (boundary == Boundary::periodic) {
        v.row(v.rows() - 1) = v.row(0);
    }
}

}  // namespace

LinearStepper::LinearStepper(const PeriodicCoefficientField& coeffs, const GridSpec& grid,
                             double dt, double damping, Boundary boundary)
    : LinearStepper(grid, dt, coeffs.dim, boundary) {
    coeffs_ = &coeffs;
    coef_buf_.resize(dim_ * dim_, nx_);
    if (damping != 0.0) {
        damping_ = damping;
        factor();
    }
}

LinearStepper::LinearStepper(const GridSpec& grid, double dt, int dim, Boundary boundary)
    : coeffs_(nullptr),
      grid_(grid),
      dt_(dt),
      damping_(0.0),
      boundary_(boundary),
      nx_(grid.nx()),
      dim_(dim),
      inv_dx2_(1.0 / (grid.dx * grid.dx)) {
    grid_.validate();
    if (dt <= 0.0) throw ConfigError("stepper: dt must be positive");
    if (dim < 1) throw ConfigError("stepper: dim must be positive");

    switch (boundary_) {
        case Boundary::dirichlet:
            sys_lo_ = 1;
            sys_n_ = nx_ - 2;
            break;
        case Boundary::outflow:
            sys_lo_ = 0;
            sys_n_ = nx_;
            break;
        case Boundary::periodic:
            sys_lo_ = 0;
            sys_n_ = nx_ - 1;
            break;
    }
    factor();

    work_a_.resize(nx_, dim_);
    work_b_.resize(nx_, dim_);
    work_c_.resize(nx_, dim_);
}

// Thomas factorization of K_- = (1 + dt*damping/2) I - (dt/2) D2. Outflow
// wall rows use the one-sided (Neumann-type) second difference, so their
// diagonal loses one r; the periodic corner entries are peeled off with a
// rank-one (Sherman-Morrison) correction.
void LinearStepper::factor() {
    const double r = 0.5 * dt_ * inv_dx2_;
    const double mu = 1.0 + 0.5 * dt_ * damping_;
    off_ = -r;

    Vec diag = Vec::Constant(sys_n_, mu + 2.0 * r);
    if (boundary_ == Boundary::outflow) {
        diag[0] = mu + r;
        diag[sys_n_ - 1] = mu + r;
    }
    if (boundary_ == Boundary::periodic) {
        cyc_gamma_ = -(mu + 2.0 * r);
        diag[0] -= cyc_gamma_;
        diag[sys_n_ - 1] -= off_ * off_ / cyc_gamma_;
    }

    thomas_inv_.resize(sys_n_);
    thomas_cp_.resize(sys_n_);
    thomas_inv_[0] = 1.0 / diag[0];
    thomas_cp_[0] = off_ * thomas_inv_[0];
    for (int i = 1; i < sys_n_; ++i) {
        thomas_inv_[i] = 1.0 / (diag[i] - off_ * thomas_cp_[i - 1]);
        thomas_cp_[i] = off_ * thomas_inv_[i];
    }

    if (boundary_ == Boundary::periodic) {
        Vec q = Vec::Zero(sys_n_);
        q[0] = cyc_gamma_;
        q[sys_n_ - 1] = off_;
        q[0] *= thomas_inv_[0];
        for (int i = 1; i < sys_n_; ++i) q[i] = (q[i] - off_ * q[i - 1]) * thomas_inv_[i];
        for (int i = sys_n_ - 2; i >= 0; --i) q[i] -= thomas_cp_[i] * q[i + 1];
        cyc_q_ = q;
        cyc_denom_ = 1.0 + q[0] + (off_ / cyc_gamma_) * q[sys_n_ - 1];
    }
}

void LinearStepper::apply_laplacian(const Field& v, Field& out) const {
    const int n = nx_;
    out.resize(n, dim_);
    for (int c = 0; c < dim_; ++c) {
        auto vc = v.col(c);
        auto oc = out.col(c);
        oc.segment(1, n - 2) =
            (vc.segment(0, n - 2) - 2.0 * vc.segment(1, n - 2) + vc.segment(2, n - 2)) * inv_dx2_;
        switch (boundary_) {
            case Boundary::dirichlet:
                oc[0] = 0.0;
                oc[n - 1] = 0.0;
                break;
            case Boundary::outflow:
                oc[0] = (vc[1] - vc[0]) * inv_dx2_;
                oc[n - 1] = (vc[n - 2] - vc[n - 1]) * inv_dx2_;
                break;
            case Boundary::periodic: {
                const int m = n - 1;  // distinct nodes
                oc[0] = (vc[m - 1] - 2.0 * vc[0] + vc[1]) * inv_dx2_;
                oc[m - 1] = (vc[m - 2] - 2.0 * vc[m - 1] + vc[0]) * inv_dx2_;
                oc[n - 1] = oc[0];
                break;
            }
        }
    }
}

void LinearStepper::apply_k_plus(const Field& v, Field& out) const {
    apply_laplacian(v, out);
    out = (1.0 - 0.5 * dt_ * damping_) * v + (0.5 * dt_) * out;
}

void LinearStepper::solve_k_minus(Field& v) const {
    const int lo = sys_lo_;
    const int m = sys_n_;
    for (int c = 0; c < dim_; ++c) {
        auto vc = v.col(c);
        // forward sweep
        vc[lo] *= thomas_inv_[0];
        for (int i = 1; i < m; ++i) {
            vc[lo + i] = (vc[lo + i] - off_ * vc[lo + i - 1]) * thomas_inv_[i];
        }
        // back substitution
        for (int i = m - 2; i >= 0; --i) {
            vc[lo + i] -= thomas_cp_[i] * vc[lo + i + 1];
        }
        if (boundary_ == Boundary::periodic) {
            const double vz = vc[0] + (off_ / cyc_gamma_) * vc[m - 1];
            const double factor = vz / cyc_denom_;
            vc.segment(0, m) -= factor * cyc_q_;
            vc[nx_ - 1] = vc[0];
        }
    }
}

// Time-constant fields (no oscillatory modes) are evaluated once and reused.
const Field& LinearStepper::coefficients_at(double t) {
    if (coeffs_->kmax() > 0 || !coef_cached_) {
        coeffs_->eval(t, coef_buf_);
        coef_cached_ = true;
    }
    return coef_buf_;
}

void LinearStepper::coefficient_times(const Field& v, double t, Field& out) {
    const Mat& a_all = coefficients_at(t);
    out.resize(nx_, dim_);
    if (dim_ == 1) {
        out.col(0) = a_all.row(0).transpose().cwiseProduct(v.col(0));
        return;
    }
    for (int i = 0; i < nx_; ++i) {
        const Eigen::Map<const Mat> a(a_all.col(i).data(), dim_, dim_);
        out.row(i) = (a * v.row(i).transpose()).transpose();
    }
}

void LinearStepper::apply_flux_divergence(const Field& g, Field& out) const {
    const int n = nx_;
    const double c3 = 1.0 / (2.0 * grid_.dx);
    const double c5 = 1.0 / (24.0 * grid_.dx);
    out.resize(n, dim_);

    for (int c = 0; c < dim_; ++c) {
        auto gc = g.col(c);
        auto oc = out.col(c);
        if (boundary_ == Boundary::periodic) {
            const int m = n - 1;
            for (int i = 0; i < m; ++i) {
                const auto at = [&](int k) { return gc[((k % m) + m) % m]; };
                oc[i] = (14.0 * (at(i + 1) - at(i - 1)) - (at(i + 2) - at(i - 2))) * c5;
            }
            oc[n - 1] = oc[0];
            continue;
        }
        // Interior: the truncation-matched 5-point conservative stencil; the
        // two rows beside each wall fall back to plain central differencing.
        const int m5 = n - 4;
        oc.segment(2, m5) = (14.0 * (gc.segment(3, m5) - gc.segment(1, m5)) -
                             (gc.segment(4, m5) - gc.segment(0, m5))) *
                            c5;
        oc[1] = (gc[2] - gc[0]) * c3;
        oc[n - 2] = (gc[n - 1] - gc[n - 3]) * c3;
        if (boundary_ == Boundary::outflow) {
            oc[0] = (-3.0 * gc[0] + 4.0 * gc[1] - gc[2]) * c3;
            oc[n - 1] = (3.0 * gc[n - 1] - 4.0 * gc[n - 2] + gc[n - 3]) * c3;
        } else {
            oc[0] = 0.0;
            oc[n - 1] = 0.0;
        }
    }
}

void LinearStepper::apply_flux_divergence_transpose(const Field& z, Field& out) const {
    const int n = nx_;
    const double c3 = 1.0 / (2.0 * grid_.dx);
    const double c5 = 1.0 / (24.0 * grid_.dx);
    out.setZero(n, dim_);

    if (boundary_ == Boundary::periodic) {
        // The periodic stencil is circulant and antisymmetric.
        apply_flux_divergence(z, out);
        out = -out;
        return;
    }
    if (boundary_ != Boundary::dirichlet) {
        throw ConfigError("adjoint stepping requires dirichlet or periodic boundaries");
    }
    for (int c = 0; c < dim_; ++c) {
        auto zc = z.col(c);
        auto oc = out.col(c);
        for (const int i : {1, n - 2}) {
            oc[i - 1] -= zc[i] * c3;
            oc[i + 1] += zc[i] * c3;
        }
        for (int i = 2; i <= n - 3; ++i) {
            oc[i - 2] += zc[i] * c5;
            oc[i - 1] -= 14.0 * zc[i] * c5;
            oc[i + 1] += 14.0 * zc[i] * c5;
            oc[i + 2] -= zc[i] * c5;
        }
        oc[0] = 0.0;
        oc[n - 1] = 0.0;
    }
}

void LinearStepper::enforce_boundary(Field& v) const {
    if (boundary_ == Boundary::dirichlet) {
        v.row(0).setZero();
        v.row(nx_ - 1).setZero();
    } else if (boundary_ == Boundary::periodic) {
        v.row(nx_ - 1) = v.row(0);
    }
}

void LinearStepper::step(Field& v, double t) {
    coefficient_times(v, t, work_a_);
    apply_flux_divergence(work_a_, work_b_);
    apply_k_plus(v, work_c_);
    v = work_c_ - dt_ * work_b_;
    solve_k_minus(v);
    enforce_boundary(v);
}

void LinearStepper::step_forced(Field& v, double t, const Field& force) {
    coefficient_times(v, t, work_a_);
    apply_flux_divergence(work_a_, work_b_);
    apply_k_plus(v, work_c_);
    v = work_c_ - dt_ * work_b_ + dt_ * force;
    solve_k_minus(v);
    enforce_boundary(v);
}

void LinearStepper::step_adjoint(Field& w, double t) {
    if (boundary_ == Boundary::outflow) {
        throw ConfigError("adjoint stepping requires dirichlet or periodic boundaries");
    }
    solve_k_minus(w);
    enforce_boundary(w);
    apply_flux_divergence_transpose(w, work_b_);
    // A^T acting nodewise on Df^T w.
    const Mat& a_all = coefficients_at(t);
    if (dim_ == 1) {
        work_a_.col(0) = a_all.row(0).transpose().cwiseProduct(work_b_.col(0));
    } else {
        for (int i = 0; i < nx_; ++i) {
            const Eigen::Map<const Mat> a(a_all.col(i).data(), dim_, dim_);
            work_a_.row(i) = (a.transpose() * work_b_.row(i).transpose()).transpose();
        }
    }
    apply_k_plus(w, work_c_);
    w = work_c_ - dt_ * work_a_;
    enforce_boundary(w);
}

void LinearStepper::step_nonlinear(const FluxModel& model, Field& u) {
    for (int i = 0; i < nx_; ++i) {
        work_a_.row(i) = model.f(u.row(i).transpose()).transpose();
    }
    apply_flux_divergence(work_a_, work_b_);
    apply_k_plus(u, work_c_);
    u = work_c_ - dt_ * work_b_;
    solve_k_minus(u);
    enforce_boundary(u);
}

Trajectory evolve_nonlinear(const FluxModel& model, const Field& u0, double t_final,
                            const GridSpec& grid, double snap_every) {
    grid.validate();
    if (grid.boundary != Boundary::outflow) {
        throw ConfigError("evolve_nonlinear supports outflow boundaries only");
    }
    check_field(u0, grid.nx(), model.dim, "evolve_nonlinear");
    if (t_final <= 0.0) throw ConfigError("evolve_nonlinear: t_final must be positive");

    const auto [nsteps, dte] = split_interval(t_final, grid.time_step());
    check_cfl(dte, state_speed_bound(model, u0));

    LinearStepper stepper(grid, dte, model.dim, Boundary::outflow);
    const double blow_at = kBlowUpFactor * std::max(1.0, u0.cwiseAbs().maxCoeff());
    const long snap_stride =
        snap_every > 0.0 ? std::max(1L, std::lround(snap_every / dte)) : nsteps;

    Trajectory traj;
    traj.grid = grid;
    traj.times.push_back(0.0);
    traj.states.push_back(u0);

    Field u = u0;
    for (long k = 0; k < nsteps; ++k) {
        stepper.step_nonlinear(model, u);
        if (!u.allFinite() || u.cwiseAbs().maxCoeff() > blow_at) {
            throw NumericalError("BlowUp", "solution exceeded " + std::to_string(blow_at) +
                                               " at t = " + std::to_string((k + 1) * dte));
        }
        if ((k + 1) % snap_stride == 0 || k + 1 == nsteps) {
            traj.times.push_back((k + 1) * dte);
            traj.states.push_back(u);
        }
    }
    return traj;
}

Field evolve_linearized(const PeriodicCoefficientField& coeffs, const Field& v0, double s,
                        double t, const GridSpec& grid, double damping) {
    grid.validate();
    check_field(v0, grid.nx(), coeffs.dim, "evolve_linearized");
    if (t < s) throw ConfigError("evolve_linearized: t must be >= s");
    if (t == s) return v0;

    const auto [nsteps, dte] = split_interval(t - s, grid.time_step());
    check_cfl(dte, coefficient_speed_bound(coeffs));

    LinearStepper stepper(coeffs, grid, dte, damping, grid.boundary);
    const double blow_at = kBlowUpFactor * std::max(1.0, v0.cwiseAbs().maxCoeff());

    Field v = v0;
    pin_boundary(v, grid.boundary);
    for (long k = 0; k < nsteps; ++k) {
        stepper.step(v, s + k * dte);
        if ((k & 7) == 0 || k + 1 == nsteps) {
            if (!v.allFinite() || v.cwiseAbs().maxCoeff() > blow_at) {
                throw NumericalError("BlowUp", "linearized solution exceeded " +
                                                   std::to_string(blow_at) + " at t = " +
                                                   std::to_string(s + (k + 1) * dte));
            }
        }
    }
    return v;
}

Field adjoint_evolve(const PeriodicCoefficientField& coeffs, const Field& w0, double duration,
                     const GridSpec& grid, double anchor, double damping) {
    grid.validate();
    check_field(w0, grid.nx(), coeffs.dim, "adjoint_evolve");
    if (duration <= 0.0) throw ConfigError("adjoint_evolve: duration must be positive");
    if (grid.boundary == Boundary::outflow) {
        throw ConfigError("adjoint_evolve requires dirichlet or periodic boundaries");
    }
    if (anchor < 0.0) anchor = duration;

    const auto [nsteps, dte] = split_interval(duration, grid.time_step());
    check_cfl(dte, coefficient_speed_bound(coeffs));

    LinearStepper stepper(coeffs, grid, dte, damping, grid.boundary);
    Field w = w0;
    pin_boundary(w, grid.boundary);
    for (long k = nsteps - 1; k >= 0; --k) {
        stepper.step_adjoint(w, anchor - duration + k * dte);
        if (!w.allFinite()) {
            throw NumericalError("BlowUp", "adjoint solution lost finiteness");
        }
    }
    return w;
}

Vec mass(const Field& v, const GridSpec& grid) {
    Vec m = v.colwise().sum().transpose();
    m -= 0.5 * (v.row(0) + v.row(v.rows() - 1)).transpose();
    return m * grid.dx;
}

double weighted_sobolev_norm(const Field& v, const GridSpec& grid, int order,
                             double weight_power) {
    if (order < 0 || order > 3) throw ConfigError("weighted_sobolev_norm: order must be 0..3");
    const int n = grid.nx();
    check_field(v, n, static_cast<int>(v.cols()), "weighted_sobolev_norm");
    const double dx = grid.dx;

    Field g(n, v.cols());
    for (int i = 0; i < n; ++i) {
        const double x = grid.x(i);
        g.row(i) = std::pow(1.0 + x * x, weight_power) * v.row(i);
    }

    double total = g.squaredNorm() * dx;
    for (int c = 0; c < v.cols(); ++c) {
        auto gc = g.col(c);
        if (order >= 1) {
            const auto d1 = (gc.segment(2, n - 2) - gc.segment(0, n - 2)) / (2.0 * dx);
            total += d1.squaredNorm() * dx;
        }
        if (order >= 2) {
            const auto d2 =
                (gc.segment(2, n - 2) - 2.0 * gc.segment(1, n - 2) + gc.segment(0, n - 2)) /
                (dx * dx);
            total += d2.squaredNorm() * dx;
        }
        if (order >= 3) {
            const auto d3 = (-gc.segment(0, n - 4) + 2.0 * gc.segment(1, n - 4) -
                             2.0 * gc.segment(3, n - 4) + gc.segment(4, n - 4)) /
                            (2.0 * dx * dx * dx);
            total += d3.squaredNorm() * dx;
        }
    }
    return std::sqrt(total);
}

}  // namespace tpshock
