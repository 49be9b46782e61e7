#include "tpshock/profile.hpp"

#include "tpshock/errors.hpp"

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace tpshock {

namespace {

namespace ode = boost::numeric::odeint;

using Stepper = ode::runge_kutta_dopri5<Vec, double, Vec, double, ode::vector_space_algebra>;

constexpr double kOdeTol = 1e-12;
constexpr double kSeedOffset = 1e-8;   // distance from the endstate along the manifold
constexpr double kBlendRadius = 1e-9;  // switch to the endstate linearization here
constexpr double kEndpointTol = 1e-6;

struct ProfileOde {
    const FluxModel* model;
    Vec f_ref;

    void operator()(const Vec& z, Vec& dz, double) const { dz = model->f(z) - f_ref; }
};

// Integrates along the one-dimensional unstable manifold of u_- (family 1
// only; family N is handled by mirroring before we get here) and samples the
// trajectory on the grid, shifted so the first component crosses the midpoint
// value at x = 0. Beyond the seed the left tail is the manifold
// linearization; once the trajectory is within kBlendRadius of u_+ the right
// tail switches to the endstate linearization. Both blends carry errors
// quadratic in the offsets, far below the integration tolerance.
Mat shoot_family_one(const FluxModel& model, const CharacteristicData& cd,
                     const GridSpec& grid) {
    const int n = cd.dim();
    const double mid0 = 0.5 * (cd.u_minus[0] + cd.u_plus[0]);
    const double scale = std::max(1.0, cd.jump.norm());

    const double a0 = cd.minus.speeds[n - 1];  // the single positive speed
    Vec v = cd.minus.right.col(n - 1);
    if (v.dot(cd.jump) < 0.0) v = -v;
    const double delta = kSeedOffset * scale;
    const Vec z0 = cd.u_minus + delta * v;

    ProfileOde sys{&model, model.f(cd.u_minus)};
    const double h0 = std::min(0.1 / a0, grid.dx);
    const double xi_cap = 50.0 / a0 + 10.0 * grid.L + 100.0;

    // Pass 1: locate the centering shift xi_c and, if reached, the blend
    // point near u_+.
    double xi_c = 0.0;
    bool crossed = false;
    bool has_blend = false;
    double xi_blend = 0.0;
    Vec w_blend;

    {
        auto dense = ode::make_dense_output(kOdeTol, kOdeTol, Stepper());
        dense.initialize(z0, 0.0, h0);
        double g_prev = z0[0] - mid0;
        if (g_prev == 0.0) crossed = true;

        Vec tmp(n);
        for (long step = 0;; ++step) {
            if (step > 2'000'000) {
                throw NumericalError("NoConnection", "trajectory did not settle near u_plus");
            }
            dense.do_step(sys);
            const double t1 = dense.current_time();
            const Vec& z = dense.current_state();
            if (!z.allFinite() || (z - cd.u_plus).norm() > 100.0 * scale + 100.0) {
                throw NumericalError("NoConnection", "trajectory left the connecting region");
            }

            if (!crossed) {
                const double g1 = z[0] - mid0;
                if (g1 == 0.0 || (g1 > 0.0) != (g_prev > 0.0)) {
                    double lo = dense.previous_time();
                    double hi = t1;
                    double glo = g_prev;
                    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
                        const double mid = 0.5 * (lo + hi);
                        dense.calc_state(mid, tmp);
                        const double g = tmp[0] - mid0;
                        if (g == 0.0) {
                            lo = hi = mid;
                        } else if ((g > 0.0) == (glo > 0.0)) {
                            lo = mid;
                            glo = g;
                        } else {
                            hi = mid;
                        }
                    }
                    xi_c = 0.5 * (lo + hi);
                    crossed = true;
                } else if (t1 > xi_cap) {
                    throw NumericalError("NoConnection",
                                         "no midpoint crossing within the search range");
                }
                g_prev = g1;
            }

            if (crossed) {
                if ((z - cd.u_plus).norm() <= kBlendRadius * scale) {
                    has_blend = true;
                    xi_blend = t1;
                    w_blend = z - cd.u_plus;
                    break;
                }
                if (t1 >= xi_c + grid.L + 2.0 * grid.dx) break;
                if (t1 > xi_cap + grid.L) {
                    throw NumericalError("NoConnection", "trajectory stalled before u_plus");
                }
            }
        }
    }

    // Right-tail linearization data (all plus-side speeds are negative for a
    // family-1 shock, so every mode decays).
    Vec blend_coeff;
    if (has_blend) blend_coeff = cd.plus.left * w_blend;

    // Pass 2: fill the grid.
    const int nx = grid.nx();
    Mat u(nx, n);
    std::vector<std::pair<int, double>> numeric;  // node, internal coordinate
    numeric.reserve(static_cast<std::size_t>(nx));
    for (int i = 0; i < nx; ++i) {
        const double xi = grid.x(i) + xi_c;
        if (xi <= 0.0) {
            u.row(i) = (cd.u_minus + (delta * std::exp(a0 * xi)) * v).transpose();
        } else if (has_blend && xi >= xi_blend) {
            Vec s(n);
            for (int j = 0; j < n; ++j) {
                s[j] = blend_coeff[j] * std::exp(cd.plus.speeds[j] * (xi - xi_blend));
            }
            u.row(i) = (cd.u_plus + cd.plus.right * s).transpose();
        } else {
            numeric.emplace_back(i, xi);
        }
    }

    if (!numeric.empty()) {
        auto dense = ode::make_dense_output(kOdeTol, kOdeTol, Stepper());
        dense.initialize(z0, 0.0, h0);
        Vec tmp(n);
        for (const auto& [i, xi] : numeric) {
            long guard = 0;
            while (dense.current_time() < xi) {
                dense.do_step(sys);
                if (++guard > 2'000'000) {
                    throw NumericalError("NoConnection", "resampling pass ran away");
                }
            }
            dense.calc_state(xi, tmp);
            u.row(i) = tmp.transpose();
        }
    }
    return u;
}

FluxModel mirrored(const FluxModel& model) {
    FluxModel m;
    m.dim = model.dim;
    m.name = model.name + "_mirror";
    auto f = model.f;
    auto fu = model.f_u;
    auto fuu = model.f_uu_action;
    m.f = [f](const Vec& u) { return Vec(-f(u)); };
    m.f_u = [fu](const Vec& u) { return Mat(-fu(u)); };
    m.f_uu_action = [fuu](const Vec& u, const Vec& w, const Vec& v) { return Vec(-fuu(u, w, v)); };
    return m;
}

}  // namespace

ShockProfile solve_stationary_profile(const FluxModel& model, const Vec& u_minus,
                                      const Vec& u_plus, const GridSpec& grid) {
    grid.validate();
    if (u_minus.size() != model.dim || u_plus.size() != model.dim) {
        throw NumericalError("DimensionMismatch", "endstate size does not match flux dimension");
    }
    const double state_scale = std::max({1.0, u_minus.norm(), u_plus.norm()});
    if ((u_plus - u_minus).norm() <= 1e-12 * state_scale) {
        throw NumericalError("RHViolation", "endstates coincide; no shock to resolve");
    }
    const Vec frh = model.f(u_plus) - model.f(u_minus);
    if (frh.norm() > 1e-10 * std::max(1.0, model.f(u_minus).norm())) {
        throw NumericalError("RHViolation",
                             "flux mismatch between endstates: |f(u+)-f(u-)| = " +
                                 std::to_string(frh.norm()));
    }

    CharacteristicData cd = characteristic_data(model, u_minus, u_plus);
    const int n = model.dim;
    const int p = cd.lax_index;

    Mat usamp;
    if (p == 1) {
        usamp = shoot_family_one(model, cd, grid);
    } else if (p == n) {
        // u(x) -> u(-x) turns a family-N connection for f into a family-1
        // connection for -f with the endstates swapped.
        const FluxModel mir = mirrored(model);
        const CharacteristicData cdm = characteristic_data(mir, u_plus, u_minus);
        usamp = shoot_family_one(mir, cdm, grid).colwise().reverse();
    } else {
        throw NumericalError("NoConnection",
                             "only extreme-family shocks have one-dimensional connections");
    }

    const int nx = grid.nx();
    if (n == 1) {
        const double dir = cd.jump[0] > 0.0 ? 1.0 : -1.0;
        for (int i = 0; i + 1 < nx; ++i) {
            if ((usamp(i + 1, 0) - usamp(i, 0)) * dir < -1e-12) {
                throw NumericalError("NoConnection", "scalar profile is not monotone");
            }
        }
    }
    if ((usamp.row(0).transpose() - u_minus).norm() > kEndpointTol ||
        (usamp.row(nx - 1).transpose() - u_plus).norm() > kEndpointTol) {
        throw NumericalError("NoConnection", "profile does not reach the endstates within L");
    }

    ShockProfile prof;
    prof.grid = grid;
    prof.x = grid.nodes();
    prof.u = usamp;
    prof.u_minus = u_minus;
    prof.u_plus = u_plus;
    prof.chardata = std::move(cd);
    prof.model = model;

    const Vec f_ref = model.f(u_minus);
    prof.ux.resize(nx, n);
    for (int i = 0; i < nx; ++i) {
        prof.ux.row(i) = (model.f(usamp.row(i).transpose()) - f_ref).transpose();
    }

    // Re-integration defect: every stored sample must continue onto its right
    // neighbor under the exact ODE flow.
    ProfileOde sys{&model, f_ref};
    auto ctrl = ode::make_controlled(kOdeTol, kOdeTol, Stepper());
    double defect = 0.0;
    Vec z(n);
    for (int i = 0; i + 1 < nx; ++i) {
        z = usamp.row(i).transpose();
        ode::integrate_adaptive(ctrl, sys, z, 0.0, grid.dx, 0.25 * grid.dx);
        defect = std::max(defect, (z - usamp.row(i + 1).transpose()).lpNorm<Eigen::Infinity>());
    }
    prof.residual = defect;

    prof.tail_rate = profile_tail_rate(prof);
    return prof;
}

double profile_tail_rate(const ShockProfile& profile) {
    const int nx = profile.nx();
    const double L = profile.grid.L;
    const double scale =
        std::max({1.0, profile.u_minus.norm(), profile.u_plus.norm()});
    const double dev_floor =
        std::max(1e-13, 100.0 * std::numeric_limits<double>::epsilon() * scale);

    auto side_rate = [&](bool right_side) -> std::optional<double> {
        std::vector<double> xs, logs;
        for (int i = 0; i < nx; ++i) {
            const double x = profile.x[i];
            if (right_side ? x < 0.75 * L : x > -0.75 * L) continue;
            const Vec& ref = right_side ? profile.u_plus : profile.u_minus;
            const double dev = (profile.u.row(i).transpose() - ref).norm();
            if (dev < dev_floor) continue;
            xs.push_back(x);
            logs.push_back(std::log(dev));
        }
        const int m = static_cast<int>(xs.size());
        if (m < 6) return std::nullopt;

        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int i = 0; i < m; ++i) {
            sx += xs[i];
            sy += logs[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * logs[i];
        }
        const double denom = m * sxx - sx * sx;
        if (std::abs(denom) < 1e-12) return std::nullopt;
        const double beta = (m * sxy - sx * sy) / denom;
        const double alpha = (sy - beta * sx) / m;

        double ss = 0;
        for (int i = 0; i < m; ++i) {
            const double r = logs[i] - alpha - beta * xs[i];
            ss += r * r;
        }
        const double rms = std::sqrt(ss / m);
        if (rms > 0.1) return std::nullopt;

        const double rate = right_side ? -beta : beta;
        if (rate <= 0.0) return std::nullopt;
        return rate;
    };

    const auto left = side_rate(false);
    const auto right = side_rate(true);
    if (!left || !right) {
        throw NumericalError("TailNotResolved",
                             "tail fit failed (too few usable points or poor fit)");
    }
    return std::min(*left, *right);
}

Mat PeriodicCoefficientField::at(int i, double t) const {
    Mat a = Eigen::Map<const Mat>(mode0.col(i).data(), dim, dim);
    if (modes.empty()) return a;
    double tr = std::fmod(t, period);
    if (tr < 0.0) tr += period;
    const double omega = 2.0 * std::numbers::pi / period;
    for (int k = 1; k <= kmax(); ++k) {
        const std::complex<double> ph = std::polar(1.0, omega * k * tr);
        const Eigen::VectorXcd col = modes[static_cast<std::size_t>(k - 1)].col(i) * ph;
        a += 2.0 * Eigen::Map<const Eigen::MatrixXcd>(col.data(), dim, dim).real();
    }
    return a;
}

void PeriodicCoefficientField::eval(double t, Mat& out) const {
    out = mode0;
    if (modes.empty()) return;
    double tr = std::fmod(t, period);
    if (tr < 0.0) tr += period;
    const double omega = 2.0 * std::numbers::pi / period;
    for (int k = 1; k <= kmax(); ++k) {
        const std::complex<double> ph = std::polar(1.0, omega * k * tr);
        out.noalias() += 2.0 * (modes[static_cast<std::size_t>(k - 1)] * ph).real();
    }
}

void PeriodicCoefficientField::eval_dx(double t, Mat& out) const {
    out = dmode0;
    if (dmodes.empty()) return;
    double tr = std::fmod(t, period);
    if (tr < 0.0) tr += period;
    const double omega = 2.0 * std::numbers::pi / period;
    for (int k = 1; k <= static_cast<int>(dmodes.size()); ++k) {
        const std::complex<double> ph = std::polar(1.0, omega * k * tr);
        out.noalias() += 2.0 * (dmodes[static_cast<std::size_t>(k - 1)] * ph).real();
    }
}

PeriodicCoefficientField manufactured_periodic_coefficients(const ShockProfile& base,
                                                            double eps, double envelope_width,
                                                            double period) {
    if (eps < 0.0) throw ConfigError("coefficients: eps must be nonnegative");
    if (envelope_width <= 0.0) throw ConfigError("coefficients: envelope width must be positive");
    if (period <= 0.0) throw ConfigError("coefficients: period must be positive");

    const int n = base.dim();
    const int nn = n * n;
    const int nx = base.nx();

    PeriodicCoefficientField field;
    field.period = period;
    field.dim = n;
    field.x = base.x;
    field.mode0.resize(nn, nx);
    field.dmode0.resize(nn, nx);

    Mat deriv(n, n);
    for (int i = 0; i < nx; ++i) {
        const Vec ui = base.at(i);
        const Vec uxi = base.ux.row(i).transpose();
        const Mat a = base.model.f_u(ui);
        field.mode0.col(i) = Eigen::Map<const Vec>(a.data(), nn);
        for (int c = 0; c < n; ++c) {
            deriv.col(c) = base.model.f_uu_action(ui, Vec::Unit(n, c), uxi);
        }
        field.dmode0.col(i) = Eigen::Map<const Vec>(deriv.data(), nn);
    }

    if (eps > 0.0) {
        const Mat B = Mat::Ones(n, n) / n;  // unit Frobenius norm
        const Eigen::VectorXcd bflat =
            Eigen::Map<const Vec>(B.data(), nn).cast<std::complex<double>>();
        Eigen::MatrixXcd c1(nn, nx), dc1(nn, nx);
        const double w2 = envelope_width * envelope_width;
        for (int i = 0; i < nx; ++i) {
            const double x = base.x[i];
            const double env = std::exp(-x * x / w2);
            c1.col(i) = (0.5 * eps * env) * bflat;
            dc1.col(i) = (0.5 * eps * env * (-2.0 * x / w2)) * bflat;
        }
        field.modes.push_back(std::move(c1));
        field.dmodes.push_back(std::move(dc1));
    }

    field.limit_minus = base.model.f_u(base.u_minus);
    field.limit_plus = base.model.f_u(base.u_plus);
    return field;
}

PeriodicCoefficientField constant_coefficient_field(const Mat& A0, const Vec& x, double period) {
    if (period <= 0.0) throw ConfigError("coefficients: period must be positive");
    const int n = static_cast<int>(A0.rows());
    const int nn = n * n;
    const int nx = static_cast<int>(x.size());

    PeriodicCoefficientField field;
    field.period = period;
    field.dim = n;
    field.x = x;
    field.mode0 = Eigen::Map<const Vec>(A0.data(), nn).replicate(1, nx);
    field.dmode0 = Mat::Zero(nn, nx);
    field.limit_minus = A0;
    field.limit_plus = A0;
    return field;
}

}  // namespace tpshock
