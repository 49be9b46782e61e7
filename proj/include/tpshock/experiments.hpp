#pragma once

#include "tpshock/greens.hpp"
#include "tpshock/pde.hpp"
#include "tpshock/profile.hpp"

#include <vector>

namespace tpshock {

// u(x - q) resampled on the profile grid. Cubic Hermite interpolation from
// the stored samples and ODE derivatives, clamped to the endstates beyond
// the walls. The _dx variant is the exact derivative of that interpolant,
// so phase fits against it are minimizing the actual discrete objective.
Field translate_profile(const ShockProfile& profile, double q);
Field translate_profile_dx(const ShockProfile& profile, double q);

// Full nonlinear evolution of profile + v0 with per-frame diagnostics
// measured against the unshifted profile.
struct PerturbationRun {
    Trajectory traj;
    Vec t;
    Mat mass_drift;  // trapezoid mass of u - profile per component
    Vec sup;         // sup |u - profile| per frame
    Vec weighted;    // weighted H^3 norm of u - profile per frame
};

PerturbationRun run_perturbation(const FluxModel& model, const ShockProfile& profile,
                                 const Field& v0, double t_final, const GridSpec& grid,
                                 double snap_every = 1.0, double delta_max = 1.0);

// Frame track fitted to a trajectory: per frame the shift q minimizing the
// L^2 distance to the translated profile (Newton on the interpolant's exact
// gradient, warm started from the previous frame). The time offset stays
// frozen at zero for stationary profiles, where the two-parameter fit is
// rank deficient. The asymptote q_star extrapolates the tail assuming the
// predicted (1+t)^{-1/2} approach, which drops the O(t^{-1/2}) bias a plain
// late-time average would keep; it falls back to the average when the two
// anchor windows are too close to separate.
struct PhaseTrack {
    Vec t;
    Vec q, tau;
    Vec qdot, taudot;  // smoothed central differences
    double q_star = 0.0, tau_star = 0.0;
    Vec residual;  // co-moving L^2 distance per frame
    double b1 = 0.0;  // sup (1+t)^{1/2} |zeta - zeta*| + sup (1+t) |zetadot|
};

PhaseTrack extract_phase(const Trajectory& traj, const ShockProfile& profile);

// Decay measurements of the co-moving perturbation v(x,t) = u - profile
// shifted by q(t). Slopes are log-log fits on ln(1+t) over [t_lo, t_hi].
struct DecayReport {
    Vec t;
    Vec p;          // the L^p exponents examined (inf allowed)
    Mat lp;         // per-frame L^p norms, one column per p
    Vec slope;      // fitted slope per p
    Vec rate;       // the -(1/2)(1 - 1/p) reference envelope
    Vec ratio;      // per-frame sup_x |v| / theta_sum
    double b2 = 0.0;          // sup over frames of ratio
    double q_gap_slope = 0.0; // |q - q_star| against the predicted -1/2
    double zdot_slope = 0.0;  // |qdot| + |taudot| against the predicted -1
};

DecayReport decay_report(const Trajectory& traj, const ShockProfile& profile,
                         const PhaseTrack& phase, const TemplateBundle& bundle,
                         const std::vector<double>& p_list, double t_lo = 10.0,
                         double t_hi = 100.0);

// The nonlinear sources of the perturbation equation around the doubly
// shifted profile family. zeta and zeta_star are (shift, time offset) pairs;
// the time components are inert for stationary profiles.
//   q_field = f(u^{z*+z}) + f_u(u^{z*+z}) v - f(u^{z*+z} + v)
//   r_field = (f_u(u^{z*}) - f_u(u^{z*+z})) v
//   s_field = (d_zeta u|_{z*+z} - d_zeta u|_{z*}) . zetadot
struct NonlinearTerms {
    Field q_field, r_field, s_field;
};

NonlinearTerms nonlinear_terms(const ShockProfile& profile, const Vec& zeta, const Vec& zetadot,
                               const Vec& zeta_star, const Field& v);

// Columns of the Green's function with the translation part removed,
// tabulated on a coarse source lattice for the iteration map. Frames live on
// tau = dtau .. tau_max; the age-zero column is the (mollified) delta and is
// handled analytically by the consumers. Stationarity of the profile makes
// one release time enough. Scalar models only: a system table would need one
// column per source component and mode-resolved weights.
struct GreenTables {
    GridSpec grid;
    double width = 0.0;  // mollifier width of the stored columns
    Vec y;               // source lattice
    Vec tau;             // frame ages, ascending, step dtau
    double dtau = 0.0;
    std::vector<std::vector<Field>> gtilde;  // [source][age]
    std::vector<Vec> l_fit;                  // fitted incoming weights per column
    Vec l_minus, l_plus;                     // side means used by the pi kernels
    CharacteristicData chardata;

    int columns() const { return static_cast<int>(y.size()); }
};

GreenTables build_green_tables(const ShockProfile& profile, double y_max, double dy,
                               double tau_max, double dtau, double width = -1.0);

// One application of the fixed-point map: given the previous phase track
// (sampled on {0} + tables.tau, zero rows allowed as shorthand) and shift
// accumulator, produces the new perturbation frames, phase track, and shift.
// v0 is measured against the unshifted profile; the map re-references it to
// zeta_star_prev internally. Residuals: duhamel_residual is the worst
// per-frame relative L^2 gap to a direct time stepping of the perturbation
// equation, fixed_point_gap = sup_t |zeta_new - zeta_prev|. The scheme's
// infinite-time integrals are truncated at the table horizon; tail_bound
// reports a power-law extrapolation of what was cut.
struct IterationResult {
    Vec t;
    std::vector<Field> v;
    Mat zeta;        // rows (q, tau) on t
    Vec zeta_star;   // (q*, tau*)
    double duhamel_residual = 0.0;
    double fixed_point_gap = 0.0;
    double tail_bound = 0.0;
};

IterationResult apply_iteration_map(const ShockProfile& profile, const Field& v0,
                                    const Mat& zeta_prev, const Vec& zeta_star_prev,
                                    const GreenTables& tables);

}  // namespace tpshock
