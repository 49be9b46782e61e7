#pragma once

#include "tpshock/flux.hpp"
#include "tpshock/pde.hpp"
#include "tpshock/profile.hpp"

#include <complex>
#include <numbers>
#include <utility>
#include <vector>

namespace tpshock {

// Spectral verdict for one linearized wave. The thresholds live in the report
// itself so a consumer can audit which numerical choices produced the flags.
struct MonodromyReport {
    Eigen::VectorXcd eigenvalues;  // period-map spectrum, |mu| descending
    Eigen::VectorXcd exponents;    // log(mu)/period, Im folded into (-1/2, 1/2]
    double period = 0.0;

    double translation_correlation = 0.0;
    double spectral_gap = 0.0;  // -max Re exponent outside the unit cluster
    int unit_cluster_count = 0;
    int localized_unit_count = 0;
    int expected_neutral_count = 1;

    bool s1 = false;  // rest of the spectrum uniformly contracting
    bool s2 = false;  // localized neutral modes match the expected count
    bool s3 = false;  // transversality determinant nonzero
    bool s4 = false;  // adjoint pairing data nonzero (and second mode, if due)
    bool shock_spectrum = false;

    double liu_majda = 0.0;
    Mat melnikov;          // 1x1 for a steady wave, 2x2 otherwise
    Mat melnikov_inverse;  // filled only when s4 holds
    Field translation_mode;  // neutral eigenvector, embedded on the full grid
    Field psi2;              // second adjoint mode; empty when not applicable

    double gap_tol = 1e-3;
    double cluster_radius = 5e-3;
    double localization_tol = 1e-4;
};

// Dense time-T solution map of the linearized equation: column j is the
// j-th coordinate vector evolved over one coefficient period. Unknowns are
// the grid's active nodes (interior for dirichlet, one seam copy dropped for
// periodic), component-major.
Mat monodromy_matrix(const PeriodicCoefficientField& coeffs, const GridSpec& grid);

// Top eigenvalues of the period map, modulus-descending, as exponents
// sigma = log(mu)/period with Im sigma folded into (-1/2, 1/2] whenever the
// strip is reachable (period >= 2 pi).
std::vector<std::complex<double>> floquet_exponents(const Mat& monodromy, int count,
                                                    double period = 2.0 * std::numbers::pi);

// Largest-modulus eigenpairs. Dense solve for small matrices; block
// orthogonal iteration above the cap, which is cheap here because parabolic
// period maps have sharply decaying spectra.
std::pair<Eigen::VectorXcd, Eigen::MatrixXcd> top_eigenpairs(const Mat& a, int count);

MonodromyReport spectral_stability_report(const ShockProfile& profile,
                                          const PeriodicCoefficientField& coeffs,
                                          const CharacteristicData& chardata);

// Pairing matrix M_ij = (1/T) Int Int <psi_i, u_j> dx dt between adjoint
// fields and neutral modes. Each sequence holds uniform time samples over one
// period (a single entry means time-constant); entries may be 1 or 2 per
// side, giving a 1x1 up to 2x2 result.
Mat melnikov_matrix(const ShockProfile& profile, const std::vector<std::vector<Field>>& psi_fields,
                    const std::vector<std::vector<Field>>& mode_fields);

}  // namespace tpshock
