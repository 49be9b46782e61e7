#pragma once

#include "tpshock/flux.hpp"
#include "tpshock/profile.hpp"

#include <complex>
#include <vector>

namespace tpshock {

using Cplx = std::complex<double>;

enum class SubspaceKind { stable, unstable };

// Orthonormal basis of one half-line subspace, integrated to x = 0. The far
// end is seeded with the closed-form asymptotic eigenvectors; the frame is
// re-orthonormalized every step, so `basis` is orthonormal to roundoff.
struct SpatialFrame {
    Cplx sigma;
    int K = 0;
    int dim = 0;  // full block dimension 2 N (2K+1)
    Side side = Side::plus;
    SubspaceKind kind = SubspaceKind::stable;
    std::vector<Cplx> asymptotic_roots;  // far-end rate per basis column
    Eigen::MatrixXcd basis;              // at x = 0, one column per root
    double kappa = 0.0;                  // mean transport rate along +x
    double ortho_defect = 0.0;           // orthonormality defect of `basis`
    double step_defect = 0.0;            // worst drift seen before renormalizing
};

// det [basis_plus | basis_minus] in the fixed QR gauge, with the principal
// angles between the two subspaces. A determinant near zero together with a
// near-zero smallest angle signals a genuine intersection.
struct IntersectionResult {
    Cplx determinant;
    Vec principal_angles;  // ascending, radians
    int intersection_dim = 0;
    double angle_tol = 1e-6;
};

// Eigenvalues a_j/2 +- sqrt(a_j^2 + 4(sigma + i k))/2 of the constant
// asymptotic first-order operator on the chosen side, principal branch,
// for |k| <= K. Ordered k = -K..K, then by characteristic family, minus
// root before plus root; 2 N (2K+1) values in total.
std::vector<Cplx> asymptotic_spatial_spectrum(const CharacteristicData& cd, Cplx sigma, int K,
                                              Side side);

// Exact root of nu^2 - a nu - sigma = 0 on the branch with nu(0) = 0,
// nu = -sigma/a + sigma^2/a^3 + O(sigma^3), with its eigenvector (1, nu).
// Refuses |sigma| >= a^2/4, where the two branches collide.
struct SmallEigenvalue {
    Cplx nu;
    Eigen::Vector2cd vector;
};
SmallEigenvalue small_spatial_eigenvalue(double a, Cplx sigma);

// First-order block operator [[0, I], [D + sigma + B(x), C(x)]] over the
// Fourier mode stack k = -K..K. C couples modes through the coefficient
// Fourier data, B through its x-derivative, and D carries i k omega on the
// k-th diagonal. Coefficients between grid nodes come from a cubic Hermite
// interpolant built on the stored value/derivative pairs, so B stays the
// exact derivative of C and the system keeps its conservative form.
Eigen::MatrixXcd build_spatial_operator(const PeriodicCoefficientField& coeffs, Cplx sigma,
                                        int K, double x);

// Seeds the asymptotic eigenspace at the far end of the chosen side (stable:
// minus-branch roots; unstable: plus-branch roots, which at k = 0 continues
// the small outgoing-mode root through sigma = 0) and integrates the frame
// to x = 0 with re-orthonormalization after every step.
SpatialFrame transport_subspace(const PeriodicCoefficientField& coeffs, Cplx sigma, int K,
                                Side side, SubspaceKind kind, double step = 0.01);

IntersectionResult intersection_determinant(const SpatialFrame& frame_plus,
                                            const SpatialFrame& frame_minus);

// Total phase turn of a cyclic sample sequence, in turns; integer-valued up
// to sampling error for a loop that avoids zero.
double phase_winding(const std::vector<Cplx>& values);

}  // namespace tpshock
