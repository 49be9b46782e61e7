#include "tpshock/spatial.hpp"

#include "tpshock/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

namespace tpshock {

namespace {

struct Segment {
    int i;
    double t;
    double h;
};

Segment locate(const Vec& x, double xq) {
    const int nx = static_cast<int>(x.size());
    const double h = x[1] - x[0];
    const double pos = (xq - x[0]) / h;
    int i = static_cast<int>(std::floor(pos));
    i = std::clamp(i, 0, nx - 2);
    const double t = std::clamp(pos - i, 0.0, 1.0);
    return {i, t, h};
}

// Cubic Hermite value and derivative from stored node values and derivatives.
// Columns hold flattened matrices; the interpolant is applied columnwise.
template <typename M>
auto hermite_point(const M& vals, const M& ders, const Segment& s) {
    using Col = Eigen::Matrix<typename M::Scalar, Eigen::Dynamic, 1>;
    const double t = s.t, h = s.h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0, h10 = t3 - 2.0 * t2 + t;
    const double h01 = -2.0 * t3 + 3.0 * t2, h11 = t3 - t2;
    const double g00 = (6.0 * t2 - 6.0 * t) / h, g10 = 3.0 * t2 - 4.0 * t + 1.0;
    const double g01 = (-6.0 * t2 + 6.0 * t) / h, g11 = 3.0 * t2 - 2.0 * t;
    Col value = h00 * vals.col(s.i) + (h * h10) * ders.col(s.i) + h01 * vals.col(s.i + 1) +
                (h * h11) * ders.col(s.i + 1);
    Col deriv = g00 * vals.col(s.i) + g10 * ders.col(s.i) + g01 * vals.col(s.i + 1) +
                g11 * ders.col(s.i + 1);
    return std::make_pair(std::move(value), std::move(deriv));
}

// In-place thin QR with the R diagonal rotated real positive, so frames are
// deterministic functions of their input. Returns sum of log |R_jj|.
double gauge_qr(Eigen::MatrixXcd& m) {
    const auto rows = m.rows();
    const auto cols = m.cols();
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(rows, cols);
    double logsum = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
        const Cplx rjj = qr.matrixQR()(j, j);
        const double mag = std::abs(rjj);
        if (mag > 0.0) {
            q.col(j) *= rjj / mag;
            logsum += std::log(mag);
        }
    }
    m = std::move(q);
    return logsum;
}

Cplx selected_root(double a, Cplx shifted_sigma, SubspaceKind kind) {
    const Cplx z = Cplx(a * a, 0.0) + 4.0 * shifted_sigma;
    if (std::abs(z) < 1e-12) {
        throw NumericalError("SplittingCollapse",
                             "stable and unstable spatial roots collide at this sigma");
    }
    if (z.real() < 0.0 && std::abs(z.imag()) < 1e-9) {
        throw NumericalError("BranchAmbiguity", "spatial root sits on the square-root cut");
    }
    const Cplx s = std::sqrt(z);
    return kind == SubspaceKind::stable ? 0.5 * (Cplx(a) - s) : 0.5 * (Cplx(a) + s);
}

}  // namespace

std::vector<Cplx> asymptotic_spatial_spectrum(const CharacteristicData& cd, Cplx sigma, int K,
                                              Side side) {
    if (K < 0) throw ConfigError("spatial spectrum: K must be nonnegative");
    const Vec& speeds = (side == Side::plus ? cd.plus : cd.minus).speeds;
    std::vector<Cplx> out;
    out.reserve(2 * speeds.size() * (2 * K + 1));
    for (int k = -K; k <= K; ++k) {
        for (Eigen::Index j = 0; j < speeds.size(); ++j) {
            const double a = speeds[j];
            const Cplx s = std::sqrt(Cplx(a * a, 0.0) + 4.0 * (sigma + Cplx(0.0, k)));
            out.push_back(0.5 * (Cplx(a) - s));
            out.push_back(0.5 * (Cplx(a) + s));
        }
    }
    return out;
}

SmallEigenvalue small_spatial_eigenvalue(double a, Cplx sigma) {
    if (a == 0.0) throw ConfigError("small spatial eigenvalue: speed must be nonzero");
    if (std::abs(sigma) >= 0.25 * a * a) {
        throw NumericalError("BranchAmbiguity",
                             "sigma reaches the branch point of the small spatial root");
    }
    const Cplx s = std::sqrt(Cplx(a * a, 0.0) + 4.0 * sigma);
    SmallEigenvalue out;
    out.nu = a > 0.0 ? 0.5 * (Cplx(a) - s) : 0.5 * (Cplx(a) + s);
    out.vector << Cplx(1.0, 0.0), out.nu;
    return out;
}

Eigen::MatrixXcd build_spatial_operator(const PeriodicCoefficientField& coeffs, Cplx sigma,
                                        int K, double x) {
    if (K < 0) throw ConfigError("spatial operator: K must be nonnegative");
    if (coeffs.nx() < 2) throw ConfigError("spatial operator: coefficient grid too small");
    const int band = coeffs.kmax();
    if (band > 2 * K) {
        throw NumericalError("TruncationBandExceeded",
                             "coefficient band " + std::to_string(band) +
                                 " does not fit truncation K=" + std::to_string(K));
    }
    const int n = coeffs.dim;
    const int nb = 2 * K + 1;
    const int n1 = n * nb;
    const double omega = 2.0 * std::numbers::pi / coeffs.period;
    const Segment seg = locate(coeffs.x, x);

    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(2 * n1, 2 * n1);
    out.topRightCorner(n1, n1).setIdentity();

    auto add_blocks = [&](int kb, int mb, const Eigen::MatrixXcd& bq, const Eigen::MatrixXcd& cq) {
        out.block(n1 + kb * n, mb * n, n, n) += bq;
        out.block(n1 + kb * n, n1 + mb * n, n, n) += cq;
    };

    const auto [c0flat, b0flat] = hermite_point(coeffs.mode0, coeffs.dmode0, seg);
    const Eigen::MatrixXcd c0 = Eigen::Map<const Mat>(c0flat.data(), n, n).cast<Cplx>();
    const Eigen::MatrixXcd b0 = Eigen::Map<const Mat>(b0flat.data(), n, n).cast<Cplx>();
    for (int kb = 0; kb < nb; ++kb) {
        const int k = kb - K;
        add_blocks(kb, kb, b0, c0);
        out.block(n1 + kb * n, kb * n, n, n) +=
            (sigma + Cplx(0.0, omega * k)) * Eigen::MatrixXcd::Identity(n, n);
    }

    for (int q = 1; q <= band; ++q) {
        const auto [cqflat, bqflat] =
            hermite_point(coeffs.modes[q - 1], coeffs.dmodes[q - 1], seg);
        const Eigen::MatrixXcd cq = Eigen::Map<const Eigen::MatrixXcd>(cqflat.data(), n, n);
        const Eigen::MatrixXcd bq = Eigen::Map<const Eigen::MatrixXcd>(bqflat.data(), n, n);
        for (int kb = 0; kb < nb; ++kb) {
            if (kb - q >= 0) add_blocks(kb, kb - q, bq, cq);
            if (kb + q < nb) add_blocks(kb, kb + q, bq.conjugate(), cq.conjugate());
        }
    }
    return out;
}

SpatialFrame transport_subspace(const PeriodicCoefficientField& coeffs, Cplx sigma, int K,
                                Side side, SubspaceKind kind, double step) {
    if (step <= 0.0) throw ConfigError("transport: step must be positive");
    const int n = coeffs.dim;
    const int nb = 2 * K + 1;
    const int n1 = n * nb;
    const double omega = 2.0 * std::numbers::pi / coeffs.period;
    // validates K against the coefficient band before any work
    build_spatial_operator(coeffs, sigma, K, 0.0);

    const Mat& limit = side == Side::plus ? coeffs.limit_plus : coeffs.limit_minus;
    Vec speeds(n);
    Mat rvecs = Mat::Identity(n, n);
    if (n == 1) {
        speeds[0] = limit(0, 0);
    } else {
        Eigen::EigenSolver<Mat> es(limit);
        if (es.info() != Eigen::Success) {
            throw NumericalError("EigensolverFailure", "asymptotic matrix eigensolve failed");
        }
        const double scale = 1.0 + limit.cwiseAbs().maxCoeff();
        if (es.eigenvalues().imag().cwiseAbs().maxCoeff() > 1e-10 * scale) {
            throw NumericalError("ComplexSpeeds", "asymptotic transport matrix is not hyperbolic");
        }
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int p, int q) {
            return es.eigenvalues()[p].real() < es.eigenvalues()[q].real();
        });
        for (int j = 0; j < n; ++j) {
            speeds[j] = es.eigenvalues()[order[j]].real();
            Vec r = es.eigenvectors().col(order[j]).real();
            r.normalize();
            for (int m = 0; m < n; ++m) {
                if (std::abs(r[m]) > 1e-12) {
                    if (r[m] < 0.0) r = -r;
                    break;
                }
            }
            rvecs.col(j) = r;
        }
    }

    SpatialFrame frame;
    frame.sigma = sigma;
    frame.K = K;
    frame.dim = 2 * n1;
    frame.side = side;
    frame.kind = kind;
    frame.asymptotic_roots.resize(n1);

    Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(2 * n1, n1);
    for (int kb = 0; kb < nb; ++kb) {
        for (int j = 0; j < n; ++j) {
            const double a = speeds[j];
            const Cplx nu = selected_root(a, sigma + Cplx(0.0, omega * (kb - K)), kind);
            const int col = kb * n + j;
            frame.asymptotic_roots[col] = nu;
            for (int m = 0; m < n; ++m) {
                u(kb * n + m, col) = rvecs(m, j);
                u(n1 + kb * n + m, col) = nu * rvecs(m, j);
            }
        }
    }
    gauge_qr(u);

    const double xfar = side == Side::plus ? coeffs.x[coeffs.nx() - 1] : coeffs.x[0];
    if (std::abs(xfar) > 0.0) {
        const int nsteps = std::max(1, static_cast<int>(std::ceil(std::abs(xfar) / step)));
        const double h = (0.0 - xfar) / nsteps;
        const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n1, n1);
        double logsum = 0.0;
        for (int sdx = 0; sdx < nsteps; ++sdx) {
            const double xc = xfar + sdx * h;
            const Eigen::MatrixXcd a1 = build_spatial_operator(coeffs, sigma, K, xc);
            const Eigen::MatrixXcd a2 = build_spatial_operator(coeffs, sigma, K, xc + 0.5 * h);
            const Eigen::MatrixXcd a4 = build_spatial_operator(coeffs, sigma, K, xc + h);
            const Eigen::MatrixXcd k1 = a1 * u;
            const Eigen::MatrixXcd k2 = a2 * (u + (0.5 * h) * k1);
            const Eigen::MatrixXcd k3 = a2 * (u + (0.5 * h) * k2);
            const Eigen::MatrixXcd k4 = a4 * (u + h * k3);
            u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

            const double dev = (u.adjoint() * u - eye).cwiseAbs().maxCoeff();
            if (!std::isfinite(dev) || dev > 0.5) {
                throw NumericalError("StiffnessFailure",
                                     "transport frame drifted too far in one step; reduce it");
            }
            frame.step_defect = std::max(frame.step_defect, dev);
            logsum += gauge_qr(u);
        }
        frame.kappa = logsum / (n1 * (0.0 - xfar));
        frame.ortho_defect = (u.adjoint() * u - eye).cwiseAbs().maxCoeff();
    }
    frame.basis = std::move(u);
    return frame;
}

IntersectionResult intersection_determinant(const SpatialFrame& frame_plus,
                                            const SpatialFrame& frame_minus) {
    if (frame_plus.dim != frame_minus.dim || frame_plus.K != frame_minus.K ||
        frame_plus.basis.rows() != frame_minus.basis.rows()) {
        throw NumericalError("DimensionMismatch", "frames live in different block spaces");
    }
    if (std::abs(frame_plus.sigma - frame_minus.sigma) >
        1e-12 * (1.0 + std::abs(frame_plus.sigma))) {
        throw ConfigError("intersection: frames were evaluated at different sigma");
    }
    const auto cs = frame_plus.basis.cols();
    const auto cu = frame_minus.basis.cols();
    if (cs + cu != frame_plus.dim) {
        throw NumericalError("DimensionMismatch", "subspace dimensions do not fill the space");
    }

    Eigen::MatrixXcd full(frame_plus.dim, frame_plus.dim);
    full << frame_plus.basis, frame_minus.basis;

    IntersectionResult out;
    out.determinant = full.determinant();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(frame_plus.basis.adjoint() * frame_minus.basis);
    const auto na = std::min(cs, cu);
    out.principal_angles.resize(na);
    for (Eigen::Index i = 0; i < na; ++i) {
        out.principal_angles[i] = std::acos(std::min(1.0, svd.singularValues()[i]));
    }
    out.intersection_dim =
        static_cast<int>((out.principal_angles.array() < out.angle_tol).count());
    return out;
}

double phase_winding(const std::vector<Cplx>& values) {
    if (values.size() < 3) throw ConfigError("winding: need at least three samples");
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Cplx a = values[i];
        const Cplx b = values[(i + 1) % values.size()];
        if (std::abs(a) == 0.0 || std::abs(b) == 0.0) {
            throw NumericalError("WindingUndefined", "determinant sample on the contour is zero");
        }
        total += std::arg(b / a);
    }
    return total / (2.0 * std::numbers::pi);
}

}  // namespace tpshock
