#include "tpshock/floquet.hpp"

#include "tpshock/errors.hpp"
#include "tpshock/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <random>

namespace tpshock {

namespace {

using Cd = std::complex<double>;

// Desk-scale caps. The full matrix has to exist either way; the second cap
// only decides when the dense eigensolver gives way to block iteration.
constexpr int kMaxDenseUnknowns = 2400;
constexpr int kDenseEigenCap = 1200;
constexpr int kReportSpectrumSize = 40;

struct ActiveRange {
    int lo;
    int count;
};

ActiveRange active_range(const GridSpec& grid) {
    switch (grid.boundary) {
        case Boundary::dirichlet:
            return {1, grid.nx() - 2};
        case Boundary::periodic:
            return {0, grid.nx() - 1};
        case Boundary::outflow:
            break;
    }
    return {0, grid.nx()};
}

Cd exponent_of(Cd mu, double period) {
    if (std::abs(mu) == 0.0) {
        return {-std::numeric_limits<double>::infinity(), 0.0};
    }
    const Cd sigma = std::log(mu) / period;
    double im = sigma.imag();
    const double shift = 2.0 * std::numbers::pi / period;
    if (shift <= 1.0) {  // the strip is reachable; fold into (-1/2, 1/2]
        while (im > 0.5) im -= shift;
        while (im <= -0.5) im += shift;
    }
    return {sigma.real(), im};
}

std::vector<int> modulus_order(const Eigen::VectorXcd& values) {
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double ma = std::abs(values[a]), mb = std::abs(values[b]);
        if (ma != mb) return ma > mb;
        if (values[a].real() != values[b].real()) return values[a].real() > values[b].real();
        return values[a].imag() > values[b].imag();
    });
    return idx;
}

// Rotate a complex vector so its largest entry is real positive, then embed
// the real part as a full-grid field with the inactive rows filled in.
Field embed_real(const Eigen::VectorXcd& v, const GridSpec& grid, int dim) {
    const auto [lo, na] = active_range(grid);
    int peak = 0;
    v.cwiseAbs().maxCoeff(&peak);
    Cd phase = v[peak];
    phase /= std::abs(phase);
    Field out = Field::Zero(grid.nx(), dim);
    for (int c = 0; c < dim; ++c) {
        for (int i = 0; i < na; ++i) {
            out(lo + i, c) = (v[c * na + i] / phase).real();
        }
    }
    if (grid.boundary == Boundary::periodic) out.row(grid.nx() - 1) = out.row(0);
    return out;
}

}  // namespace

Mat monodromy_matrix(const PeriodicCoefficientField& coeffs, const GridSpec& grid) {
    grid.validate();
    if (coeffs.nx() != grid.nx()) {
        throw NumericalError("DimensionMismatch", "coefficient field does not match the grid");
    }
    const auto [lo, na] = active_range(grid);
    const int dim = coeffs.dim;
    const int m = dim * na;
    if (m > kMaxDenseUnknowns) {
        throw NumericalError("MemoryBudgetExceeded",
                             "dense period map would have " + std::to_string(m) +
                                 " unknowns (cap " + std::to_string(kMaxDenseUnknowns) + ")");
    }

    Mat monodromy(m, m);
    auto fill_column = [&](int j) {
        Field v = Field::Zero(grid.nx(), dim);
        const int c = j / na, i = lo + j % na;
        v(i, c) = 1.0;
        if (grid.boundary == Boundary::periodic && i == 0) v(grid.nx() - 1, c) = 1.0;
        const Field w = evolve_linearized(coeffs, v, 0.0, coeffs.period, grid);
        for (int c2 = 0; c2 < dim; ++c2) {
            monodromy.col(j).segment(c2 * na, na) = w.col(c2).segment(lo, na);
        }
    };
    // First column runs serially so configuration and step-size errors
    // surface as exceptions instead of dying inside a worker thread.
    fill_column(0);
    parallel_for(m - 1, [&](int j) { fill_column(j + 1); });
    return monodromy;
}

std::pair<Eigen::VectorXcd, Eigen::MatrixXcd> top_eigenpairs(const Mat& a, int count) {
    const int n = static_cast<int>(a.rows());
    if (a.cols() != n) throw NumericalError("DimensionMismatch", "eigenproblem needs a square matrix");
    count = std::min(count, n);

    if (n <= kDenseEigenCap) {
        Eigen::EigenSolver<Mat> es(a);
        if (es.info() != Eigen::Success) {
            throw NumericalError("EigensolverFailure", "dense eigensolver did not converge");
        }
        const auto order = modulus_order(es.eigenvalues());
        Eigen::VectorXcd values(count);
        Eigen::MatrixXcd vectors(n, count);
        for (int k = 0; k < count; ++k) {
            values[k] = es.eigenvalues()[order[k]];
            vectors.col(k) = es.eigenvectors().col(order[k]);
        }
        return {values, vectors};
    }

    // Block orthogonal iteration on the leading invariant subspace. The
    // block is padded past `count` so a complex pair straddling the edge
    // cannot stall the modes we actually return.
    const int block = std::min(n, std::max(count + 8, 24));
    std::mt19937 rng(12345);
    std::normal_distribution<double> gauss;
    Mat q(n, block);
    for (int j = 0; j < block; ++j) {
        for (int i = 0; i < n; ++i) q(i, j) = gauss(rng);
    }
    q = Eigen::HouseholderQR<Mat>(q).householderQ() * Mat::Identity(n, block);

    Eigen::VectorXcd ritz_prev = Eigen::VectorXcd::Zero(count);
    Eigen::EigenSolver<Mat> small;
    for (int iter = 0; iter < 300; ++iter) {
        const Mat z = a * q;
        q = Eigen::HouseholderQR<Mat>(z).householderQ() * Mat::Identity(n, block);

        small.compute(q.transpose() * (a * q));
        if (small.info() != Eigen::Success) {
            throw NumericalError("EigensolverFailure", "projected eigensolver did not converge");
        }
        const auto order = modulus_order(small.eigenvalues());
        Eigen::VectorXcd ritz(count);
        for (int k = 0; k < count; ++k) ritz[k] = small.eigenvalues()[order[k]];

        double change = 0.0;
        for (int k = 0; k < count; ++k) {
            change = std::max(change, std::abs(ritz[k] - ritz_prev[k]) / (1.0 + std::abs(ritz[k])));
        }
        ritz_prev = ritz;
        if (iter >= 3 && change < 1e-12) {
            Eigen::VectorXcd values(count);
            Eigen::MatrixXcd vectors(n, count);
            for (int k = 0; k < count; ++k) {
                values[k] = small.eigenvalues()[order[k]];
                vectors.col(k) = q * small.eigenvectors().col(order[k]);
                vectors.col(k) /= vectors.col(k).norm();
            }
            return {values, vectors};
        }
    }
    throw NumericalError("EigensolverFailure", "block iteration stalled before convergence");
}

std::vector<Cd> floquet_exponents(const Mat& monodromy, int count, double period) {
    if (count < 1) throw ConfigError("floquet_exponents: count must be positive");
    if (period <= 0.0) throw ConfigError("floquet_exponents: period must be positive");
    const Eigen::VectorXcd values = top_eigenpairs(monodromy, count).first;
    std::vector<Cd> out(values.size());
    for (int k = 0; k < values.size(); ++k) out[k] = exponent_of(values[k], period);
    return out;
}

Mat melnikov_matrix(const ShockProfile& profile, const std::vector<std::vector<Field>>& psi_fields,
                    const std::vector<std::vector<Field>>& mode_fields) {
    const auto rows = static_cast<int>(psi_fields.size());
    const auto cols = static_cast<int>(mode_fields.size());
    if (rows < 1 || rows > 2 || cols < 1 || cols > 2) {
        throw ConfigError("melnikov_matrix: one or two fields per side");
    }

    int steps = 1;
    auto scan = [&](const std::vector<Field>& seq) {
        if (seq.empty()) throw ConfigError("melnikov_matrix: empty field sequence");
        const auto len = static_cast<int>(seq.size());
        if (len > 1) {
            if (len < 8) {
                throw NumericalError("QuadratureUnderResolved",
                                     "need at least 8 samples over the period, got " +
                                         std::to_string(len));
            }
            if (steps > 1 && len != steps) {
                throw NumericalError("DimensionMismatch", "time sample counts disagree");
            }
            steps = len;
        }
        for (const Field& f : seq) {
            if (f.rows() != profile.nx() || f.cols() != profile.dim()) {
                throw NumericalError("DimensionMismatch", "field shape does not match the profile");
            }
        }
    };
    for (const auto& seq : psi_fields) scan(seq);
    for (const auto& seq : mode_fields) scan(seq);

    const double dx = profile.grid.dx;
    auto paired_integral = [&](const Field& p, const Field& q) {
        double full = (p.array() * q.array()).sum();
        full -= 0.5 * (p.row(0).dot(q.row(0)) + p.row(p.rows() - 1).dot(q.row(q.rows() - 1)));
        return full * dx;
    };

    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (int s = 0; s < steps; ++s) {
                const Field& p = psi_fields[i][psi_fields[i].size() == 1 ? 0 : s];
                const Field& q = mode_fields[j][mode_fields[j].size() == 1 ? 0 : s];
                acc += paired_integral(p, q);
            }
            m(i, j) = acc / steps;
        }
    }
    return m;
}

MonodromyReport spectral_stability_report(const ShockProfile& profile,
                                          const PeriodicCoefficientField& coeffs,
                                          const CharacteristicData& chardata) {
    if (profile.nx() != coeffs.nx() || profile.dim() != coeffs.dim) {
        throw NumericalError("DimensionMismatch", "profile and coefficient field disagree");
    }
    GridSpec grid = profile.grid;
    grid.boundary = Boundary::dirichlet;  // absorbing truncation: candidate
                                          // eigenfunctions must decay anyway
    const Mat monodromy = monodromy_matrix(coeffs, grid);
    const int m = static_cast<int>(monodromy.rows());
    const auto [lo, na] = active_range(grid);
    const int dim = coeffs.dim;

    MonodromyReport rep;
    rep.period = coeffs.period;

    const int keep = std::min(kReportSpectrumSize, m);
    const auto [mu, vecs] = top_eigenpairs(monodromy, keep);
    rep.eigenvalues = mu;
    rep.exponents.resize(keep);
    for (int k = 0; k < keep; ++k) rep.exponents[k] = exponent_of(mu[k], rep.period);

    bool stationary = true;
    const double mode_scale = 1.0 + coeffs.mode0.cwiseAbs().maxCoeff();
    for (const auto& mode : coeffs.modes) {
        if (mode.cwiseAbs().maxCoeff() > 1e-13 * mode_scale) stationary = false;
    }
    rep.expected_neutral_count = stationary ? 1 : 2;

    // Unit cluster: eigenvalue proximity to 1, localization of the mode, and
    // overlap with the translation direction.
    Vec ux_flat(m);
    for (int c = 0; c < dim; ++c) ux_flat.segment(c * na, na) = profile.ux.col(c).segment(lo, na);
    const double ux_norm = ux_flat.norm();

    double max_outside = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < keep; ++k) {
        if (std::abs(mu[k] - 1.0) > rep.cluster_radius) {
            max_outside = std::max(max_outside, rep.exponents[k].real());
            continue;
        }
        ++rep.unit_cluster_count;
        const Eigen::VectorXcd v = vecs.col(k);

        double peak = 0.0, tail = 0.0;
        for (int i = 0; i < na; ++i) {
            double mag2 = 0.0;
            for (int c = 0; c < dim; ++c) mag2 += std::norm(v[c * na + i]);
            const double mag = std::sqrt(mag2);
            peak = std::max(peak, mag);
            if (std::abs(grid.x(lo + i)) > 0.5 * grid.L) tail = std::max(tail, mag);
        }
        if (tail < rep.localization_tol * peak) ++rep.localized_unit_count;

        const double corr =
            ux_norm > 0.0 ? std::abs(v.dot(ux_flat.cast<Cd>())) / (v.norm() * ux_norm) : 0.0;
        if (corr > rep.translation_correlation) {
            rep.translation_correlation = corr;
            rep.translation_mode = embed_real(v, grid, dim);
        }
    }
    rep.spectral_gap = -max_outside;
    rep.s1 = max_outside < rep.gap_tol;
    rep.s2 = rep.localized_unit_count == rep.expected_neutral_count;

    rep.liu_majda = liu_majda_determinant(chardata, chardata.jump);
    rep.s3 = std::abs(rep.liu_majda) > 1e-10;

    // Pairing block. The raw adjoint constant is used, so for a scalar shock
    // the single entry is just the integral of ux, i.e. the jump.
    const Vec psi = psi1_raw(chardata);
    const Field psi_field = Vec::Ones(profile.nx()) * psi.transpose();
    rep.melnikov = melnikov_matrix(profile, {{psi_field}}, {{profile.ux}});

    // A genuinely time-periodic wave owes us a second, non-constant adjoint
    // mode fixed by the backward period map; a steady wave does not.
    bool adjoint_mode_ok = stationary;
    if (!stationary) {
        const auto [lmu, lvecs] = top_eigenpairs(monodromy.transpose(), keep);
        for (int k = 0; k < keep; ++k) {
            if (std::abs(lmu[k] - 1.0) > rep.cluster_radius) continue;
            const Field w = embed_real(lvecs.col(k), grid, dim);
            double peak = 0.0, dev = 0.0;
            double mean = 0.0;
            int inner = 0;
            for (int i = 0; i < grid.nx(); ++i) {
                if (std::abs(grid.x(i)) > 0.5 * grid.L) continue;
                mean += w.row(i).norm();
                ++inner;
            }
            mean /= std::max(1, inner);
            for (int i = 0; i < grid.nx(); ++i) {
                if (std::abs(grid.x(i)) > 0.5 * grid.L) continue;
                const double mag = w.row(i).norm();
                peak = std::max(peak, mag);
                dev = std::max(dev, std::abs(mag - mean));
            }
            if (peak > 0.0 && dev > 0.05 * peak) {
                rep.psi2 = w;
                adjoint_mode_ok = true;
                break;
            }
        }
    }

    const double pairing = std::abs(rep.melnikov.determinant());
    rep.s4 = pairing > 1e-6 && adjoint_mode_ok;
    if (rep.s4) {
        rep.melnikov_inverse = rep.melnikov.inverse();
    } else {
        rep.melnikov_inverse = Mat::Zero(rep.melnikov.rows(), rep.melnikov.cols());
    }

    rep.shock_spectrum = rep.s1 && rep.s2 && rep.s3 && rep.s4;
    return rep;
}

}  // namespace tpshock
