#include "tpshock/flux.hpp"

#include "tpshock/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tpshock {

namespace {

constexpr double kRelTol = 1e-8;

Mat symmetrize(const Mat& Q) { return 0.5 * (Q + Q.transpose()); }

void fix_sign(Eigen::Ref<Vec> v) {
    for (int i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-12) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

std::string side_name(Side s) { return s == Side::minus ? "minus" : "plus"; }

}  // namespace

FluxModel burgers_model() {
    FluxModel m;
    m.dim = 1;
    m.name = "burgers";
    m.f = [](const Vec& u) { return Vec::Constant(1, 0.5 * u[0] * u[0]); };
    m.f_u = [](const Vec& u) { return Mat::Constant(1, 1, u[0]); };
    m.f_uu_action = [](const Vec&, const Vec& w, const Vec& v) {
        return Vec::Constant(1, w[0] * v[0]);
    };
    return m;
}

FluxModel quadratic2_model(const Mat& A, const Mat& Q1, const Mat& Q2) {
    if (A.rows() != 2 || A.cols() != 2 || Q1.rows() != 2 || Q1.cols() != 2 ||
        Q2.rows() != 2 || Q2.cols() != 2) {
        throw NumericalError("DimensionMismatch", "quadratic2_model expects 2x2 matrices");
    }
    FluxModel m;
    m.dim = 2;
    m.name = "quadratic2";
    const Mat S1 = symmetrize(Q1);
    const Mat S2 = symmetrize(Q2);
    m.f = [A, S1, S2](const Vec& u) {
        Vec out = A * u;
        out[0] += 0.5 * u.dot(S1 * u);
        out[1] += 0.5 * u.dot(S2 * u);
        return out;
    };
    m.f_u = [A, S1, S2](const Vec& u) {
        Mat J = A;
        J.row(0) += (S1 * u).transpose();
        J.row(1) += (S2 * u).transpose();
        return J;
    };
    m.f_uu_action = [S1, S2](const Vec&, const Vec& w, const Vec& v) {
        Vec out(2);
        out[0] = w.dot(S1 * v);
        out[1] = w.dot(S2 * v);
        return out;
    };
    return m;
}

int CharacteristicFan::incoming_count() const {
    return static_cast<int>(std::count(incoming.begin(), incoming.end(), true));
}

CharacteristicFan characteristic_fan(const FluxModel& model, const Vec& u, Side side) {
    if (u.size() != model.dim) {
        throw NumericalError("DimensionMismatch", "state size does not match flux dimension");
    }
    const int n = model.dim;
    const Mat J = model.f_u(u);

    Eigen::EigenSolver<Mat> es(J);
    if (es.info() != Eigen::Success) {
        throw NumericalError("ComplexSpeeds", "eigen-decomposition failed on " + side_name(side));
    }

    const Eigen::VectorXcd ev = es.eigenvalues();
    const double radius = ev.cwiseAbs().maxCoeff();
    if (radius == 0.0) {
        throw NumericalError("ZeroSpeed", "all characteristic speeds vanish on " + side_name(side));
    }
    for (int j = 0; j < n; ++j) {
        if (std::abs(ev[j].imag()) > kRelTol * radius) {
            std::ostringstream msg;
            msg << "nonreal characteristic speed " << ev[j].real() << " + " << ev[j].imag()
                << "i on " << side_name(side);
            throw NumericalError("ComplexSpeeds", msg.str());
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return ev[a].real() < ev[b].real(); });

    CharacteristicFan fan;
    fan.side = side;
    fan.speeds.resize(n);
    fan.right.resize(n, n);
    fan.incoming.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const int k = order[j];
        fan.speeds[j] = ev[k].real();

        // For a real eigenvalue the eigenvector is real up to a complex
        // phase; rotate by the phase of its largest entry before dropping
        // the imaginary part.
        Eigen::VectorXcd col = es.eigenvectors().col(k);
        int imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        col *= std::abs(col[imax]) / col[imax];
        Vec r = col.real();
        r.normalize();
        fix_sign(r);
        fan.right.col(j) = r;
    }

    for (int j = 0; j < n; ++j) {
        if (std::abs(fan.speeds[j]) <= kRelTol * radius) {
            throw NumericalError("ZeroSpeed", "characteristic speed " +
                                                  std::to_string(fan.speeds[j]) +
                                                  " too close to zero on " + side_name(side));
        }
        if (j > 0 && fan.speeds[j] - fan.speeds[j - 1] <= kRelTol * radius) {
            throw NumericalError("DegenerateSpeeds", "characteristic speeds " +
                                                         std::to_string(fan.speeds[j - 1]) +
                                                         " and " + std::to_string(fan.speeds[j]) +
                                                         " coincide on " + side_name(side));
        }
        fan.incoming[static_cast<std::size_t>(j)] =
            side == Side::minus ? fan.speeds[j] > 0.0 : fan.speeds[j] < 0.0;
    }

    Eigen::FullPivLU<Mat> lu(fan.right);
    if (!lu.isInvertible()) {
        throw NumericalError("DegenerateSpeeds",
                             "eigenvector basis is singular on " + side_name(side));
    }
    fan.left = lu.inverse();
    return fan;
}

Mat CharacteristicData::outgoing_matrix() const {
    const int n = dim();
    Mat out(n, n - 1);
    int c = 0;
    for (int j = 0; j < n; ++j) {
        if (!minus.incoming[static_cast<std::size_t>(j)]) out.col(c++) = minus.right.col(j);
    }
    for (int j = 0; j < n; ++j) {
        if (!plus.incoming[static_cast<std::size_t>(j)]) out.col(c++) = plus.right.col(j);
    }
    if (c != n - 1) {
        throw NumericalError("NotLax", "expected " + std::to_string(n - 1) +
                                           " outgoing modes, found " + std::to_string(c));
    }
    return out;
}

CharacteristicData characteristic_data(const FluxModel& model, const Vec& u_minus,
                                       const Vec& u_plus) {
    if (u_minus.size() != model.dim || u_plus.size() != model.dim) {
        throw NumericalError("DimensionMismatch", "endstate size does not match flux dimension");
    }
    CharacteristicData cd;
    cd.u_minus = u_minus;
    cd.u_plus = u_plus;
    cd.jump = u_plus - u_minus;
    cd.minus = characteristic_fan(model, u_minus, Side::minus);
    cd.plus = characteristic_fan(model, u_plus, Side::plus);

    const int n = model.dim;
    const int p = cd.minus.incoming_count();
    // Lax shock of family p: a^-_{N-p} < 0 < a^-_{N-p+1} and
    // a^+_{N-p+1} < 0 < a^+_{N-p+2}. With real distinct nonzero speeds this
    // reduces to a count condition on each side.
    if (p < 1 || cd.plus.incoming_count() != n - p + 1) {
        std::ostringstream msg;
        msg << "incoming counts (" << p << ", " << cd.plus.incoming_count()
            << ") do not match any Lax family for N = " << n;
        throw NumericalError("NotLax", msg.str());
    }
    cd.lax_index = p;
    return cd;
}

double liu_majda_determinant(const CharacteristicData& cd, const Vec& jump) {
    const int n = cd.dim();
    if (jump.size() != n) {
        throw NumericalError("DimensionMismatch", "jump size does not match state dimension");
    }
    const int p = cd.lax_index;
    Mat M(n, n);
    int c = 0;
    for (int j = 0; j < n - p; ++j) M.col(c++) = cd.minus.right.col(j);
    M.col(c++) = jump;
    for (int j = n - p + 1; j < n; ++j) M.col(c++) = cd.plus.right.col(j);
    return M.determinant();
}

Vec psi1_raw(const CharacteristicData& cd) {
    const int n = cd.dim();
    if (n == 1) return Vec::Ones(1);

    const Mat out = cd.outgoing_matrix();
    Eigen::JacobiSVD<Mat> svd(out.transpose(), Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv[n - 2] <= 1e-10 * sv[0]) {
        throw NumericalError("RankDeficiency", "outgoing eigenvectors do not span a hyperplane");
    }
    Vec psi = svd.matrixV().col(n - 1);
    psi.normalize();
    fix_sign(psi);
    return psi;
}

Vec psi1(const CharacteristicData& cd) {
    Vec psi = psi1_raw(cd);
    const double d = psi.dot(cd.jump);
    if (std::abs(d) <= 1e-12 * std::max(1.0, cd.jump.norm())) {
        throw NumericalError("RankDeficiency",
                             "<psi1, jump> vanishes; inviscid determinant is degenerate");
    }
    return psi / d;
}

}  // namespace tpshock
