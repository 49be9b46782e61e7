#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace tpshock {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A conservation-law flux together with the derivatives the solvers need.
// The second derivative enters only through its bilinear action f_uu[w,v],
// so models supply that directly instead of a rank-3 tensor.
struct FluxModel {
    int dim = 1;
    std::string name;
    std::function<Vec(const Vec&)> f;
    std::function<Mat(const Vec&)> f_u;
    std::function<Vec(const Vec&, const Vec&, const Vec&)> f_uu_action;
};

FluxModel burgers_model();

// f(u) = A u + (u^T Q1 u, u^T Q2 u) / 2 with Q1, Q2 symmetrized on input.
FluxModel quadratic2_model(const Mat& A, const Mat& Q1, const Mat& Q2);

enum class Side { minus, plus };

// Eigen-structure of f_u at one endstate. Speeds are sorted ascending and
// must be real, distinct, and nonzero. Right eigenvectors are unit norm with
// the first nonvanishing component positive; left rows are biorthogonal.
struct CharacteristicFan {
    Side side = Side::minus;
    Vec speeds;
    Mat right;  // column j is r_j
    Mat left;   // row j is l_j^T with <l_j, r_k> = delta_jk
    std::vector<bool> incoming;

    int incoming_count() const;
};

CharacteristicFan characteristic_fan(const FluxModel& model, const Vec& u, Side side);

// Endstate fans plus the jump and the Lax family index p. A mode is incoming
// when its characteristic runs toward the interface: a > 0 on the minus side,
// a < 0 on the plus side. A Lax shock of family p has N+1 incoming modes.
struct CharacteristicData {
    CharacteristicFan minus;
    CharacteristicFan plus;
    Vec u_minus;
    Vec u_plus;
    Vec jump;  // u_plus - u_minus
    int lax_index = 0;

    int dim() const { return static_cast<int>(jump.size()); }

    // All outgoing right eigenvectors as columns, minus side first, each side
    // in ascending speed order. There are N-1 of them for a Lax shock.
    Mat outgoing_matrix() const;
};

CharacteristicData characteristic_data(const FluxModel& model, const Vec& u_minus,
                                       const Vec& u_plus);

// det of the N x N matrix whose columns are the outgoing minus-side
// eigenvectors, the jump, and the outgoing plus-side eigenvectors, in that
// order. Nonzero iff the shock satisfies the inviscid stability condition.
double liu_majda_determinant(const CharacteristicData& cd, const Vec& jump);

// Unit-norm vector orthogonal to every outgoing right eigenvector, sign fixed
// so the first nonvanishing component is positive.
Vec psi1_raw(const CharacteristicData& cd);

// Same direction rescaled so <psi1, jump> = 1.
Vec psi1(const CharacteristicData& cd);

}  // namespace tpshock
