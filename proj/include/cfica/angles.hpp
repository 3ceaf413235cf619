#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cfica/common.hpp"

namespace cfica {

/// Default lower bound on the pairwise angular separation of mixing columns.
constexpr double kDefaultEpsilon = 0.05;

/// Angles parametrizing an n x n mixing matrix with unit-norm columns.
///
/// For n = 2 the two angles are the polar angles of the columns, both in
/// (0, pi) and ordered increasingly. For general n each column contributes a
/// block of n-1 hyperspherical coordinates and blocks are ordered
/// lexicographically.
struct AngleVector {
    Eigen::VectorXd angles;
    int n = 0;

    AngleVector() = default;
    AngleVector(Eigen::VectorXd a, int dim) : angles(std::move(a)), n(dim) {}

    static AngleVector of2(double t1, double t2) {
        Eigen::VectorXd a(2);
        a << t1, t2;
        return AngleVector(a, 2);
    }

    int dim() const { return static_cast<int>(angles.size()); }
};

/// Mixing matrix together with the objects derived from it: inverse and the
/// rank-one projectors P_j = Theta_{.j} Theta^{-1}_{j.}.
struct MixingSpec {
    AngleVector theta;
    Eigen::MatrixXd Theta;
    Eigen::MatrixXd ThetaInv;
    std::vector<Eigen::MatrixXd> projectors;

    int n() const { return static_cast<int>(Theta.rows()); }
};

/// Per-projector derivatives d vec(P_j) / d theta' (each n^2 x dim(theta)).
struct ProjectorJacobian {
    std::vector<Eigen::MatrixXd> d_vec_p;
};

enum class JacobianMode { analytic, numeric };

namespace detail {

inline int angles_per_column(int n) { return n - 1; }

// Unit vector from one hyperspherical block.
inline Eigen::VectorXd column_from_block(const Eigen::VectorXd& block, int n) {
    Eigen::VectorXd u(n);
    double sinprod = 1.0;
    for (int k = 0; k < n - 1; ++k) {
        u[k] = sinprod * std::cos(block[k]);
        sinprod *= std::sin(block[k]);
    }
    u[n - 1] = sinprod;
    return u;
}

// Hyperspherical block of a unit vector; inverse of column_from_block.
inline Eigen::VectorXd block_from_column(const Eigen::VectorXd& u) {
    const int n = static_cast<int>(u.size());
    Eigen::VectorXd block(n - 1);
    for (int k = 0; k < n - 2; ++k) {
        double r = u.tail(n - k).norm();
        block[k] = (r > 0) ? std::acos(std::clamp(u[k] / r, -1.0, 1.0)) : 0.0;
    }
    double a = std::atan2(u[n - 1], u[n - 2]);
    if (a < 0) a += 2 * kPi;
    block[n - 2] = a;
    return block;
}

inline bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    for (int i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

}  // namespace detail

/// Angle between two unit vectors ignoring orientation, in [0, pi/2].
inline double column_separation(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return std::acos(std::clamp(std::abs(u.dot(v)), 0.0, 1.0));
}

/// Check the minimum pairwise angular separation of the columns of Theta.
/// Throws DegenerateParametrizationError naming the closest pair.
inline void require_epsilon_invertible(const Eigen::MatrixXd& Theta,
                                       double epsilon = kDefaultEpsilon) {
    const int n = static_cast<int>(Theta.cols());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double ang = column_separation(Theta.col(i), Theta.col(j));
            if (ang < epsilon) throw DegenerateParametrizationError(i, j, ang, epsilon);
        }
}

/// True when theta satisfies the canonical-range, ordering, and separation
/// invariants of AngleVector.
inline bool is_canonical(const AngleVector& theta, double epsilon = kDefaultEpsilon) {
    const int n = theta.n;
    if (theta.dim() != n * (n - 1)) return false;
    if (!theta.angles.allFinite()) return false;
    if (n == 2) {
        double t1 = theta.angles[0], t2 = theta.angles[1];
        if (!(t1 > 0 && t1 < kPi && t2 > 0 && t2 < kPi && t1 < t2)) return false;
        double d = t2 - t1;
        return d >= epsilon && d <= kPi - epsilon;
    }
    const int m = detail::angles_per_column(n);
    std::vector<Eigen::VectorXd> blocks(n);
    for (int j = 0; j < n; ++j) {
        blocks[j] = theta.angles.segment(j * m, m);
        for (int k = 0; k < m - 1; ++k)
            if (blocks[j][k] < 0 || blocks[j][k] > kPi) return false;
        if (blocks[j][m - 1] < 0 || blocks[j][m - 1] >= 2 * kPi) return false;
    }
    for (int j = 0; j + 1 < n; ++j)
        if (!detail::lex_less(blocks[j], blocks[j + 1])) return false;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double ang = column_separation(detail::column_from_block(blocks[i], n),
                                           detail::column_from_block(blocks[j], n));
            if (ang < epsilon) return false;
        }
    return true;
}

namespace detail {

// Build Theta from angles without range/ordering validation; used by numeric
// differentiation where perturbed angles may leave the canonical set.
inline Eigen::MatrixXd theta_matrix_unchecked(const AngleVector& theta) {
    const int n = theta.n;
    Eigen::MatrixXd Theta(n, n);
    if (n == 2) {
        Theta << std::cos(theta.angles[0]), std::cos(theta.angles[1]),
            std::sin(theta.angles[0]), std::sin(theta.angles[1]);
        return Theta;
    }
    const int m = angles_per_column(n);
    for (int j = 0; j < n; ++j)
        Theta.col(j) = column_from_block(theta.angles.segment(j * m, m), n);
    return Theta;
}

inline MixingSpec mixing_from_matrix_unchecked(const AngleVector& theta,
                                               const Eigen::MatrixXd& Theta) {
    MixingSpec spec;
    spec.theta = theta;
    spec.Theta = Theta;
    const int n = static_cast<int>(Theta.rows());
    if (n == 2) {
        double t1 = theta.angles[0], t2 = theta.angles[1];
        double d = std::sin(t2 - t1);
        spec.ThetaInv.resize(2, 2);
        spec.ThetaInv << std::sin(t2), -std::cos(t2), -std::sin(t1), std::cos(t1);
        spec.ThetaInv /= d;
    } else {
        spec.ThetaInv = Theta.partialPivLu().inverse();
    }
    spec.projectors.reserve(n);
    for (int j = 0; j < n; ++j)
        spec.projectors.push_back(Theta.col(j) * spec.ThetaInv.row(j));
    return spec;
}

}  // namespace detail

/// Build the mixing matrix, its inverse, and the projectors P_j from angles.
///
/// For n = 2 the matrix is exactly [[cos t1, cos t2], [sin t1, sin t2]] and
/// the inverse uses its closed form.
inline MixingSpec theta_to_mixing(const AngleVector& theta, double epsilon = kDefaultEpsilon) {
    const int n = theta.n;
    if (n < 2) throw ConfigError("theta_to_mixing: dimension must be >= 2");
    if (theta.dim() != n * (n - 1))
        throw ConfigError("theta_to_mixing: expected " + std::to_string(n * (n - 1)) +
                          " angles, got " + std::to_string(theta.dim()));
    if (!theta.angles.allFinite()) throw ConfigError("theta_to_mixing: non-finite angle");
    Eigen::MatrixXd Theta = detail::theta_matrix_unchecked(theta);
    require_epsilon_invertible(Theta, epsilon);
    return detail::mixing_from_matrix_unchecked(theta, Theta);
}

/// Canonical angles of an invertible matrix: columns are rescaled to unit
/// norm, signs fixed (n = 2: second entry positive; otherwise the
/// largest-magnitude entry positive), and columns sorted. The result is the
/// canonical representative of the scale/permutation equivalence class.
inline AngleVector mixing_to_theta(const Eigen::MatrixXd& Theta_in) {
    const int n = static_cast<int>(Theta_in.rows());
    if (Theta_in.cols() != n) throw ConfigError("mixing_to_theta: matrix must be square");
    Eigen::MatrixXd Theta = Theta_in;
    for (int j = 0; j < n; ++j) {
        double norm = Theta.col(j).norm();
        if (norm < 1e-14) throw ConfigError("mixing_to_theta: zero column");
        Theta.col(j) /= norm;
    }
    if (n == 2) {
        Eigen::VectorXd a(2);
        for (int j = 0; j < 2; ++j) {
            if (Theta(1, j) < 0) Theta.col(j) *= -1.0;
            a[j] = std::atan2(Theta(1, j), Theta(0, j));
        }
        if (a[0] > a[1]) std::swap(a[0], a[1]);
        return AngleVector(a, 2);
    }
    const int m = detail::angles_per_column(n);
    std::vector<Eigen::VectorXd> blocks(n);
    for (int j = 0; j < n; ++j) {
        int imax = 0;
        Theta.col(j).cwiseAbs().maxCoeff(&imax);
        if (Theta(imax, j) < 0) Theta.col(j) *= -1.0;
        blocks[j] = detail::block_from_column(Theta.col(j));
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                  return detail::lex_less(x, y);
              });
    Eigen::VectorXd angles(n * m);
    for (int j = 0; j < n; ++j) angles.segment(j * m, m) = blocks[j];
    return AngleVector(angles, n);
}

/// Derivatives of vec(P_j) with respect to theta. The analytic mode is the
/// closed n = 2 form; the numeric mode central-differences theta_to_mixing
/// with step 1e-6 * max(1, |theta_l|) per coordinate.
inline ProjectorJacobian projector_jacobian(const MixingSpec& spec,
                                            JacobianMode mode = JacobianMode::analytic) {
    const int n = spec.n();
    ProjectorJacobian jac;
    if (mode == JacobianMode::analytic) {
        if (n != 2)
            throw UnsupportedDimensionError(
                "projector_jacobian: analytic mode is only available for n = 2");
        double t1 = spec.theta.angles[0], t2 = spec.theta.angles[1];
        double s1 = std::sin(t1), c1 = std::cos(t1);
        double s2 = std::sin(t2), c2 = std::cos(t2);
        double d = std::sin(t2 - t1);
        double inv = 1.0 / (d * d);
        Eigen::MatrixXd d1(4, 2);  // rows follow column-major vec: P11 P21 P12 P22
        d1 << s2 * c2, -s1 * c1,
              s2 * s2, -s1 * s1,
             -c2 * c2,  c1 * c1,
             -s2 * c2,  s1 * c1;
        d1 *= inv;
        jac.d_vec_p.push_back(d1);
        jac.d_vec_p.push_back(-d1);
        return jac;
    }
    const int p = spec.theta.dim();
    jac.d_vec_p.assign(n, Eigen::MatrixXd(n * n, p));
    for (int l = 0; l < p; ++l) {
        double h = 1e-6 * std::max(1.0, std::abs(spec.theta.angles[l]));
        AngleVector tp = spec.theta, tm = spec.theta;
        tp.angles[l] += h;
        tm.angles[l] -= h;
        Eigen::MatrixXd Tp = detail::theta_matrix_unchecked(tp);
        Eigen::MatrixXd Tm = detail::theta_matrix_unchecked(tm);
        MixingSpec sp = detail::mixing_from_matrix_unchecked(tp, Tp);
        MixingSpec sm = detail::mixing_from_matrix_unchecked(tm, Tm);
        for (int j = 0; j < n; ++j) {
            Eigen::MatrixXd diff = (sp.projectors[j] - sm.projectors[j]) / (2 * h);
            jac.d_vec_p[j].col(l) = Eigen::Map<Eigen::VectorXd>(diff.data(), n * n);
        }
    }
    return jac;
}

/// Derivative of vec(Theta) with respect to theta (n^2 x dim(theta)).
/// Analytic for n = 2; central differences otherwise.
inline Eigen::MatrixXd mixing_jacobian(const MixingSpec& spec) {
    const int n = spec.n();
    if (n == 2) {
        double t1 = spec.theta.angles[0], t2 = spec.theta.angles[1];
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(4, 2);
        J(0, 0) = -std::sin(t1);
        J(1, 0) = std::cos(t1);
        J(2, 1) = -std::sin(t2);
        J(3, 1) = std::cos(t2);
        return J;
    }
    const int p = spec.theta.dim();
    Eigen::MatrixXd J(n * n, p);
    for (int l = 0; l < p; ++l) {
        double h = 1e-6 * std::max(1.0, std::abs(spec.theta.angles[l]));
        AngleVector tp = spec.theta, tm = spec.theta;
        tp.angles[l] += h;
        tm.angles[l] -= h;
        Eigen::MatrixXd diff =
            (detail::theta_matrix_unchecked(tp) - detail::theta_matrix_unchecked(tm)) / (2 * h);
        J.col(l) = Eigen::Map<Eigen::VectorXd>(diff.data(), n * n);
    }
    return J;
}

/// Column permutation and sign assignment of `estimate` closest to
/// `reference` in Frobenius norm, searched exhaustively over all n! * 2^n
/// candidates. Intended for n <= 6.
inline MixingSpec align(const MixingSpec& estimate, const MixingSpec& reference) {
    const int n = estimate.n();
    if (reference.n() != n) throw ConfigError("align: dimension mismatch");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd best_mat = estimate.Theta;
    std::vector<int> p = perm;
    std::sort(p.begin(), p.end());
    do {
        Eigen::MatrixXd permuted(n, n);
        for (int j = 0; j < n; ++j) permuted.col(j) = estimate.Theta.col(p[j]);
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            Eigen::MatrixXd cand = permuted;
            for (int j = 0; j < n; ++j)
                if (mask & (1u << j)) cand.col(j) *= -1.0;
            double dist = (cand - reference.Theta).norm();
            if (dist < best) {
                best = dist;
                best_mat = cand;
            }
        }
    } while (std::next_permutation(p.begin(), p.end()));

    // Angles of the aligned columns as-is; they may leave the canonical range
    // since sign flips are dictated by the reference.
    const int m = detail::angles_per_column(n);
    Eigen::VectorXd angles(n * m);
    for (int j = 0; j < n; ++j) {
        if (n == 2)
            angles[j] = std::atan2(best_mat(1, j), best_mat(0, j));
        else
            angles.segment(j * m, m) = detail::block_from_column(
                best_mat.col(j) / best_mat.col(j).norm());
    }
    return detail::mixing_from_matrix_unchecked(AngleVector(angles, n), best_mat);
}

}  // namespace cfica
