#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "cfica/angles.hpp"
#include "cfica/common.hpp"

namespace cfica {

/// T x n panel of sensors, either observed directly or produced as residuals
/// of a first-stage regression.
struct SensorPanel {
    enum class Source { observed, first_stage_residuals };

    Eigen::MatrixXd data;
    Source source = Source::observed;

    SensorPanel() = default;
    explicit SensorPanel(Eigen::MatrixXd d, Source src = Source::observed)
        : data(std::move(d)), source(src) {
        if (!data.allFinite()) throw ConfigError("SensorPanel: non-finite entry");
        if (rows() < cols() + 2)
            throw ConfigError("SensorPanel: need T >= n + 2 observations");
    }

    int rows() const { return static_cast<int>(data.rows()); }
    int cols() const { return static_cast<int>(data.cols()); }
};

/// Sign coefficients of the log-form identity: a_0 = 1 and a_j = -1 for the
/// projector terms, with P_0 the identity.
struct SignVector {
    int n = 0;
    double a(int j) const { return j == 0 ? 1.0 : -1.0; }
};

inline constexpr double sign_coeff(int j) { return j == 0 ? 1.0 : -1.0; }

/// Default trimming threshold for empirical characteristic functions that
/// appear in denominators or logarithms.
constexpr double kDefaultTrim = 0.05;

/// Number of points used to track the complex logarithm of the ECF along a
/// ray from the origin.
constexpr int kDefaultRayPoints = 16;

/// Empirical characteristic function (1/T) sum_t exp(i s.eta_t).
/// Evaluation points are column vectors; the row-vector product s P_j of the
/// functional equation corresponds to the point P_j^T s here.
inline Complex ecf(const SensorPanel& panel, const Eigen::VectorXd& s) {
    if (!s.allFinite()) throw ConfigError("ecf: non-finite evaluation point");
    const int T = panel.rows();
    Eigen::VectorXd phase = panel.data * s;
    double re = 0, im = 0;
    for (int t = 0; t < T; ++t) {
        re += std::cos(phase[t]);
        im += std::sin(phase[t]);
    }
    return Complex(re / T, im / T);
}

namespace detail {

/// Evaluation points s, P_1^T s, ..., P_n^T s (index 0 is s itself).
inline std::vector<Eigen::VectorXd> projected_points(const MixingSpec& spec,
                                                     const Eigen::VectorXd& s) {
    std::vector<Eigen::VectorXd> pts;
    pts.reserve(spec.n() + 1);
    pts.push_back(s);
    for (const auto& P : spec.projectors) pts.push_back(P.transpose() * s);
    return pts;
}

}  // namespace detail

/// Level-form moment function q_T(s, theta) = phi(s) - prod_j phi(s P_j).
inline Complex q_level(const SensorPanel& panel, const MixingSpec& spec,
                       const Eigen::VectorXd& s) {
    Complex prod(1.0, 0.0);
    for (const auto& P : spec.projectors) prod *= ecf(panel, P.transpose() * s);
    return ecf(panel, s) - prod;
}

/// Complex logarithm of the ECF at point v with the branch tracked
/// continuously along the ray from the origin through v.
///
/// Throws EvaluationError when the phase advances too fast between ray points
/// for the unwrapping to be trustworthy; a finer ray grid (larger
/// `ray_points`) resolves that.
inline Complex log_ecf_ray(const SensorPanel& panel, const Eigen::VectorXd& v,
                           int ray_points = kDefaultRayPoints) {
    const int T = panel.rows();
    Eigen::VectorXd phase = panel.data * v;
    const double du = 1.0 / ray_points;
    // Incremental rotations: advance exp(i u p_t) by exp(i du p_t) per step.
    std::vector<Complex> step(T), cur(T, Complex(1.0, 0.0));
    for (int t = 0; t < T; ++t) step[t] = std::polar(1.0, du * phase[t]);
    double arg = 0.0;
    Complex prev(1.0, 0.0);
    Complex value;
    for (int m = 1; m <= ray_points; ++m) {
        Complex sum(0.0, 0.0);
        for (int t = 0; t < T; ++t) {
            cur[t] *= step[t];
            sum += cur[t];
        }
        value = sum / static_cast<double>(T);
        if (std::abs(value) < 1e-12)
            throw EvaluationError(
                "log_ecf_ray: ECF vanishes along the ray; phase cannot be tracked");
        double delta = std::arg(value / prev);
        if (std::abs(delta) > kPi / 2)
            throw EvaluationError(
                "log_ecf_ray: phase winds too fast between ray points; "
                "increase ray_points");
        arg += delta;
        prev = value;
    }
    return Complex(std::log(std::abs(value)), arg);
}

/// Log-form moment function sum_j a_j Log phi(s P_j) with the branch tracked
/// along rays from the origin. Returns nullopt (a trimmed marker) when any
/// |phi(s P_j)| falls below `trim`.
inline std::optional<Complex> q_log(const SensorPanel& panel, const MixingSpec& spec,
                                    const Eigen::VectorXd& s, double trim = kDefaultTrim,
                                    int ray_points = kDefaultRayPoints) {
    if (!(trim > 0 && trim < 1)) throw ConfigError("q_log: trim must lie in (0, 1)");
    auto pts = detail::projected_points(spec, s);
    for (const auto& v : pts)
        if (std::abs(ecf(panel, v)) < trim) return std::nullopt;
    Complex total(0.0, 0.0);
    for (std::size_t j = 0; j < pts.size(); ++j)
        total += sign_coeff(static_cast<int>(j)) * log_ecf_ray(panel, pts[j], ray_points);
    return total;
}

/// Tabulated ECF values over a list of points: phi(s) and the per-projector
/// values phi(s P_j), j = 1..n.
struct CfTable {
    Eigen::MatrixXd points;               // G x n
    Eigen::VectorXcd values;              // phi(s_g)
    Eigen::MatrixXcd projector_values;    // G x n, column j-1 is phi(s_g P_j)
};

inline CfTable make_cf_table(const SensorPanel& panel, const MixingSpec& spec,
                             const Eigen::MatrixXd& points) {
    const int G = static_cast<int>(points.rows());
    const int n = spec.n();
    CfTable table;
    table.points = points;
    table.values.resize(G);
    table.projector_values.resize(G, n);
    for (int g = 0; g < G; ++g) {
        Eigen::VectorXd s = points.row(g).transpose();
        table.values[g] = ecf(panel, s);
        for (int j = 0; j < n; ++j)
            table.projector_values(g, j) = ecf(panel, spec.projectors[j].transpose() * s);
    }
    return table;
}

namespace detail {

// phi_j(s) = prod_{m != j, m >= 1} phi(s P_m), with phi_0(s) = 1. Index 0 of
// `proj_ecf` is phi(s) itself (unused in the product), indices 1..n the
// projector values.
inline Complex cofactor_product(const std::vector<Complex>& proj_ecf, int j) {
    if (j == 0) return Complex(1.0, 0.0);
    const int n = static_cast<int>(proj_ecf.size()) - 1;
    Complex prod(1.0, 0.0);
    for (int m = 1; m <= n; ++m)
        if (m != j) prod *= proj_ecf[m];
    return prod;
}

inline std::vector<Complex> ecf_at_projected(const SensorPanel& panel, const MixingSpec& spec,
                                             const Eigen::VectorXd& s) {
    auto pts = projected_points(spec, s);
    std::vector<Complex> vals(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = ecf(panel, pts[i]);
    return vals;
}

}  // namespace detail

/// Complex covariance kernel of the level-form moment process,
/// K(r, s) = lim T Cov(q_T(r), conj q_T(s)):
///
///   K(r, s) = sum_{k,j} a_k a_j phi_k(r) conj(phi_j(s))
///             (phi(r_k - s_j) - phi(r_k) conj(phi(s_j)))
///
/// with r_k = r P_k, s_j = s P_j, and empirical characteristic functions
/// plugged in. Valid everywhere, including where the ECF vanishes.
inline Complex cov_kernel_level(const SensorPanel& panel, const MixingSpec& spec,
                                const Eigen::VectorXd& r, const Eigen::VectorXd& s) {
    const int n = spec.n();
    auto rpts = detail::projected_points(spec, r);
    auto spts = detail::projected_points(spec, s);
    auto rvals = detail::ecf_at_projected(panel, spec, r);
    auto svals = detail::ecf_at_projected(panel, spec, s);
    Complex total(0.0, 0.0);
    for (int k = 0; k <= n; ++k) {
        Complex wk = sign_coeff(k) * detail::cofactor_product(rvals, k);
        for (int j = 0; j <= n; ++j) {
            Complex wj = sign_coeff(j) * std::conj(detail::cofactor_product(svals, j));
            Complex cross = ecf(panel, rpts[k] - spts[j]);
            total += wk * wj * (cross - rvals[k] * std::conj(svals[j]));
        }
    }
    return total;
}

/// Pseudo-covariance companion of cov_kernel_level,
/// lim T Cov(q_T(r), q_T(s)) without conjugation.
inline Complex pseudo_cov_kernel_level(const SensorPanel& panel, const MixingSpec& spec,
                                       const Eigen::VectorXd& r, const Eigen::VectorXd& s) {
    const int n = spec.n();
    auto rpts = detail::projected_points(spec, r);
    auto spts = detail::projected_points(spec, s);
    auto rvals = detail::ecf_at_projected(panel, spec, r);
    auto svals = detail::ecf_at_projected(panel, spec, s);
    Complex total(0.0, 0.0);
    for (int k = 0; k <= n; ++k) {
        Complex wk = sign_coeff(k) * detail::cofactor_product(rvals, k);
        for (int j = 0; j <= n; ++j) {
            Complex wj = sign_coeff(j) * detail::cofactor_product(svals, j);
            Complex cross = ecf(panel, rpts[k] + spts[j]);
            total += wk * wj * (cross - rvals[k] * svals[j]);
        }
    }
    return total;
}

/// 2 x 2 covariance of (Re q(r), Im q(r)) against (Re q(s), Im q(s)),
/// assembled from the complex kernel and its pseudo-covariance companion via
/// the real/imaginary identities. No denominators appear, so this is valid
/// everywhere the complex form is.
inline Eigen::Matrix2d cov_kernel_level_block(const SensorPanel& panel, const MixingSpec& spec,
                                              const Eigen::VectorXd& r,
                                              const Eigen::VectorXd& s) {
    Complex K = cov_kernel_level(panel, spec, r, s);
    Complex P = pseudo_cov_kernel_level(panel, spec, r, s);
    Eigen::Matrix2d block;
    block(0, 0) = 0.5 * std::real(P + K);
    block(0, 1) = 0.5 * std::imag(P - K);
    block(1, 0) = 0.5 * std::imag(P + K);
    block(1, 1) = 0.5 * std::real(K - P);
    return block;
}

/// Covariance kernel of the log-form moment process,
/// sum_{k,j} a_k a_j [ phi(r_k - s_j) / (phi(r_k) conj(phi(s_j))) - 1 ].
/// Throws TrimmedPointError when a denominator falls below `trim`.
inline Complex cov_kernel_log(const SensorPanel& panel, const MixingSpec& spec,
                              const Eigen::VectorXd& r, const Eigen::VectorXd& s,
                              double trim = kDefaultTrim) {
    const int n = spec.n();
    auto rpts = detail::projected_points(spec, r);
    auto spts = detail::projected_points(spec, s);
    auto rvals = detail::ecf_at_projected(panel, spec, r);
    auto svals = detail::ecf_at_projected(panel, spec, s);
    for (int k = 0; k <= n; ++k) {
        if (std::abs(rvals[k]) < trim || std::abs(svals[k]) < trim)
            throw TrimmedPointError("cov_kernel_log: ECF below trim threshold");
    }
    Complex total(0.0, 0.0);
    for (int k = 0; k <= n; ++k)
        for (int j = 0; j <= n; ++j) {
            Complex cross = ecf(panel, rpts[k] - spts[j]);
            total += sign_coeff(k) * sign_coeff(j) *
                     (cross / (rvals[k] * std::conj(svals[j])) - 1.0);
        }
    return total;
}

}  // namespace cfica
