#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "cfica/angles.hpp"
#include "cfica/atoms.hpp"
#include "cfica/common.hpp"
#include "cfica/ecf.hpp"
#include "cfica/kernel.hpp"
#include "cfica/quadrature.hpp"
#include "cfica/rng.hpp"

namespace cfica {

/// Overidentification test of the ICA representation: the regularized norm of
/// the moment function, centered and scaled by spectral sums, is one-sided
/// standard normal under the null.
struct SpecTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double degrees = 0.0;          // sum lambda^2 / (lambda^2 + alpha)
    double side_condition = 0.0;   // alpha * sum lambda^4 / (lambda^2 + alpha)^2
    bool side_condition_warning = false;
};

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Statistic from the spectrum alone; `t_q_star` is T * Q_T*(theta_hat), the
/// regularized squared norm of sqrt(T) q_T.
inline SpecTestResult spec_test_from_spectrum(double t_q_star,
                                              const Eigen::VectorXd& eigenvalues, int retained,
                                              double alpha) {
    if (retained <= 0)
        throw DegenerateKernelError("spec_test: all eigenvalues are zero; test undefined");
    SpectralSums sums = spectral_sums(eigenvalues, retained, alpha);
    SpecTestResult result;
    result.degrees = sums.s2;
    result.side_condition = alpha * sums.s4;
    result.side_condition_warning = result.side_condition < 1.0;
    result.statistic = (t_q_star - sums.s2) / std::sqrt(2.0 * sums.s4);
    result.p_value = 1.0 - std_normal_cdf(result.statistic);
    return result;
}

/// Specification test at `at` (normally theta_hat) with the kernel built at a
/// consistent preliminary estimate.
inline SpecTestResult spec_test(const MomentKernel& kernel, const SensorPanel& panel,
                                const MixingSpec& at, double alpha) {
    double q_star = efficient_objective(panel, at, kernel, alpha);
    return spec_test_from_spectrum(kernel.T * q_star, kernel.eigenvalues, kernel.retained,
                                   alpha);
}

/// Derivative of the moment function with respect to theta at point s,
/// as a 1 x dim(theta) complex row vector:
///
///   dq/dtheta_a (s) = - prod_j phi(s P_j) * sum_j
///       [ (1/T) sum_t e^{i (s P_j) eta_t} i (s' dP_j/dtheta_a eta_t) ] / phi(s P_j)
///
/// This is the exact in-sample derivative of q_T; at theta_0 the prefactor
/// prod_j phi(s P_j) coincides with phi(s) in population. Expectations are
/// replaced by sample averages and the projector Jacobian comes from
/// projector_jacobian.
inline Eigen::RowVectorXcd dq_dtheta(const SensorPanel& panel, const MixingSpec& spec,
                                     const Eigen::VectorXd& s, double trim = kDefaultTrim) {
    const int n = spec.n();
    const int T = panel.rows();
    const int d = spec.theta.dim();
    ProjectorJacobian jac =
        projector_jacobian(spec, n == 2 ? JacobianMode::analytic : JacobianMode::numeric);

    Complex prod(1.0, 0.0);
    std::vector<Complex> denom(n);
    for (int j = 0; j < n; ++j) {
        denom[j] = ecf(panel, spec.projectors[j].transpose() * s);
        if (std::abs(denom[j]) < trim)
            throw TrimmedPointError("dq_dtheta: ECF denominator below trim threshold");
        prod *= denom[j];
    }

    Eigen::RowVectorXcd result = Eigen::RowVectorXcd::Zero(d);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd phase = panel.data * (spec.projectors[j] * s);  // (s P_j) eta_t
        // s' (dP_j/dtheta_a) eta_t for all a at once.
        Eigen::MatrixXd slope(T, d);
        for (int a = 0; a < d; ++a) {
            Eigen::Map<const Eigen::MatrixXd> dP(jac.d_vec_p[j].col(a).data(), n, n);
            slope.col(a) = panel.data * (dP.transpose() * s);
        }
        Eigen::RowVectorXcd num = Eigen::RowVectorXcd::Zero(d);
        for (int t = 0; t < T; ++t) {
            Complex e = std::polar(1.0, phase[t]) * Complex(0.0, 1.0);
            for (int a = 0; a < d; ++a) num[a] += e * slope(t, a);
        }
        num /= double(T);
        result += num / denom[j];
    }
    return -prod * result;
}

/// Asymptotic covariance report for theta-hat.
struct VarianceReport {
    enum class Method { spectral, sandwich, bootstrap };

    Eigen::MatrixXd B_matrix;
    Eigen::MatrixXd V_matrix;
    Eigen::MatrixXd variance;      // Var(theta_hat), already scaled by 1/T
    Eigen::VectorXd std_errors;
    Method method = Method::spectral;
    bool precision_warning = false;
};

namespace detail {

// Atom expansion of dq/dtheta for the level form: atoms
// w_k (i s.b_k^{(a)}) e^{i s.v_k} with real weights, one linear vector per
// parameter. ECF cofactor products are expanded over subsampled tuples.
struct GradientAtoms {
    Eigen::VectorXd weight;
    Eigen::MatrixXd freq;                 // A x n
    std::vector<Eigen::MatrixXd> lin;     // per parameter: A x n
};

inline GradientAtoms build_gradient_atoms(const SensorPanel& panel, const MixingSpec& spec,
                                          int subsample, std::uint64_t seed) {
    const int T = panel.rows();
    const int n = panel.cols();
    const int d = spec.theta.dim();
    ProjectorJacobian jac =
        projector_jacobian(spec, n == 2 ? JacobianMode::analytic : JacobianMode::numeric);
    std::vector<Eigen::MatrixXd> proj(n);
    for (int j = 0; j < n; ++j) proj[j] = panel.data * spec.projectors[j].transpose();

    const int R = std::max(1, subsample);
    GradientAtoms g;
    const long A = static_cast<long>(n) * T * R;
    g.weight = Eigen::VectorXd::Constant(A, -1.0 / (double(T) * R));
    g.freq.resize(A, n);
    g.lin.assign(d, Eigen::MatrixXd(A, n));
    long pos = 0;
    for (int j = 0; j < n; ++j) {
        std::vector<Eigen::MatrixXd> dP(d);
        for (int a = 0; a < d; ++a)
            dP[a] = Eigen::Map<const Eigen::MatrixXd>(jac.d_vec_p[j].col(a).data(), n, n);
        for (int r = 0; r < R; ++r) {
            Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(n);
            for (int m = 0; m < n; ++m) {
                if (m == j) continue;
                int idx = static_cast<int>(
                    derive_seed(seed, stream::kVarTuples, (std::uint64_t(j) << 24) | r, m) % T);
                w += proj[m].row(idx);
            }
            for (int t = 0; t < T; ++t, ++pos) {
                g.freq.row(pos) = proj[j].row(t) + w;
                for (int a = 0; a < d; ++a)
                    g.lin[a].row(pos) = (dP[a] * panel.data.row(t).transpose()).transpose();
            }
        }
    }
    return g;
}

// beta'_{a,tau} = <dq/dtheta_a, Psi^tau>
//              = - sum_{k,l} w_k d_l (b_k^{(a)} . (v_k - u_l)) E(v_k - u_l).
inline Eigen::MatrixXd gradient_beta(const GradientAtoms& g, const MomentAtoms& atoms) {
    const int T = static_cast<int>(atoms.per_obs.size());
    const int d = static_cast<int>(g.lin.size());
    const int n = static_cast<int>(g.freq.cols());
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(d, T);
#pragma omp parallel for schedule(dynamic, 8)
    for (int tau = 0; tau < T; ++tau) {
        const MomentAtomSet& a = atoms.per_obs[tau];
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (long k = 0; k < g.weight.size(); ++k) {
            const double wk = g.weight[k];
            for (int l = 0; l < a.size(); ++l) {
                Eigen::VectorXd x(n);
                double d2 = 0;
                for (int c = 0; c < n; ++c) {
                    x[c] = g.freq(k, c) - a.freq(l, c);
                    d2 += x[c] * x[c];
                }
                if (d2 >= kExpCutoff) continue;
                double e = wk * a.coef[l] * fast_exp_neg(-0.5 * d2);
                for (int p = 0; p < d; ++p) {
                    double dot = 0;
                    for (int c = 0; c < n; ++c) dot += g.lin[p](k, c) * x[c];
                    acc[p] -= dot * e;
                }
            }
        }
        beta.col(tau) = acc;
    }
    return beta;
}

// Log-form gradient on the kernel grid:
// dq_log/dtheta_a(s) = - sum_j [ (1/T) sum_t i (s' dP_ja eta_t) e^{i(sP_j)eta_t} ] / phi(sP_j).
inline Eigen::MatrixXcd log_gradient_on_grid(const SensorPanel& panel, const MixingSpec& spec,
                                             const MomentKernel& kernel) {
    const int n = spec.n();
    const int T = panel.rows();
    const int d = spec.theta.dim();
    const int G = static_cast<int>(kernel.grid_weights.size());
    ProjectorJacobian jac =
        projector_jacobian(spec, n == 2 ? JacobianMode::analytic : JacobianMode::numeric);
    Eigen::MatrixXcd grad = Eigen::MatrixXcd::Zero(d, G);
    for (int g = 0; g < G; ++g) {
        Eigen::VectorXd s = kernel.grid_points.row(g).transpose();
        for (int j = 0; j < n; ++j) {
            Complex denom = ecf(panel, spec.projectors[j].transpose() * s);
            if (std::abs(denom) < kernel.trim) continue;  // consistent with trimming q to 0
            Eigen::VectorXd phase = panel.data * (spec.projectors[j] * s);
            for (int a = 0; a < d; ++a) {
                Eigen::Map<const Eigen::MatrixXd> dP(jac.d_vec_p[j].col(a).data(), n, n);
                Eigen::VectorXd slope = panel.data * (dP.transpose() * s);
                Complex num(0.0, 0.0);
                for (int t = 0; t < T; ++t)
                    num += slope[t] * std::polar(1.0, phase[t]);
                grad(a, g) -= Complex(0.0, 1.0) * num / (double(T) * denom);
            }
        }
    }
    return grad;
}

template <typename MatLike>
Eigen::MatrixXd spectral_bracket(const MomentKernel& kernel, const MatLike& projections,
                                 double alpha) {
    const int d = static_cast<int>(projections.rows());
    Eigen::MatrixXd bracket = Eigen::MatrixXd::Zero(d, d);
    for (int t = 0; t < kernel.retained; ++t) {
        double lam = kernel.eigenvalues[t];
        double w = lam / (lam * lam + alpha) / (kernel.T * lam);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                bracket(a, b) +=
                    w * std::real(Complex(projections(a, t)) * std::conj(Complex(projections(b, t))));
    }
    return 0.5 * (bracket + bracket.transpose());
}

}  // namespace detail

/// Efficient asymptotic variance of theta-hat from the regularized spectral
/// bracket sum_t lambda/(lambda^2+alpha) <dq/dtheta, chi_t><chi_t, dq/dtheta>,
/// inverted and scaled by 1/T. Scalar products run through the closed-form
/// Gaussian inner products on the gradient atom expansion (level form) or the
/// kernel grid (log form).
inline VarianceReport efficient_variance(const MomentKernel& kernel, const SensorPanel& panel,
                                         const MixingSpec& spec, double alpha,
                                         int gradient_subsample = 50) {
    const int d = spec.theta.dim();
    Eigen::MatrixXd bracket;
    if (!kernel.complex_form) {
        detail::GradientAtoms g = detail::build_gradient_atoms(
            panel, spec, std::min(gradient_subsample, panel.rows()), kernel.atoms.seed);
        Eigen::MatrixXd beta = detail::gradient_beta(g, kernel.atoms);  // d x T
        Eigen::MatrixXd proj = beta * kernel.vectors_real;              // d x T
        bracket = detail::spectral_bracket(kernel, proj, alpha);
    } else {
        Eigen::MatrixXcd gw = detail::log_gradient_on_grid(panel, spec, kernel);
        for (int g = 0; g < gw.cols(); ++g) gw.col(g) *= std::sqrt(kernel.grid_weights[g]);
        Eigen::MatrixXcd beta = gw * kernel.psi_grid.adjoint();  // d x T
        Eigen::MatrixXcd proj = beta * kernel.vectors_cplx;
        bracket = detail::spectral_bracket(kernel, proj, alpha);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(bracket);
    if (es.eigenvalues()[0] <= 1e-14 * std::max(1.0, es.eigenvalues()[d - 1])) {
        Eigen::VectorXd null_dir = es.eigenvectors().col(0);
        std::string dir = "(";
        for (int i = 0; i < d; ++i)
            dir += std::to_string(null_dir[i]) + (i + 1 < d ? ", " : ")");
        throw RankDeficiencyError("efficient_variance: bracket is rank deficient along " + dir);
    }
    VarianceReport report;
    report.method = VarianceReport::Method::spectral;
    report.B_matrix = bracket;
    report.V_matrix = bracket;
    report.variance = bracket.inverse() / double(kernel.T);
    report.variance = 0.5 * (report.variance + report.variance.transpose());
    report.std_errors = report.variance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return report;
}

/// Sandwich pieces assembled from precomputed node values: D_g is the d x 2
/// matrix (Re dq/dtheta, Im dq/dtheta) at node g and K(g, g') the 2 x 2
/// real/imaginary covariance block.
inline void sandwich_from_nodes(const std::vector<Eigen::MatrixXd>& D,
                                const Eigen::VectorXd& weights,
                                const std::function<Eigen::Matrix2d(int, int)>& K,
                                Eigen::MatrixXd& B, Eigen::MatrixXd& V) {
    const int G = static_cast<int>(D.size());
    const int d = static_cast<int>(D[0].rows());
    B = Eigen::MatrixXd::Zero(d, d);
    V = Eigen::MatrixXd::Zero(d, d);
    for (int g = 0; g < G; ++g) B += weights[g] * D[g] * D[g].transpose();
    for (int g = 0; g < G; ++g)
        for (int h = 0; h < G; ++h)
            V += weights[g] * weights[h] * D[g] * K(g, h) * D[h].transpose();
}

/// Sandwich variance B^{-1} V B^{-1} / T for the identity-weighted (stage-1)
/// estimator, with both integrals evaluated by tensor Gauss-Hermite
/// quadrature. Doubling the per-axis nodes and seeing B move by more than 1%
/// sets the precision warning.
inline VarianceReport sandwich_variance(const SensorPanel& panel, const MixingSpec& spec,
                                        int nodes_per_axis = 8, double trim = kDefaultTrim) {
    const int n = spec.n();
    const int d = spec.theta.dim();

    auto assemble_B = [&](const QuadratureGrid& grid, std::vector<Eigen::MatrixXd>* D_out,
                          Eigen::MatrixXd& B) {
        const int G = grid.size();
        std::vector<Eigen::MatrixXd> D(G);
        for (int g = 0; g < G; ++g) {
            Eigen::RowVectorXcd dq = dq_dtheta(panel, spec, grid.points.row(g).transpose(), trim);
            D[g].resize(d, 2);
            D[g].col(0) = dq.real().transpose();
            D[g].col(1) = dq.imag().transpose();
        }
        B = Eigen::MatrixXd::Zero(d, d);
        for (int g = 0; g < G; ++g) B += grid.weights[g] * D[g] * D[g].transpose();
        if (D_out) *D_out = std::move(D);
    };

    QuadratureGrid grid = gauss_hermite_grid(nodes_per_axis, n);
    std::vector<Eigen::MatrixXd> D;
    Eigen::MatrixXd B;
    assemble_B(grid, &D, B);

    Eigen::MatrixXd B_fine;
    QuadratureGrid fine = gauss_hermite_grid(2 * nodes_per_axis, n);
    assemble_B(fine, nullptr, B_fine);
    bool warn = (B - B_fine).norm() > 0.01 * B_fine.norm();

    const int G = grid.size();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, d);
    for (int g = 0; g < G; ++g) {
        for (int h = 0; h < G; ++h) {
            Eigen::Matrix2d K2 = cov_kernel_level_block(panel, spec, grid.points.row(g).transpose(),
                                                        grid.points.row(h).transpose());
            V += grid.weights[g] * grid.weights[h] * D[g] * K2 * D[h].transpose();
        }
    }

    Eigen::MatrixXd Binv = B.inverse();
    VarianceReport report;
    report.method = VarianceReport::Method::sandwich;
    report.B_matrix = B;
    report.V_matrix = V;
    report.variance = Binv * V * Binv.transpose() / double(panel.rows());
    report.variance = 0.5 * (report.variance + report.variance.transpose());
    report.std_errors = report.variance.diagonal().cwiseMax(0.0).cwiseSqrt();
    report.precision_warning = warn;
    return report;
}

/// Delta method: covariance of vec(Theta-hat) from the covariance of
/// theta-hat, J Var(theta) J' with J = d vec(Theta) / d theta'.
inline Eigen::MatrixXd delta_to_Theta(const Eigen::MatrixXd& vcov_theta,
                                      const MixingSpec& spec) {
    Eigen::MatrixXd J = mixing_jacobian(spec);
    return J * vcov_theta * J.transpose();
}

}  // namespace cfica
