#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "cfica/atoms.hpp"
#include "cfica/common.hpp"
#include "cfica/ecf.hpp"
#include "cfica/quadrature.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cfica {

/// Eigenvalues (of M/T) below this fraction of the largest are truncated from
/// every spectral sum.
constexpr double kEigenTruncation = 1e-12;

/// Chooses the Tikhonov parameter alpha.
struct RegularizationPolicy {
    enum class Mode { fixed, rate };

    Mode mode = Mode::rate;
    double c = 0.05;
    double exponent = -0.25;  // rate mode: alpha = c * lambda_max(M/T) * T^exponent

    void validate() const {
        if (!(c > 0)) throw ConfigError("RegularizationPolicy: scale c must be positive");
        if (mode == Mode::rate && !(exponent > -1.0 / 3 && exponent < 0))
            throw ConfigError(
                "RegularizationPolicy: rate exponent must lie in (-1/3, 0) so that "
                "alpha -> 0 while alpha^3 T -> infinity");
    }
};

/// The T x T moment kernel M, its spectrum, and the state needed to evaluate
/// the regularized objective. Level-form kernels are real symmetric (all atom
/// coefficients are real and the Gaussian measure is symmetric); log-form
/// kernels are complex Hermitian and live on a quadrature grid.
struct MomentKernel {
    bool complex_form = false;
    int T = 0;

    // Level form.
    MomentAtoms atoms;
    Eigen::MatrixXd M_real;
    Eigen::MatrixXd vectors_real;

    // Log form.
    Eigen::MatrixXcd M_cplx;
    Eigen::MatrixXcd vectors_cplx;
    Eigen::MatrixXd grid_points;     // active quadrature nodes (rows)
    Eigen::VectorXd grid_weights;    // renormalized over the active set
    Eigen::MatrixXcd psi_grid;       // G_{tau,g} = Psi^tau(s_g) sqrt(w_g)
    double trim = kDefaultTrim;
    int trimmed_points = 0;
    double trimmed_mass = 0.0;
    int ray_points = kDefaultRayPoints;

    // Spectrum of M/T: descending, negatives clipped to zero.
    Eigen::VectorXd eigenvalues;
    double min_raw_eigenvalue = 0.0;
    int retained = 0;

    double alpha = 0.0;
    AngleVector theta_at;

    double lambda_max() const { return eigenvalues.size() > 0 ? eigenvalues[0] : 0.0; }
};

namespace detail {

inline void finish_spectrum(MomentKernel& kernel, Eigen::VectorXd raw_ascending,
                            double diag_scale) {
    const int T = kernel.T;
    kernel.eigenvalues.resize(T);
    for (int i = 0; i < T; ++i) kernel.eigenvalues[i] = raw_ascending[T - 1 - i];
    kernel.min_raw_eigenvalue = kernel.eigenvalues[T - 1];
    if (kernel.min_raw_eigenvalue < -1e-8 * std::max(1.0, diag_scale))
        throw EigenSolverError("kernel spectrum has a significantly negative eigenvalue: " +
                               std::to_string(kernel.min_raw_eigenvalue));
    for (int i = 0; i < T; ++i) kernel.eigenvalues[i] = std::max(kernel.eigenvalues[i], 0.0);
    double cutoff = kEigenTruncation * kernel.lambda_max();
    kernel.retained = 0;
    while (kernel.retained < T && kernel.eigenvalues[kernel.retained] > cutoff)
        ++kernel.retained;
}

}  // namespace detail

/// Assemble the level-form kernel from per-observation atom expansions.
/// Every entry is an exact Gaussian-measure inner product; no numerical
/// integration is involved. Entries are independent, so assembly parallelizes
/// with results identical under any scheduling.
inline MomentKernel build_kernel(MomentAtoms atoms) {
    MomentKernel kernel;
    kernel.complex_form = false;
    kernel.T = static_cast<int>(atoms.per_obs.size());
    kernel.theta_at = atoms.theta_at;
    const int T = kernel.T;
    kernel.M_real.resize(T, T);
    const long pairs = static_cast<long>(T) * (T + 1) / 2;
#pragma omp parallel for schedule(dynamic, 16)
    for (long idx = 0; idx < pairs; ++idx) {
        // Map the flat index to (row, col) with col <= row.
        long row = static_cast<long>((std::sqrt(8.0 * idx + 1) - 1) / 2);
        while ((row + 1) * (row + 2) / 2 <= idx) ++row;
        long col = idx - row * (row + 1) / 2;
        double v = gaussian_inner(atoms.per_obs[col], atoms.per_obs[row]);
        kernel.M_real(row, col) = v;
        kernel.M_real(col, row) = v;
    }
    kernel.atoms = std::move(atoms);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel.M_real / T);
    if (es.info() != Eigen::Success) {
        double dmax = kernel.M_real.diagonal().cwiseAbs().maxCoeff();
        double dmin = kernel.M_real.diagonal().cwiseAbs().minCoeff();
        throw EigenSolverError("build_kernel: eigensolver failed; diagonal condition ratio " +
                               std::to_string(dmax / std::max(dmin, 1e-300)));
    }
    Eigen::VectorXd raw = es.eigenvalues();
    kernel.vectors_real = es.eigenvectors().rowwise().reverse();
    detail::finish_spectrum(kernel, raw, kernel.M_real.diagonal().cwiseAbs().maxCoeff() / T);
    return kernel;
}

namespace detail {

// Log-form moment values Psi^tau(s) = q_log(s) + sum_j a_j (e^{i (s P_j) eta_tau}
// / phi(s P_j) - 1) for all tau at one grid point.
inline void log_psi_column(const SensorPanel& panel, const MixingSpec& spec,
                           const Eigen::VectorXd& s, const std::vector<Complex>& proj_cf,
                           Complex q_log_value, Eigen::VectorXcd& out) {
    const int T = panel.rows();
    const int n = spec.n();
    out = Eigen::VectorXcd::Constant(T, q_log_value);
    for (int j = 0; j <= n; ++j) {
        Eigen::VectorXd pj =
            (j == 0) ? s : Eigen::VectorXd(spec.projectors[j - 1].transpose() * s);
        Eigen::VectorXd phase = panel.data * pj;
        Complex inv = sign_coeff(j) / proj_cf[j];
        for (int t = 0; t < T; ++t)
            out[t] += inv * std::polar(1.0, phase[t]) - sign_coeff(j);
    }
}

}  // namespace detail

/// Assemble the log-form kernel on a Gauss-Hermite grid. Grid points where
/// any needed ECF falls below `trim` are excluded and the remaining weights
/// renormalized. The s-dependent denominators of the log form preclude the
/// closed-form atom path, so entries are quadrature sums here.
inline MomentKernel build_kernel_log(const SensorPanel& panel, const MixingSpec& spec,
                                     const QuadratureGrid& grid, double trim = kDefaultTrim,
                                     int ray_points = kDefaultRayPoints) {
    if (!(trim > 0 && trim < 1)) throw ConfigError("build_kernel_log: trim must lie in (0,1)");
    const int T = panel.rows();
    const int n = spec.n();
    MomentKernel kernel;
    kernel.complex_form = true;
    kernel.T = T;
    kernel.theta_at = spec.theta;
    kernel.trim = trim;
    kernel.ray_points = ray_points;

    const int G = grid.size();
    std::vector<int> active;
    std::vector<std::vector<Complex>> cf(G);
    for (int g = 0; g < G; ++g) {
        Eigen::VectorXd s = grid.points.row(g).transpose();
        cf[g] = detail::ecf_at_projected(panel, spec, s);
        bool ok = true;
        for (int j = 0; j <= n; ++j)
            if (std::abs(cf[g][j]) < trim) ok = false;
        if (ok)
            active.push_back(g);
        else
            kernel.trimmed_mass += grid.weights[g];
    }
    kernel.trimmed_points = G - static_cast<int>(active.size());
    if (active.empty())
        throw DegenerateKernelError("build_kernel_log: every grid point is trimmed");

    const int Ga = static_cast<int>(active.size());
    double mass = grid.weights(active).sum();
    kernel.grid_points.resize(Ga, grid.points.cols());
    kernel.grid_weights.resize(Ga);
    kernel.psi_grid.resize(T, Ga);
    Eigen::VectorXcd col(T);
    for (int i = 0; i < Ga; ++i) {
        int g = active[i];
        Eigen::VectorXd s = grid.points.row(g).transpose();
        kernel.grid_points.row(i) = grid.points.row(g);
        kernel.grid_weights[i] = grid.weights[g] / mass;
        Complex qv(0.0, 0.0);
        for (int j = 0; j <= n; ++j) {
            Eigen::VectorXd pj =
                (j == 0) ? s : Eigen::VectorXd(spec.projectors[j - 1].transpose() * s);
            qv += sign_coeff(j) * log_ecf_ray(panel, pj, ray_points);
        }
        detail::log_psi_column(panel, spec, s, cf[g], qv, col);
        kernel.psi_grid.col(i) = col * std::sqrt(kernel.grid_weights[i]);
    }
    kernel.M_cplx = kernel.psi_grid * kernel.psi_grid.adjoint();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(kernel.M_cplx / double(T));
    if (es.info() != Eigen::Success)
        throw EigenSolverError("build_kernel_log: eigensolver failed");
    Eigen::VectorXd raw = es.eigenvalues();
    kernel.vectors_cplx = es.eigenvectors().rowwise().reverse();
    detail::finish_spectrum(kernel, raw,
                            kernel.M_cplx.diagonal().real().cwiseAbs().maxCoeff() / T);
    return kernel;
}

/// Tikhonov parameter from the policy: rate mode returns
/// c * lambda_max(M/T) * T^exponent, fixed mode returns c.
inline double make_alpha(const RegularizationPolicy& policy, const MomentKernel& kernel) {
    policy.validate();
    if (kernel.lambda_max() <= 0)
        throw DegenerateKernelError("make_alpha: kernel has no positive eigenvalue");
    if (policy.mode == RegularizationPolicy::Mode::fixed) return policy.c;
    return policy.c * kernel.lambda_max() * std::pow(double(kernel.T), policy.exponent);
}

namespace detail {

// Q* from the eigenprojections p_t = c_t' beta, where beta_tau = <q, Psi^tau>:
//
//   Q* = sum_t [lambda_t / (lambda_t^2 + alpha)] |<q, chi_t>|^2,
//   |<q, chi_t>|^2 = |c_t' beta|^2 / (T lambda_t),
//
// summed over retained eigenvalues.
template <typename VecLike>
double spectral_objective_from_beta(const MomentKernel& kernel, const VecLike& projections,
                                    double alpha) {
    double total = 0.0;
    for (int t = 0; t < kernel.retained; ++t) {
        double lam = kernel.eigenvalues[t];
        double p2 = std::norm(Complex(projections[t]));
        total += lam / (lam * lam + alpha) * p2 / (kernel.T * lam);
    }
    return total;
}

}  // namespace detail

/// Scalar products <q, Psi^tau> of the level-form moment against each
/// per-observation expansion.
inline Eigen::VectorXd level_beta(const MomentKernel& kernel, const MomentAtomSet& q_atoms) {
    const int T = kernel.T;
    Eigen::VectorXd beta(T);
#pragma omp parallel for schedule(static)
    for (int tau = 0; tau < T; ++tau)
        beta[tau] = gaussian_inner(kernel.atoms.per_obs[tau], q_atoms);
    return beta;
}

/// Level-form efficient objective at the given mixing spec, with the kernel
/// held fixed. q_T is expanded with the kernel's stored tuple draws, so the
/// objective is a continuous function of theta.
inline double efficient_objective_level(const SensorPanel& panel, const MixingSpec& spec,
                                        const MomentKernel& kernel, double alpha) {
    MomentAtomSet q = build_q_atoms(panel, spec, kernel.atoms.q_tuples);
    Eigen::VectorXd beta = level_beta(kernel, q);
    Eigen::VectorXd proj = kernel.vectors_real.transpose() * beta;
    return detail::spectral_objective_from_beta(kernel, proj, alpha);
}

/// Log-form moment values on the kernel's active grid at an arbitrary theta.
/// Points trimmed at this theta contribute zero and are counted.
inline Eigen::VectorXcd log_q_on_grid(const SensorPanel& panel, const MixingSpec& spec,
                                      const MomentKernel& kernel, int* trimmed_count = nullptr) {
    const int Ga = static_cast<int>(kernel.grid_weights.size());
    const int n = spec.n();
    Eigen::VectorXcd q = Eigen::VectorXcd::Zero(Ga);
    int trimmed = 0;
    for (int g = 0; g < Ga; ++g) {
        Eigen::VectorXd s = kernel.grid_points.row(g).transpose();
        auto pts = detail::projected_points(spec, s);
        bool ok = true;
        for (int j = 0; j <= n && ok; ++j)
            if (std::abs(ecf(panel, pts[j])) < kernel.trim) ok = false;
        if (!ok) {
            ++trimmed;
            continue;
        }
        Complex qv(0.0, 0.0);
        for (int j = 0; j <= n; ++j)
            qv += sign_coeff(j) * log_ecf_ray(panel, pts[j], kernel.ray_points);
        q[g] = qv;
    }
    if (trimmed_count) *trimmed_count = trimmed;
    return q;
}

inline double efficient_objective_log(const SensorPanel& panel, const MixingSpec& spec,
                                      const MomentKernel& kernel, double alpha,
                                      int* trimmed_count = nullptr) {
    Eigen::VectorXcd q = log_q_on_grid(panel, spec, kernel, trimmed_count);
    Eigen::VectorXcd qw = q.cwiseProduct(kernel.grid_weights.cwiseSqrt().cast<Complex>());
    Eigen::VectorXcd beta = kernel.psi_grid.conjugate() * qw;
    Eigen::VectorXcd proj = kernel.vectors_cplx.transpose() * beta;
    return detail::spectral_objective_from_beta(kernel, proj, alpha);
}

/// Regularized efficient objective Q_T* at `spec`, using a kernel built at a
/// consistent preliminary estimate.
inline double efficient_objective(const SensorPanel& panel, const MixingSpec& spec,
                                  const MomentKernel& kernel, double alpha) {
    if (!(alpha > 0)) throw ConfigError("efficient_objective: alpha must be positive");
    return kernel.complex_form ? efficient_objective_log(panel, spec, kernel, alpha)
                               : efficient_objective_level(panel, spec, kernel, alpha);
}

/// sum of lambda^2/(lambda^2+alpha) and lambda^4/(lambda^2+alpha)^2 over the
/// retained spectrum; the centering and scale terms of the specification test.
struct SpectralSums {
    double s2 = 0.0;
    double s4 = 0.0;
};

inline SpectralSums spectral_sums(const Eigen::VectorXd& eigenvalues, int retained,
                                  double alpha) {
    SpectralSums sums;
    for (int t = 0; t < retained; ++t) {
        double l2 = eigenvalues[t] * eigenvalues[t];
        double r = l2 / (l2 + alpha);
        sums.s2 += r;
        sums.s4 += r * r;
    }
    return sums;
}

}  // namespace cfica
