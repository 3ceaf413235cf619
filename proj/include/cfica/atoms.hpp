#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "cfica/angles.hpp"
#include "cfica/common.hpp"
#include "cfica/ecf.hpp"
#include "cfica/rng.hpp"

namespace cfica {

/// A finite expansion sum_k c_k exp(i s.v_k) with real coefficients. The
/// level-form moment machinery only ever produces real coefficients, which
/// keeps every Gaussian-measure inner product in real arithmetic.
struct MomentAtomSet {
    Eigen::VectorXd coef;   // c_k
    Eigen::MatrixXd freq;   // one row per atom: v_k

    int size() const { return static_cast<int>(coef.size()); }
};

/// General complex-coefficient expansion, for callers outside the hot path.
struct ComplexAtomSet {
    Eigen::VectorXcd coef;
    Eigen::MatrixXd freq;

    int size() const { return static_cast<int>(coef.size()); }
};

/// Exact Gaussian-measure inner product int conj(u(s)) w(s) pi(ds) for
/// pi = N(0, I_n):
///
///   sum_{k,l} conj(c_k) d_l exp(-||v_l - v_k||^2 / 2)
inline Complex gaussian_inner(const ComplexAtomSet& u, const ComplexAtomSet& w) {
    Complex acc(0.0, 0.0);
    for (int k = 0; k < u.size(); ++k) {
        for (int l = 0; l < w.size(); ++l) {
            double d2 = (w.freq.row(l) - u.freq.row(k)).squaredNorm();
            acc += std::conj(u.coef[k]) * w.coef[l] * std::exp(-0.5 * d2);
        }
    }
    return acc;
}

/// Real-coefficient specialization of gaussian_inner. This is the hot path of
/// kernel assembly and objective evaluation; pairs separated far enough that
/// their Gaussian weight underflows the tolerance budget are skipped.
inline double gaussian_inner(const MomentAtomSet& u, const MomentAtomSet& w) {
    const int n = static_cast<int>(u.freq.cols());
    double acc = 0.0;
    if (n == 2) {
        const double* uf = u.freq.data();  // column-major: [x0..xA, y0..yA]
        const double* wf = w.freq.data();
        const int A = u.size(), B = w.size();
        for (int k = 0; k < A; ++k) {
            const double ux = uf[k], uy = uf[A + k];
            const double ck = u.coef[k];
            double row = 0.0;
#pragma omp simd reduction(+ : row)
            for (int l = 0; l < B; ++l) {
                double dx = wf[l] - ux;
                double dy = wf[B + l] - uy;
                double d2 = dx * dx + dy * dy;
                double e = detail::fast_exp_neg(-0.5 * std::min(d2, detail::kExpCutoff));
                row += (d2 < detail::kExpCutoff ? w.coef[l] : 0.0) * e;
            }
            acc += ck * row;
        }
        return acc;
    }
    for (int k = 0; k < u.size(); ++k) {
        double row = 0.0;
        for (int l = 0; l < w.size(); ++l) {
            double d2 = (w.freq.row(l) - u.freq.row(k)).squaredNorm();
            if (d2 < detail::kExpCutoff) row += w.coef[l] * detail::fast_exp_neg(-0.5 * d2);
        }
        acc += u.coef[k] * row;
    }
    return acc;
}

/// Per-observation moment expansions Psi^tau together with the subsampling
/// state they were built with.
///
/// Psi^tau is the influence-function linearization of q_T,
///
///   Psi^tau(s) = e^{i s.eta_tau} - sum_j e^{i s.P_j eta_tau} prod_{m!=j} phi(s P_m)
///                + (n-1) prod_j phi(s P_j),
///
/// whose average over tau reproduces q_T(s, theta) exactly. Every ECF product
/// is expanded into time-tuple exponential sums; with subsampling, R tuples
/// per (tau, draw) replace the exhaustive enumeration, unbiasedly.
struct MomentAtoms {
    std::vector<MomentAtomSet> per_obs;
    Eigen::MatrixXi q_tuples;   // fixed tuples for expanding q_T itself
    int subsample_r = 0;        // 0 means exhaustive
    std::uint64_t seed = 0;
    AngleVector theta_at;
};

namespace detail {

// All tuples in [T]^len in lexicographic order.
inline void for_each_tuple(int T, int len, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> idx(len, 0);
    while (true) {
        fn(idx);
        int k = len - 1;
        while (k >= 0 && ++idx[k] == T) idx[k--] = 0;
        if (k < 0) break;
    }
}

inline long ipow(long base, int e) {
    long r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

}  // namespace detail

/// Expand q_T(s, theta) itself into atoms: the data part (one atom per
/// observation) plus the ECF product expanded over the given tuples.
inline MomentAtomSet build_q_atoms(const SensorPanel& panel, const MixingSpec& spec,
                                   const Eigen::MatrixXi& tuples) {
    const int T = panel.rows();
    const int n = panel.cols();
    const int R = static_cast<int>(tuples.rows());
    MomentAtomSet q;
    q.coef.resize(T + R);
    q.freq.resize(T + R, n);
    for (int t = 0; t < T; ++t) {
        q.coef[t] = 1.0 / T;
        q.freq.row(t) = panel.data.row(t);
    }
    for (int r = 0; r < R; ++r) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < n; ++j)
            v += spec.projectors[j] * panel.data.row(tuples(r, j)).transpose();
        q.coef[T + r] = -1.0 / R;
        q.freq.row(T + r) = v.transpose();
    }
    return q;
}

/// Only the theta-dependent product part of the q_T expansion (the data part
/// does not move with theta and can be shared across evaluations).
inline MomentAtomSet build_q_product_atoms(const SensorPanel& panel, const MixingSpec& spec,
                                           const Eigen::MatrixXi& tuples) {
    const int n = panel.cols();
    const int R = static_cast<int>(tuples.rows());
    MomentAtomSet q;
    q.coef = Eigen::VectorXd::Constant(R, -1.0 / R);
    q.freq.resize(R, n);
    for (int r = 0; r < R; ++r) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < n; ++j)
            v += spec.projectors[j] * panel.data.row(tuples(r, j)).transpose();
        q.freq.row(r) = v.transpose();
    }
    return q;
}

/// Build the per-observation moment expansions at the given mixing spec.
///
/// `subsample` is the number R of random time-tuples per observation used to
/// expand ECF products (counter-seeded per (tau, draw)); 0 requests the
/// exhaustive enumeration, feasible only for small T^n.
inline MomentAtoms build_atoms(const SensorPanel& panel, const MixingSpec& spec, int subsample,
                               std::uint64_t seed) {
    const int T = panel.rows();
    const int n = panel.cols();
    if (subsample < 0) throw ConfigError("build_atoms: subsample must be >= 0");

    // Projected data rows: proj[j] row t = (P_j eta_t)', so that an atom with
    // this frequency represents exp(i (s P_j) eta_t) as a function of s.
    std::vector<Eigen::MatrixXd> proj(n);
    for (int j = 0; j < n; ++j) proj[j] = panel.data * spec.projectors[j].transpose();

    MomentAtoms atoms;
    atoms.subsample_r = subsample;
    atoms.seed = seed;
    atoms.theta_at = spec.theta;
    atoms.per_obs.resize(T);

    if (subsample == 0) {
        long full = detail::ipow(T, n);
        long part = detail::ipow(T, n - 1);
        if (full > 200000)
            throw ConfigError("build_atoms: exhaustive tuples infeasible at this T and n");
        for (int tau = 0; tau < T; ++tau) {
            MomentAtomSet& a = atoms.per_obs[tau];
            long count = 1 + n * part + full;
            a.coef.resize(count);
            a.freq.resize(count, n);
            long pos = 0;
            a.coef[pos] = 1.0;
            a.freq.row(pos++) = panel.data.row(tau);
            for (int j = 0; j < n; ++j) {
                detail::for_each_tuple(T, n - 1, [&](const std::vector<int>& idx) {
                    Eigen::RowVectorXd v = proj[j].row(tau);
                    int pos_m = 0;
                    for (int m = 0; m < n; ++m) {
                        if (m == j) continue;
                        v += proj[m].row(idx[pos_m++]);
                    }
                    a.coef[pos] = -1.0 / part;
                    a.freq.row(pos++) = v;
                });
            }
            detail::for_each_tuple(T, n, [&](const std::vector<int>& idx) {
                Eigen::RowVectorXd v = proj[0].row(idx[0]);
                for (int m = 1; m < n; ++m) v += proj[m].row(idx[m]);
                a.coef[pos] = double(n - 1) / full;
                a.freq.row(pos++) = v;
            });
        }
        atoms.q_tuples.resize(full, n);
        long r = 0;
        detail::for_each_tuple(T, n, [&](const std::vector<int>& idx) {
            for (int m = 0; m < n; ++m) atoms.q_tuples(r, m) = idx[m];
            ++r;
        });
        return atoms;
    }

    const int R = subsample;
    for (int tau = 0; tau < T; ++tau) {
        MomentAtomSet& a = atoms.per_obs[tau];
        const int count = 1 + R * (n + 1);
        a.coef.resize(count);
        a.freq.resize(count, n);
        int pos = 0;
        a.coef[pos] = 1.0;
        a.freq.row(pos++) = panel.data.row(tau);
        for (int r = 0; r < R; ++r) {
            std::vector<int> idx(n);
            for (int j = 0; j < n; ++j)
                idx[j] = static_cast<int>(
                    derive_seed(seed, stream::kTuples, (std::uint64_t(tau) << 20) | r, j) % T);
            Eigen::RowVectorXd full = proj[0].row(idx[0]);
            for (int m = 1; m < n; ++m) full += proj[m].row(idx[m]);
            for (int j = 0; j < n; ++j) {
                a.coef[pos] = -1.0 / R;
                a.freq.row(pos) = proj[j].row(tau) + (full - proj[j].row(idx[j]));
                ++pos;
            }
            a.coef[pos] = double(n - 1) / R;
            a.freq.row(pos++) = full;
        }
    }
    atoms.q_tuples.resize(R, n);
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < n; ++j)
            atoms.q_tuples(r, j) =
                static_cast<int>(derive_seed(seed, stream::kQTuples, r, j) % T);
    return atoms;
}

/// Evaluate an atom expansion at a point (test and diagnostic use).
inline Complex evaluate_atoms(const MomentAtomSet& a, const Eigen::VectorXd& s) {
    Complex acc(0.0, 0.0);
    for (int k = 0; k < a.size(); ++k)
        acc += a.coef[k] * std::polar(1.0, a.freq.row(k).dot(s));
    return acc;
}

}  // namespace cfica
