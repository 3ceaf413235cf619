#pragma once

// Independent numerical oracles for the test suite. These deliberately avoid
// the library's own quadrature and linear-algebra paths: Gauss-Hermite nodes
// come from Newton iteration on the Hermite recurrence rather than the
// Golub-Welsch eigen decomposition used in the library.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

// Physicists' Gauss-Hermite rule: int f(x) e^{-x^2} dx ~= sum w_i f(x_i).
// Positive roots found largest-first by Newton iteration on the orthonormal
// Hermite recurrence, then mirrored; output ascending.
inline void gauss_hermite_raw(int m, std::vector<double>& x, std::vector<double>& w) {
    x.assign(m, 0.0);
    w.assign(m, 0.0);
    const double pi14 = std::pow(M_PI, -0.25);
    std::vector<double> roots, weights;
    double z = 0;
    for (int i = 0; i < (m + 1) / 2; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * m + 1) - 1.85575 * std::pow(2.0 * m + 1, -1.0 / 6);
        else if (i == 1)
            z -= 1.14 * std::pow(double(m), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * roots[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * roots[1];
        else
            z = 2.0 * z - roots[i - 2];
        double pp = 0;
        for (int iter = 0; iter < 200; ++iter) {
            double p1 = pi14, p2 = 0;
            for (int k = 0; k < m; ++k) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (k + 1)) * p2 - std::sqrt(double(k) / (k + 1)) * p3;
            }
            pp = std::sqrt(2.0 * m) * p2;
            double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        roots.push_back(z);
        weights.push_back(2.0 / (pp * pp));
    }
    for (std::size_t i = 0; i < roots.size(); ++i) {
        x[m - 1 - i] = roots[i];
        x[i] = -roots[i];
        w[m - 1 - i] = weights[i];
        w[i] = weights[i];
    }
}

// Tensor-product integration of f against the standard normal on R^n.
inline std::complex<double> gaussian_integral(
    int n, int nodes_per_axis,
    const std::function<std::complex<double>(const Eigen::VectorXd&)>& f) {
    std::vector<double> x, w;
    gauss_hermite_raw(nodes_per_axis, x, w);
    const double norm = std::pow(M_PI, -n / 2.0);
    long total = 1;
    for (int k = 0; k < n; ++k) total *= nodes_per_axis;
    std::complex<double> acc(0.0, 0.0);
    std::vector<int> idx(n, 0);
    Eigen::VectorXd s(n);
    for (long g = 0; g < total; ++g) {
        double wt = 1.0;
        for (int k = 0; k < n; ++k) {
            s[k] = std::sqrt(2.0) * x[idx[k]];
            wt *= w[idx[k]];
        }
        acc += wt * f(s);
        for (int k = n - 1; k >= 0; --k) {
            if (++idx[k] < nodes_per_axis) break;
            idx[k] = 0;
        }
    }
    return norm * acc;
}

}  // namespace oracle
