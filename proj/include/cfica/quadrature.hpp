#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cfica/common.hpp"

namespace cfica {

/// Nodes and probability weights integrating against the standard Gaussian
/// measure on R^n. Rows of `points` are nodes; `weights` sums to one.
struct QuadratureGrid {
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;

    int size() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

/// One-dimensional Gauss-Hermite rule adapted to the standard normal weight:
/// sum_i w_i f(x_i) integrates f against N(0,1) exactly for polynomials of
/// degree < 2m. Nodes via Golub-Welsch on the Hermite Jacobi matrix.
inline void gauss_hermite_nodes(int m, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    if (m < 1) throw ConfigError("gauss_hermite_nodes: need at least one node");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd sub(m - 1 > 0 ? m - 1 : 0);
    for (int k = 1; k < m; ++k) sub[k - 1] = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub);
    if (es.info() != Eigen::Success)
        throw EigenSolverError("gauss_hermite_nodes: tridiagonal eigensolve failed");
    nodes.resize(m);
    weights.resize(m);
    for (int i = 0; i < m; ++i) {
        nodes[i] = es.eigenvalues()[i] * std::sqrt(2.0);  // physicists' -> N(0,1)
        double v0 = es.eigenvectors()(0, i);
        weights[i] = v0 * v0;  // already normalized: sum of squares is 1
    }
}

/// Tensor-product grid over R^n with m nodes per axis (m^n points).
inline QuadratureGrid gauss_hermite_grid(int m, int n) {
    Eigen::VectorXd x, w;
    gauss_hermite_nodes(m, x, w);
    long total = 1;
    for (int k = 0; k < n; ++k) total *= m;
    QuadratureGrid grid;
    grid.points.resize(total, n);
    grid.weights.resize(total);
    std::vector<int> idx(n, 0);
    for (long g = 0; g < total; ++g) {
        double wt = 1.0;
        for (int k = 0; k < n; ++k) {
            grid.points(g, k) = x[idx[k]];
            wt *= w[idx[k]];
        }
        grid.weights[g] = wt;
        for (int k = n - 1; k >= 0; --k) {
            if (++idx[k] < m) break;
            idx[k] = 0;
        }
    }
    return grid;
}

}  // namespace cfica
