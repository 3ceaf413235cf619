#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cfica/common.hpp"

namespace cfica {

struct SimplexOptions {
    double tolerance = 1e-6;
    int max_iterations = 500;
    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;
};

struct SimplexResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/// Derivative-free Nelder-Mead minimization. Every candidate vertex is passed
/// through `project` before evaluation; the projection folds the point back
/// into the feasible region (reflection at the boundary) and returns false
/// when no feasible fold exists, in which case the vertex scores +infinity.
template <typename F, typename Proj>
SimplexResult nelder_mead(F&& f, Proj&& project, const Eigen::VectorXd& x0, double step,
                          const SimplexOptions& opts = {}) {
    const int d = static_cast<int>(x0.size());
    const double inf = std::numeric_limits<double>::infinity();

    auto eval = [&](Eigen::VectorXd& x) -> double {
        if (!project(x)) return inf;
        return f(static_cast<const Eigen::VectorXd&>(x));
    };

    std::vector<Eigen::VectorXd> verts(d + 1, x0);
    std::vector<double> vals(d + 1);
    for (int i = 1; i <= d; ++i) {
        double h = step;
        for (int attempt = 0; attempt < 8; ++attempt) {
            verts[i] = x0;
            verts[i][i - 1] += h;
            if (project(verts[i]) && (verts[i] - x0).norm() > 1e-12) break;
            h *= 0.5;
        }
    }
    for (int i = 0; i <= d; ++i) vals[i] = eval(verts[i]);

    SimplexResult result;
    auto order = [&]() {
        std::vector<int> idx(d + 1);
        for (int i = 0; i <= d; ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        std::vector<Eigen::VectorXd> v2(d + 1);
        std::vector<double> f2(d + 1);
        for (int i = 0; i <= d; ++i) {
            v2[i] = verts[idx[i]];
            f2[i] = vals[idx[i]];
        }
        verts.swap(v2);
        vals.swap(f2);
    };

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        order();
        double spread = vals[d] - vals[0];
        double diam = 0;
        for (int i = 1; i <= d; ++i) diam = std::max(diam, (verts[i] - verts[0]).norm());
        if (std::isfinite(vals[d]) && (spread <= opts.tolerance && diam <= opts.tolerance)) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < d; ++i) centroid += verts[i];
        centroid /= d;

        Eigen::VectorXd xr = centroid + opts.reflection * (centroid - verts[d]);
        double fr = eval(xr);
        if (fr < vals[0]) {
            Eigen::VectorXd xe = centroid + opts.expansion * (centroid - verts[d]);
            double fe = eval(xe);
            if (fe < fr) {
                verts[d] = xe;
                vals[d] = fe;
            } else {
                verts[d] = xr;
                vals[d] = fr;
            }
        } else if (fr < vals[d - 1]) {
            verts[d] = xr;
            vals[d] = fr;
        } else {
            bool outside = fr < vals[d];
            Eigen::VectorXd xc = outside ? (centroid + opts.contraction * (centroid - verts[d]))
                                         : (centroid - opts.contraction * (centroid - verts[d]));
            double fc = eval(xc);
            if (fc < std::min(fr, vals[d])) {
                verts[d] = xc;
                vals[d] = fc;
            } else {
                for (int i = 1; i <= d; ++i) {
                    verts[i] = verts[0] + opts.shrink * (verts[i] - verts[0]);
                    vals[i] = eval(verts[i]);
                }
            }
        }
    }
    order();
    result.x = verts[0];
    result.value = vals[0];
    result.iterations = it;
    return result;
}

}  // namespace cfica
