#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfica/angles.hpp"
#include "cfica/atoms.hpp"
#include "cfica/common.hpp"
#include "cfica/ecf.hpp"
#include "cfica/inference.hpp"
#include "cfica/kernel.hpp"
#include "cfica/quadrature.hpp"
#include "cfica/rng.hpp"
#include "cfica/simplex.hpp"

namespace cfica {

enum class EstimatorForm { level, log_form };

inline const char* form_name(EstimatorForm f) {
    return f == EstimatorForm::level ? "level" : "log";
}

struct EstimatorConfig {
    EstimatorForm form = EstimatorForm::level;
    double stage1_grid_resolution = kPi / 24;
    int refine_starts = 3;
    double simplex_tolerance = 1e-6;
    int max_iterations = 500;
    RegularizationPolicy regularization;
    int subsample_r = 100;  // capped at T when estimating
    std::uint64_t seed = 1;
    double epsilon = kDefaultEpsilon;
    double trim = kDefaultTrim;
    int ray_points = kDefaultRayPoints;
    int log_grid_nodes = 16;  // per axis, log form
    bool compute_vcov = true;
    int gradient_subsample = 50;
    bool continuous_update = false;  // rebuild the kernel every 10 iterations
    double max_trim_mass = 0.5;
    std::optional<AngleVector> warm_start;  // skip the stage-1 grid search

    void validate() const {
        if (!(stage1_grid_resolution > 0) ||
            static_cast<int>(kPi / stage1_grid_resolution) < 8)
            throw ConfigError("EstimatorConfig: grid resolution must cut (0, pi) into >= 8 cells");
        if (refine_starts < 0) throw ConfigError("EstimatorConfig: refine_starts must be >= 0");
        if (!(simplex_tolerance > 0)) throw ConfigError("EstimatorConfig: tolerance must be > 0");
        if (max_iterations <= 0) throw ConfigError("EstimatorConfig: max_iterations must be > 0");
        if (subsample_r < 0) throw ConfigError("EstimatorConfig: subsample must be >= 0");
        if (!(epsilon > 0)) throw ConfigError("EstimatorConfig: epsilon must be > 0");
        if (!(trim > 0 && trim < 1)) throw ConfigError("EstimatorConfig: trim must be in (0,1)");
        if (ray_points < 2) throw ConfigError("EstimatorConfig: ray_points must be >= 2");
        if (log_grid_nodes < 4) throw ConfigError("EstimatorConfig: log_grid_nodes must be >= 4");
        regularization.validate();
    }
};

struct EstimateDiagnostics {
    int iterations = 0;
    bool converged = false;
    bool flat_objective = false;
    double stage1_grid_spread = 0.0;
    double objective_at_stage1 = 0.0;
    int eigen_retained = 0;
    double lambda_max = 0.0;
    double lambda_min_retained = 0.0;
    int trimmed_points = 0;
    double trimmed_mass = 0.0;
    int eval_failures = 0;
    int subsample_r = 0;
    std::string form;
};

struct EstimateResult {
    AngleVector theta_hat;
    MixingSpec mixing;
    double objective_value = 0.0;
    AngleVector stage1_theta;
    Eigen::MatrixXd vcov_theta;
    Eigen::MatrixXd vcov_Theta;
    SpecTestResult spec_test;
    double alpha_used = 0.0;
    EstimateDiagnostics diagnostics;
};

namespace detail {

inline double fold_to_0_pi(double x) {
    x = std::fmod(x, 2 * kPi);
    if (x < 0) x += 2 * kPi;
    if (x > kPi) x = 2 * kPi - x;
    return x;
}

/// Fold a proposed angle vector back into the canonical region (reflection at
/// the boundaries, then reordering). Returns false when the folded point
/// violates the epsilon separation, which the optimizer treats as rejection.
inline bool fold_into_region(Eigen::VectorXd& angles, int n, double epsilon) {
    if (n == 2) {
        double a = fold_to_0_pi(angles[0]);
        double b = fold_to_0_pi(angles[1]);
        if (a > b) std::swap(a, b);
        angles[0] = a;
        angles[1] = b;
        double diff = b - a;
        return a > 1e-9 && b < kPi - 1e-9 && diff >= epsilon && diff <= kPi - epsilon;
    }
    const int m = n - 1;
    std::vector<Eigen::VectorXd> blocks(n);
    for (int j = 0; j < n; ++j) {
        blocks[j] = angles.segment(j * m, m);
        for (int k = 0; k < m - 1; ++k) blocks[j][k] = fold_to_0_pi(blocks[j][k]);
        double last = std::fmod(blocks[j][m - 1], 2 * kPi);
        if (last < 0) last += 2 * kPi;
        blocks[j][m - 1] = last;
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return lex_less(x, y); });
    for (int j = 0; j < n; ++j) angles.segment(j * m, m) = blocks[j];
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double ang = column_separation(column_from_block(blocks[i], n),
                                           column_from_block(blocks[j], n));
            if (ang < epsilon) return false;
        }
    return true;
}

/// Flat-weight stage-1 objective for the level form,
/// int |q_T(s, theta)|^2 pi(ds) = <q, q>, with the data-block contribution
/// (which does not depend on theta) precomputed once.
class Stage1LevelObjective {
public:
    Stage1LevelObjective(const SensorPanel& panel, const Eigen::MatrixXi& tuples)
        : panel_(panel), tuples_(tuples) {
        const int T = panel.rows();
        data_atoms_.coef = Eigen::VectorXd::Constant(T, 1.0 / T);
        data_atoms_.freq = panel.data;
        data_data_ = gaussian_inner(data_atoms_, data_atoms_);
    }

    double operator()(const MixingSpec& spec) const {
        MomentAtomSet prod = build_q_product_atoms(panel_, spec, tuples_);
        return data_data_ + 2.0 * gaussian_inner(data_atoms_, prod) +
               gaussian_inner(prod, prod);
    }

private:
    const SensorPanel& panel_;
    Eigen::MatrixXi tuples_;
    MomentAtomSet data_atoms_;
    double data_data_ = 0.0;
};

/// Flat-weight stage-1 objective for the log form: quadrature sum of
/// |q_log|^2 over the grid, trimmed points contributing zero.
class Stage1LogObjective {
public:
    Stage1LogObjective(const SensorPanel& panel, const QuadratureGrid& grid, double trim,
                       int ray_points)
        : panel_(panel), grid_(grid), trim_(trim), ray_points_(ray_points) {}

    double operator()(const MixingSpec& spec) const {
        double total = 0.0;
        for (int g = 0; g < grid_.size(); ++g) {
            Eigen::VectorXd s = grid_.points.row(g).transpose();
            auto q = q_log(panel_, spec, s, trim_, ray_points_);
            if (q) total += grid_.weights[g] * std::norm(*q);
        }
        return total;
    }

private:
    const SensorPanel& panel_;
    const QuadratureGrid& grid_;
    double trim_;
    int ray_points_;
};

/// Stage-2 objective for the level form: Q_T*(theta) with the kernel fixed.
/// The data-block scalar products <data-part, Psi^tau> are theta-independent
/// and precomputed; each evaluation only prices the product atoms.
class EfficientLevelObjective {
public:
    EfficientLevelObjective(const SensorPanel& panel, const MomentKernel& kernel, double alpha)
        : panel_(panel), kernel_(kernel), alpha_(alpha) {
        const int T = panel.rows();
        MomentAtomSet data;
        data.coef = Eigen::VectorXd::Constant(T, 1.0 / T);
        data.freq = panel.data;
        beta0_ = level_beta(kernel, data);
    }

    double operator()(const MixingSpec& spec) const {
        MomentAtomSet prod = build_q_product_atoms(panel_, spec, kernel_.atoms.q_tuples);
        Eigen::VectorXd beta = beta0_ + level_beta(kernel_, prod);
        Eigen::VectorXd proj = kernel_.vectors_real.transpose() * beta;
        return spectral_objective_from_beta(kernel_, proj, alpha_);
    }

private:
    const SensorPanel& panel_;
    const MomentKernel& kernel_;
    double alpha_;
    Eigen::VectorXd beta0_;
};

struct ThetaKey {
    std::vector<double> v;
    bool operator<(const ThetaKey& o) const { return v < o.v; }
};

inline ThetaKey theta_key(const Eigen::VectorXd& angles) {
    return ThetaKey{std::vector<double>(angles.data(), angles.data() + angles.size())};
}

}  // namespace detail

struct Stage1Result {
    AngleVector theta;
    double objective = 0.0;
    double grid_spread = 0.0;
    bool flat_objective = false;
    int cells_evaluated = 0;
};

namespace detail {

// Grid centers over the ordered n = 2 region, or seeded random canonical
// points for n >= 3 where a full grid is not practical.
inline std::vector<AngleVector> stage1_starts(int n, const EstimatorConfig& config) {
    std::vector<AngleVector> starts;
    if (n == 2) {
        int m = std::max(8, static_cast<int>(kPi / config.stage1_grid_resolution + 1e-9));
        double h = kPi / m;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                Eigen::VectorXd a(2);
                a << (i + 0.5) * h, (j + 0.5) * h;
                if (fold_into_region(a, 2, config.epsilon)) starts.emplace_back(a, 2);
            }
        return starts;
    }
    const int m = n - 1;
    const int want = 128 * n;
    auto eng = make_engine(config.seed, stream::kStarts, 0xa11);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    while (static_cast<int>(starts.size()) < want) {
        Eigen::VectorXd a(n * m);
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < m - 1; ++k) a[j * m + k] = u01(eng) * kPi;
            a[j * m + m - 1] = u01(eng) * 2 * kPi;
        }
        if (fold_into_region(a, n, config.epsilon)) starts.emplace_back(a, n);
    }
    return starts;
}

template <typename Objective>
Stage1Result stage1_search(const SensorPanel& panel, const EstimatorConfig& config,
                           Objective&& objective) {
    const int n = panel.cols();
    auto starts = stage1_starts(n, config);
    if (starts.empty())
        throw ConfigError("stage1_estimate: no feasible grid cell; epsilon too large");

    std::vector<double> values(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i)
        values[i] = objective(theta_to_mixing(starts[i], config.epsilon));

    std::vector<std::size_t> order(starts.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    double vmin = values[order.front()];
    double vmax = values[order.back()];

    auto project = [&](Eigen::VectorXd& x) { return fold_into_region(x, n, config.epsilon); };
    auto f = [&](const Eigen::VectorXd& x) {
        return objective(theta_to_mixing(AngleVector(x, n), config.epsilon));
    };
    SimplexOptions opts;
    opts.tolerance = config.simplex_tolerance;
    opts.max_iterations = config.max_iterations;

    Stage1Result best;
    best.cells_evaluated = static_cast<int>(starts.size());
    best.grid_spread = vmax - vmin;
    best.flat_objective = best.grid_spread < 1e-3;
    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    int n_refine = std::max(1, config.refine_starts);
    for (int k = 0; k < n_refine && k < static_cast<int>(order.size()); ++k) {
        const AngleVector& start = starts[order[k]];
        SimplexResult r =
            nelder_mead(f, project, start.angles, config.stage1_grid_resolution / 2, opts);
        if (r.value < best_val) {
            best_val = r.value;
            best_x = r.x;
        }
    }
    best.theta = AngleVector(best_x, n);
    best.objective = best_val;
    return best;
}

}  // namespace detail

/// Stage 1: globally search the flat-weight objective on a grid over the
/// ordered angle region, then refine the best cells by simplex. A nearly flat
/// grid (spread below 1e-3) raises the non-identification diagnostic that
/// Gaussian sources produce.
inline Stage1Result stage1_estimate(const SensorPanel& panel, const EstimatorConfig& config) {
    config.validate();
    const int T = panel.rows();
    const int R = std::min(config.subsample_r, T);
    if (config.form == EstimatorForm::level) {
        const int ncols = panel.cols();
        Eigen::MatrixXi tuples;
        if (R == 0) {
            long full = detail::ipow(T, ncols);
            if (full > 200000)
                throw ConfigError("stage1_estimate: exhaustive tuples infeasible at this T");
            tuples.resize(full, ncols);
            long row = 0;
            detail::for_each_tuple(T, ncols, [&](const std::vector<int>& idx) {
                for (int j = 0; j < ncols; ++j) tuples(row, j) = idx[j];
                ++row;
            });
        } else {
            tuples.resize(R, ncols);
            for (int r = 0; r < R; ++r)
                for (int j = 0; j < ncols; ++j)
                    tuples(r, j) =
                        static_cast<int>(derive_seed(config.seed, stream::kQTuples, r, j) % T);
        }
        detail::Stage1LevelObjective obj(panel, tuples);
        return detail::stage1_search(panel, config,
                                     [&](const MixingSpec& spec) { return obj(spec); });
    }
    QuadratureGrid grid = gauss_hermite_grid(config.log_grid_nodes, panel.cols());
    detail::Stage1LogObjective obj(panel, grid, config.trim, config.ray_points);
    return detail::stage1_search(panel, config,
                                 [&](const MixingSpec& spec) { return obj(spec); });
}

namespace detail {

inline MomentKernel build_kernel_for(const SensorPanel& panel, const MixingSpec& at,
                                     const EstimatorConfig& config) {
    const int T = panel.rows();
    if (config.form == EstimatorForm::level) {
        int R = std::min(config.subsample_r, T);
        return build_kernel(build_atoms(panel, at, R, config.seed));
    }
    QuadratureGrid grid = gauss_hermite_grid(config.log_grid_nodes, panel.cols());
    MomentKernel kernel =
        build_kernel_log(panel, at, grid, config.trim, config.ray_points);
    if (kernel.trimmed_mass > config.max_trim_mass)
        throw TrimmedPointError(
            "log-form estimation aborted: " + std::to_string(kernel.trimmed_mass * 100) +
            "% of the grid mass is trimmed; the ECF decays too fast (fat tails or atoms)");
    return kernel;
}

}  // namespace detail

/// Two-stage efficient estimation: a consistent flat-weight stage 1, then
/// minimization of the regularized spectral objective with the kernel built
/// at the stage-1 point. `config.form` selects the level or log moment form.
inline EstimateResult efficient_estimate(const SensorPanel& panel,
                                         const EstimatorConfig& config) {
    config.validate();
    const int n = panel.cols();
    const int T = panel.rows();

    EstimateResult result;
    result.diagnostics.form = form_name(config.form);
    result.diagnostics.subsample_r =
        config.form == EstimatorForm::level ? std::min(config.subsample_r, T) : 0;

    Stage1Result s1;
    if (config.warm_start) {
        s1.theta = *config.warm_start;
        s1.flat_objective = false;
    } else {
        s1 = stage1_estimate(panel, config);
    }
    result.stage1_theta = s1.theta;
    result.diagnostics.flat_objective = s1.flat_objective;
    result.diagnostics.stage1_grid_spread = s1.grid_spread;

    MixingSpec spec1 = theta_to_mixing(s1.theta, config.epsilon);
    MomentKernel kernel = detail::build_kernel_for(panel, spec1, config);
    double alpha = make_alpha(config.regularization, kernel);
    kernel.alpha = alpha;

    // Objective evaluation with memoization: the simplex revisits vertices.
    std::map<detail::ThetaKey, double> memo;
    int eval_failures = 0;
    std::optional<detail::EfficientLevelObjective> level_obj;
    if (config.form == EstimatorForm::level) level_obj.emplace(panel, kernel, alpha);

    auto evaluate = [&](const Eigen::VectorXd& x) -> double {
        auto key = detail::theta_key(x);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        double value;
        try {
            MixingSpec spec = theta_to_mixing(AngleVector(x, n), config.epsilon);
            value = level_obj ? (*level_obj)(spec)
                              : efficient_objective_log(panel, spec, kernel, alpha);
        } catch (const Error&) {
            ++eval_failures;
            value = std::numeric_limits<double>::infinity();
        }
        memo.emplace(std::move(key), value);
        return value;
    };
    auto project = [&](Eigen::VectorXd& x) {
        return detail::fold_into_region(x, n, config.epsilon);
    };

    result.diagnostics.objective_at_stage1 = evaluate(s1.theta.angles);

    SimplexOptions opts;
    opts.tolerance = config.simplex_tolerance;
    opts.max_iterations = config.max_iterations;

    std::vector<Eigen::VectorXd> starts{s1.theta.angles};
    auto eng = make_engine(config.seed, stream::kStarts, 1);
    std::normal_distribution<double> jitter(0.0, 0.15);
    while (static_cast<int>(starts.size()) < 1 + config.refine_starts) {
        Eigen::VectorXd x = s1.theta.angles;
        for (int i = 0; i < x.size(); ++i) x[i] += jitter(eng);
        if (project(x)) starts.push_back(x);
    }

    Eigen::VectorXd best_x = s1.theta.angles;
    double best_val = std::numeric_limits<double>::infinity();
    int total_iter = 0;
    bool converged = false;
    double step0 = std::max(0.02, config.stage1_grid_resolution / 4);
    for (const auto& start : starts) {
        SimplexResult r;
        if (!config.continuous_update) {
            r = nelder_mead(evaluate, project, start, step0, opts);
        } else {
            // Rebuild the kernel every 10 iterations at the incumbent point.
            Eigen::VectorXd x = start;
            SimplexOptions chunk = opts;
            int budget = opts.max_iterations;
            while (budget > 0) {
                chunk.max_iterations = std::min(10, budget);
                r = nelder_mead(evaluate, project, x, step0, chunk);
                budget -= chunk.max_iterations;
                if (r.converged || (r.x - x).norm() < config.simplex_tolerance) break;
                x = r.x;
                MixingSpec spec = theta_to_mixing(AngleVector(x, n), config.epsilon);
                kernel = detail::build_kernel_for(panel, spec, config);
                alpha = make_alpha(config.regularization, kernel);
                kernel.alpha = alpha;
                if (level_obj) level_obj.emplace(panel, kernel, alpha);
                memo.clear();
            }
        }
        total_iter += r.iterations;
        converged = converged || r.converged;
        if (r.value < best_val) {
            best_val = r.value;
            best_x = r.x;
        }
    }

    result.theta_hat = AngleVector(best_x, n);
    result.mixing = theta_to_mixing(result.theta_hat, config.epsilon);
    result.objective_value = best_val;
    result.alpha_used = alpha;
    result.diagnostics.iterations = total_iter;
    result.diagnostics.converged = converged;
    result.diagnostics.eval_failures = eval_failures;
    result.diagnostics.eigen_retained = kernel.retained;
    result.diagnostics.lambda_max = kernel.lambda_max();
    result.diagnostics.lambda_min_retained =
        kernel.retained > 0 ? kernel.eigenvalues[kernel.retained - 1] : 0.0;
    result.diagnostics.trimmed_points = kernel.trimmed_points;
    result.diagnostics.trimmed_mass = kernel.trimmed_mass;

    result.spec_test = spec_test_from_spectrum(T * best_val, kernel.eigenvalues,
                                               kernel.retained, alpha);
    if (config.compute_vcov) {
        VarianceReport var = efficient_variance(kernel, panel, result.mixing, alpha,
                                                config.gradient_subsample);
        result.vcov_theta = var.variance;
        result.vcov_Theta = delta_to_Theta(var.variance, result.mixing);
    }
    return result;
}

/// Log-form estimator: efficient_estimate with the log moment form.
inline EstimateResult log_form_estimate(const SensorPanel& panel, EstimatorConfig config) {
    config.form = EstimatorForm::log_form;
    return efficient_estimate(panel, config);
}

}  // namespace cfica
