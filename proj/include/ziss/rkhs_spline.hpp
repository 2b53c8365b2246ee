#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ziss/util.hpp"

namespace ziss {

// Reproducing kernel of the cubic-spline space on [0,1] with penalty
// J(eta) = int (eta'')^2, built from scaled Bernoulli polynomials
// k_r(x) = B_r(x)/r!:
//   R(s,u) = k2(s) k2(u) - k4(|s-u|).
// Symmetric and non-negative definite on [0,1]^2; throws std::domain_error
// outside the unit square.
double cubic_kernel(double s, double u);

// Kernel Gram matrix Q_ij = cubic_kernel(s_i, s_j) for points in [0,1].
Eigen::MatrixXd kernel_gram(const std::vector<double>& rescaled_points);

// Fitted log-mean curve eta(t) = d0 + d1 s(t) + sum_k c_k R(s_k, s(t)),
// where s(.) affinely rescales the domain onto [0,1] and s_k are the
// rescaled representer knots. The mean curve is mu(t) = exp(eta(t)).
struct SplineMeanCurve {
    std::vector<double> knots;  // representer points, original units, increasing
    Eigen::Vector2d d = Eigen::Vector2d::Zero();
    Eigen::VectorXd c;
    Interval domain;

    double log_mean(double t) const;
    double mean(double t) const { return std::exp(log_mean(t)); }
    // Penalty quadratic form c^T Q c on the rescaled knots.
    double roughness() const;

    static SplineMeanCurve constant(double log_value, Interval domain);
};

struct PoissonFitOptions {
    int max_iter = 50;
    double tol = 1e-8;  // relative change of the penalized objective
    int max_step_halvings = 20;
    // Warm start for the Newton iteration (evaluated at the data points).
    const SplineMeanCurve* warm_start = nullptr;
    // Kernel-section knots; null selects all points when N <= 200, else an
    // even-by-rank subsample of ceil(10 n^{2/9}) points.
    const std::vector<double>* representer_knots = nullptr;
    // Sample size behind the weights, used only to size the knot subsample.
    // 0 means round(sum of weights).
    std::size_t n_total_hint = 0;
    // When set, receives the penalized objective after every accepted
    // Newton step.
    std::vector<double>* objective_trace = nullptr;
};

// Minimizes sum_i w_i (y_i - eta(t_i))^2 + lambda c^T Q c over curves with
// kernel sections at the data points. Domain defaults to the knot range.
// Throws SingularSystemError when fewer than two distinct points carry
// positive weight.
SplineMeanCurve solve_penalized_wls(const std::vector<double>& knots,
                                    const std::vector<double>& weights,
                                    const std::vector<double>& working_response,
                                    double lambda,
                                    std::optional<Interval> domain = std::nullopt);

// Penalized Poisson likelihood on the log scale:
//   min sum_i w_i (exp(eta_i) - ybar_i eta_i) + (lambda/2) J(eta)
// solved by Newton iteration on working responses with step halving.
// Throws NonConvergenceError after max_iter steps without meeting tol,
// DegenerateDataError when the weighted responses are all zero.
SplineMeanCurve fit_poisson_spline(const std::vector<double>& knots,
                                   const std::vector<double>& weights,
                                   const std::vector<double>& mean_response,
                                   double lambda,
                                   std::optional<Interval> domain = std::nullopt,
                                   const PoissonFitOptions& opts = {});

struct GcvResult {
    double lambda_star = 0.0;
    std::vector<double> scores;        // V(lambda) per grid point
    std::vector<double> trace_a;       // tr A(lambda) of the converged working problem
    std::vector<double> weighted_rss;  // working-response weighted RSS
};

// V(lambda) = [n^-1 yw^T W^1/2 (I-A)^2 W^1/2 yw] / [n^-1 tr(I-A)]^2 for the
// working least-squares problem of the converged Poisson fit; n counts the
// positive-weight rows. Returns the grid minimizer and all scores.
GcvResult gcv_select_lambda(const std::vector<double>& knots,
                            const std::vector<double>& weights,
                            const std::vector<double>& mean_response,
                            const std::vector<double>& lambda_grid,
                            std::optional<Interval> domain = std::nullopt,
                            const PoissonFitOptions& opts = {});

// lambda_init = 10 n^{-2/9}.
double default_lambda_init(std::size_t n_total);

// Log-spaced grid of `size` values spanning lambda_init * 10^{+-span_decades}.
std::vector<double> default_lambda_grid(double lambda_init, int size = 31,
                                        double span_decades = 3.0);

// Shared smoothing-parameter policy: hold lambda_init during iterative
// stages, select the final lambda by GCV on the default grid.
struct LambdaPolicy {
    double lambda_init = 0.0;  // 0 = default_lambda_init(n)
    int grid_size = 31;
    double span_decades = 3.0;
    bool use_gcv = true;

    double init(std::size_t n_total) const {
        return lambda_init > 0.0 ? lambda_init : default_lambda_init(n_total);
    }
    std::vector<double> grid(std::size_t n_total) const {
        return default_lambda_grid(init(n_total), grid_size, span_decades);
    }
};

// Even-by-rank knot subsample: all points when N <= 200, else
// ceil(10 n^{2/9}) of them.
std::vector<double> select_representer_knots(const std::vector<double>& points,
                                             std::size_t n_total);

} // namespace ziss
