#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ziss/bspline.hpp"
#include "ziss/rkhs_spline.hpp"
#include "ziss/util.hpp"

namespace ziss {

// Counts binned over pseudotime: at point t_i the replicate counts
// y_{i,1..M_i}. Points are strictly increasing inside the open domain.
struct BinnedCountData {
    std::vector<double> points;
    std::vector<std::vector<int>> counts;
    Interval domain;

    BinnedCountData() = default;
    // Validates the invariants; throws std::invalid_argument.
    BinnedCountData(std::vector<double> points, std::vector<std::vector<int>> counts,
                    Interval domain);

    std::size_t num_points() const { return points.size(); }
    std::size_t total_observations() const;
    bool has_positive_count() const;
};

// Logistic-B-spline curve. p(t) = 1/(1 + exp(sum_l alpha_l b_l(t))) is the
// probability that an observation comes from the Poisson component; the
// dropout (excess-zero) probability is 1 - p(t).
struct DropoutCurve {
    BSplineBasis basis;
    Eigen::VectorXd alpha;

    double poisson_prob(double t) const;
    double dropout_prob(double t) const { return 1.0 - poisson_prob(t); }
};

// Conditional expectations q_{i,j} = E[g_{i,j} | y, mu, p], matching the
// ragged layout of the counts. q = 1 wherever y > 0.
struct Responsibilities {
    std::vector<std::vector<double>> q;
};

struct ZissFit {
    DropoutCurve dropout;
    SplineMeanCurve mean_curve;
    double lambda = 0.0;
    Responsibilities responsibilities;
    // Penalized observed-data NLL after each EM iteration at lambda_init;
    // non-increasing up to numerical slack.
    std::vector<double> trace;
    // Same record for the EM continuation at the GCV-selected lambda
    // (empty when GCV is disabled).
    std::vector<double> trace_refit;
    int iterations = 0;
    bool converged = false;
};

struct ZissConfig {
    double epsilon = 1e-4;  // relative l2 convergence of mu-hat at the points
    int max_em_iter = 200;
    int basis_m = 6;
    int basis_degree = 3;
    LambdaPolicy lambda_policy;
    int dropout_max_iter = 100;
    double dropout_tol = 1e-8;
    int poisson_max_iter = 50;
    double poisson_tol = 1e-8;
};

// Posterior probability that a zero count came from the Poisson component:
//   exp(-mu) p / (exp(-mu) p + 1 - p).
double zero_responsibility(double mu, double p_poisson);

// E step: q = 1 for positive counts, the zero_responsibility ratio at zeros.
Responsibilities e_step(const BinnedCountData& data, const SplineMeanCurve& mu_hat,
                        const DropoutCurve& p_hat);

struct DropoutObjective {
    double value = 0.0;        // F(alpha), to be maximized
    Eigen::VectorXd grad;      // dF/dalpha_k
    Eigen::MatrixXd hess;      // negative definite
};

// F(alpha) = -sum_{ij} q_{ij} u_i + sum_{ij} log sigma(u_i) with
// u_i = sum_k alpha_k b_k(t_i); exact gradient and Hessian.
DropoutObjective dropout_objective_grad_hess(const BinnedCountData& data,
                                             const Responsibilities& q,
                                             const BSplineBasis& basis,
                                             const Eigen::VectorXd& alpha);

// Damped Newton ascent on F. Returns once the sup-norm of the gradient is
// below tol or after max_iter accepted steps; F never decreases across
// accepted steps. Ill-conditioned Hessians get one ridge retry (+1e-8 on
// the diagonal) before SingularSystemError.
DropoutCurve m_step_dropout(const BinnedCountData& data, const Responsibilities& q,
                            const BSplineBasis& basis, const Eigen::VectorXd& alpha_init,
                            int max_iter = 100, double tol = 1e-8);

// P2: penalized Poisson spline with weights w_i = sum_j q_{ij} and weighted
// means ybar_i; zero-weight knots are dropped for this solve.
SplineMeanCurve m_step_mean(const BinnedCountData& data, const Responsibilities& q,
                            double lambda, const PoissonFitOptions& opts = {});

// EM driver: alternate the closed-form E step with the two M-step solvers at
// lambda_init; select lambda by GCV with the last responsibilities fixed,
// fit the final curves by continuing EM at the selected lambda, and close
// with one E step plus dropout update against the refit mean.
ZissFit fit_ziss(const BinnedCountData& data, const ZissConfig& config = {});

// Observed-data mixture NLL given per-point curves evaluated at the data
// points (no penalty term).
double mixture_nll_at_points(const BinnedCountData& data,
                             const std::vector<double>& p_poisson,
                             const std::vector<double>& mu);

double mixture_penalized_nll(const BinnedCountData& data, const SplineMeanCurve& mu_hat,
                             const DropoutCurve& p_hat, double lambda);

// Penalized observed-data NLL of a fit at its own lambda.
double penalized_nll(const BinnedCountData& data, const ZissFit& fit);

} // namespace ziss
