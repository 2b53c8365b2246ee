#include "ziss/ziss_em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ziss/errors.hpp"

namespace ziss {

namespace {

std::vector<double> eval_log_means(const SplineMeanCurve& curve,
                                   const std::vector<double>& points) {
    std::vector<double> eta(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) eta[i] = curve.log_mean(points[i]);
    return eta;
}

// Sufficient statistics of P2: per-point weight sum and weighted mean count.
struct P2Stats {
    std::vector<double> points;
    std::vector<double> weights;  // w_i = sum_j q_{ij}
    std::vector<double> ybar;     // sum_j q_{ij} y_{ij} / w_i
    std::size_t effective = 0;    // points with w_i > 0
};

P2Stats reduce_p2(const BinnedCountData& data, const Responsibilities& q, bool drop_zero) {
    P2Stats s;
    const std::size_t n = data.num_points();
    s.points.reserve(n);
    s.weights.reserve(n);
    s.ybar.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double w = 0.0, wy = 0.0;
        for (std::size_t j = 0; j < data.counts[i].size(); ++j) {
            w += q.q[i][j];
            wy += q.q[i][j] * data.counts[i][j];
        }
        if (drop_zero && w <= 0.0) continue;
        s.points.push_back(data.points[i]);
        s.weights.push_back(w);
        s.ybar.push_back(w > 0.0 ? wy / w : 0.0);
        if (w > 0.0) ++s.effective;
    }
    return s;
}

void check_q_shape(const BinnedCountData& data, const Responsibilities& q) {
    if (q.q.size() != data.counts.size()) {
        throw std::invalid_argument("responsibilities do not match the data layout");
    }
    for (std::size_t i = 0; i < q.q.size(); ++i) {
        if (q.q[i].size() != data.counts[i].size()) {
            throw std::invalid_argument("responsibilities do not match the data layout");
        }
    }
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

BinnedCountData::BinnedCountData(std::vector<double> points_in,
                                 std::vector<std::vector<int>> counts_in, Interval domain_in)
    : points(std::move(points_in)), counts(std::move(counts_in)), domain(domain_in) {
    if (points.size() != counts.size()) {
        throw std::invalid_argument("BinnedCountData: points/counts size mismatch");
    }
    if (points.empty()) {
        throw std::invalid_argument("BinnedCountData: no points");
    }
    if (!(domain.lo < domain.hi)) {
        throw std::invalid_argument("BinnedCountData: empty domain");
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!domain.contains_open(points[i])) {
            throw std::invalid_argument("BinnedCountData: point outside the open domain");
        }
        if (i > 0 && points[i] <= points[i - 1]) {
            throw std::invalid_argument("BinnedCountData: points must be strictly increasing");
        }
        if (counts[i].empty()) {
            throw std::invalid_argument("BinnedCountData: every point needs at least one count");
        }
        for (int y : counts[i]) {
            if (y < 0) throw std::invalid_argument("BinnedCountData: negative count");
        }
        total += counts[i].size();
    }
    if (total < 2) {
        throw std::invalid_argument("BinnedCountData: need at least two observations");
    }
}

std::size_t BinnedCountData::total_observations() const {
    std::size_t n = 0;
    for (const auto& row : counts) n += row.size();
    return n;
}

bool BinnedCountData::has_positive_count() const {
    for (const auto& row : counts) {
        for (int y : row) {
            if (y > 0) return true;
        }
    }
    return false;
}

double DropoutCurve::poisson_prob(double t) const {
    const double u = alpha.dot(basis.evaluate(t));
    return logistic(-u);
}

double zero_responsibility(double mu, double p_poisson) {
    const double a = std::exp(-mu) * p_poisson;
    return a / (a + 1.0 - p_poisson);
}

Responsibilities e_step(const BinnedCountData& data, const SplineMeanCurve& mu_hat,
                        const DropoutCurve& p_hat) {
    Responsibilities r;
    r.q.resize(data.num_points());
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        const double mu = mu_hat.mean(data.points[i]);
        const double p = p_hat.poisson_prob(data.points[i]);
        const double q0 = zero_responsibility(mu, p);
        r.q[i].resize(data.counts[i].size());
        for (std::size_t j = 0; j < data.counts[i].size(); ++j) {
            r.q[i][j] = data.counts[i][j] > 0 ? 1.0 : q0;
        }
    }
    return r;
}

DropoutObjective dropout_objective_grad_hess(const BinnedCountData& data,
                                             const Responsibilities& q,
                                             const BSplineBasis& basis,
                                             const Eigen::VectorXd& alpha) {
    check_q_shape(data, q);
    if (alpha.size() != basis.size()) {
        throw std::invalid_argument("dropout objective: alpha/basis size mismatch");
    }
    const auto n = static_cast<Eigen::Index>(data.num_points());
    DropoutObjective out;
    out.grad = Eigen::VectorXd::Zero(basis.size());
    out.hess = Eigen::MatrixXd::Zero(basis.size(), basis.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const Eigen::VectorXd b = basis.evaluate(data.points[idx]);
        const double u = alpha.dot(b);
        const double m_i = static_cast<double>(data.counts[idx].size());
        double q_i = 0.0;
        for (double qv : q.q[idx]) q_i += qv;
        // F contribution: -q_i u + M_i log sigma(u).
        out.value += -q_i * u - m_i * log1p_exp(-u);
        // dF/dalpha = b * (M_i p(t_i) - q_i) with p = sigma(-u).
        const double p = logistic(-u);
        out.grad += (m_i * p - q_i) * b;
        // Concave objective: -M_i sigma(u)(1 - sigma(u)) b b^T.
        out.hess -= m_i * p * (1.0 - p) * b * b.transpose();
    }
    return out;
}

DropoutCurve m_step_dropout(const BinnedCountData& data, const Responsibilities& q,
                            const BSplineBasis& basis, const Eigen::VectorXd& alpha_init,
                            int max_iter, double tol) {
    check_q_shape(data, q);
    if (!alpha_init.allFinite()) {
        throw std::invalid_argument("m_step_dropout: alpha_init must be finite");
    }
    Eigen::VectorXd alpha = alpha_init;
    DropoutObjective cur = dropout_objective_grad_hess(data, q, basis, alpha);
    if (!std::isfinite(cur.value)) {
        throw NonConvergenceError("m_step_dropout: objective not finite at the start");
    }
    for (int iter = 0; iter < max_iter; ++iter) {
        if (cur.grad.lpNorm<Eigen::Infinity>() <= tol) break;

        Eigen::MatrixXd neg_h = -cur.hess;
        Eigen::VectorXd step;
        bool ok = false;
        for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
            if (ldlt.info() == Eigen::Success) {
                step = ldlt.solve(cur.grad);
                ok = step.allFinite() &&
                     (neg_h * step - cur.grad).norm() <= 1e-6 * (cur.grad.norm() + 1.0);
            }
            if (!ok) neg_h.diagonal().array() += 1e-8;
        }
        if (!ok) {
            throw SingularSystemError("m_step_dropout: Hessian is numerically singular");
        }

        // Damped ascent: halve until F does not decrease.
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= 30; ++h) {
            const Eigen::VectorXd cand = alpha + scale * step;
            const DropoutObjective next = dropout_objective_grad_hess(data, q, basis, cand);
            if (std::isfinite(next.value) && next.value >= cur.value) {
                alpha = cand;
                cur = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) {
            if (!std::isfinite(cur.value)) {
                throw NonConvergenceError(
                    "m_step_dropout: objective became non-finite, |grad|_inf = " +
                    std::to_string(cur.grad.lpNorm<Eigen::Infinity>()));
            }
            break;  // fully damped step cannot improve: numerically stationary
        }
    }
    return DropoutCurve{basis, alpha};
}

SplineMeanCurve m_step_mean(const BinnedCountData& data, const Responsibilities& q,
                            double lambda, const PoissonFitOptions& opts) {
    check_q_shape(data, q);
    const P2Stats stats = reduce_p2(data, q, /*drop_zero=*/true);
    if (stats.effective < 2) {
        throw DegenerateDataError("m_step_mean: fewer than two points with positive "
                                  "responsibility mass");
    }
    try {
        return fit_poisson_spline(stats.points, stats.weights, stats.ybar, lambda,
                                  data.domain, opts);
    } catch (const DegenerateDataError&) {
        throw DegenerateDataError("m_step_mean: no effective Poisson observations");
    }
}

double mixture_nll_at_points(const BinnedCountData& data, const std::vector<double>& p_poisson,
                             const std::vector<double>& mu) {
    if (p_poisson.size() != data.num_points() || mu.size() != data.num_points()) {
        throw std::invalid_argument("mixture_nll_at_points: length mismatch");
    }
    double nll = 0.0;
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        const double p = p_poisson[i];
        const double m = mu[i];
        for (int y : data.counts[i]) {
            if (y == 0) {
                nll -= std::log(p * std::exp(-m) + (1.0 - p));
            } else {
                nll -= std::log(p) - m + y * std::log(m) - std::lgamma(y + 1.0);
            }
        }
    }
    return nll;
}

double mixture_penalized_nll(const BinnedCountData& data, const SplineMeanCurve& mu_hat,
                             const DropoutCurve& p_hat, double lambda) {
    std::vector<double> p(data.num_points()), mu(data.num_points());
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        p[i] = p_hat.poisson_prob(data.points[i]);
        mu[i] = mu_hat.mean(data.points[i]);
    }
    return mixture_nll_at_points(data, p, mu) + 0.5 * lambda * mu_hat.roughness();
}

double penalized_nll(const BinnedCountData& data, const ZissFit& fit) {
    return mixture_penalized_nll(data, fit.mean_curve, fit.dropout, fit.lambda);
}

ZissFit fit_ziss(const BinnedCountData& data, const ZissConfig& config) {
    if (!data.has_positive_count()) {
        throw DegenerateDataError("fit_ziss: all counts are zero, no effective Poisson "
                                  "observations");
    }
    if (!(config.epsilon > 0.0) || config.max_em_iter < 1) {
        throw std::invalid_argument("fit_ziss: bad convergence configuration");
    }

    const std::size_t n_total = data.total_observations();
    const double lambda_init = config.lambda_policy.init(n_total);
    const BSplineBasis basis = BSplineBasis::clamped_uniform(
        data.domain.lo, data.domain.hi, config.basis_m, config.basis_degree);

    // Pin the representer knots for the whole EM run.
    const std::vector<double> rep_knots = select_representer_knots(data.points, n_total);
    const bool subsampled = rep_knots.size() != data.points.size();

    // Constant-curve initialization under q(0) = 1 on positives, 0.5 on
    // zeros: mu(0) is the q(0)-weighted mean count and p(0) the q(0) mean.
    double pos_sum = 0.0;
    std::size_t pos_n = 0, zero_n = 0;
    for (const auto& row : data.counts) {
        for (int y : row) {
            if (y > 0) {
                pos_sum += y;
                ++pos_n;
            } else {
                ++zero_n;
            }
        }
    }
    const double mu0 =
        pos_sum / (static_cast<double>(pos_n) + 0.5 * static_cast<double>(zero_n));
    SplineMeanCurve mu_hat = SplineMeanCurve::constant(std::log(mu0), data.domain);

    const double p_bar =
        (static_cast<double>(pos_n) + 0.5 * static_cast<double>(zero_n)) /
        static_cast<double>(n_total);
    const double alpha0 = std::log((1.0 - p_bar) / p_bar);
    DropoutCurve p_hat{basis, Eigen::VectorXd::Constant(basis.size(), alpha0)};

    std::vector<double> trace;
    std::vector<double> trace_refit;
    int iterations = 0;
    bool converged = false;
    std::vector<double> mu_points(data.num_points());
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        mu_points[i] = mu_hat.mean(data.points[i]);
    }

    Responsibilities q;
    // One EM pass at a fixed lambda: E step, both M-step subproblems,
    // convergence on the relative l2 change of mu-hat at the data points.
    const auto run_em = [&](double lambda, std::vector<double>& phase_trace) {
        bool phase_converged = false;
        for (int iter = 1; iter <= config.max_em_iter; ++iter) {
            q = e_step(data, mu_hat, p_hat);
            p_hat = m_step_dropout(data, q, basis, p_hat.alpha, config.dropout_max_iter,
                                   config.dropout_tol);
            PoissonFitOptions popts;
            popts.max_iter = config.poisson_max_iter;
            popts.tol = config.poisson_tol;
            popts.n_total_hint = n_total;
            if (subsampled) popts.representer_knots = &rep_knots;
            if (!mu_hat.knots.empty()) popts.warm_start = &mu_hat;
            mu_hat = m_step_mean(data, q, lambda, popts);

            phase_trace.push_back(mixture_penalized_nll(data, mu_hat, p_hat, lambda));
            ++iterations;

            std::vector<double> mu_new(data.num_points());
            for (std::size_t i = 0; i < data.num_points(); ++i) {
                mu_new[i] = mu_hat.mean(data.points[i]);
            }
            std::vector<double> delta(data.num_points());
            for (std::size_t i = 0; i < data.num_points(); ++i) {
                delta[i] = mu_new[i] - mu_points[i];
            }
            const double rel = l2_norm(delta) / (1.0 + l2_norm(mu_points));
            mu_points = std::move(mu_new);
            if (rel <= config.epsilon) {
                phase_converged = true;
                break;
            }
        }
        return phase_converged;
    };

    converged = run_em(lambda_init, trace);

    // Final stage: select lambda by GCV with the last responsibilities
    // fixed, fit final mu-hat and p-hat at the selected lambda (EM continues
    // there from the current iterate), then one last E step and dropout
    // update with the refit mu-hat.
    double lambda_star = lambda_init;
    if (config.lambda_policy.use_gcv) {
        const P2Stats stats = reduce_p2(data, q, /*drop_zero=*/true);
        PoissonFitOptions popts;
        popts.max_iter = config.poisson_max_iter;
        popts.tol = config.poisson_tol;
        popts.n_total_hint = n_total;
        if (subsampled) popts.representer_knots = &rep_knots;
        const GcvResult gcv = gcv_select_lambda(stats.points, stats.weights, stats.ybar,
                                                config.lambda_policy.grid(n_total),
                                                data.domain, popts);
        lambda_star = gcv.lambda_star;
        converged = run_em(lambda_star, trace_refit);
        q = e_step(data, mu_hat, p_hat);
        p_hat = m_step_dropout(data, q, basis, p_hat.alpha, config.dropout_max_iter,
                               config.dropout_tol);
    }

    return ZissFit{std::move(p_hat),     std::move(mu_hat), lambda_star,
                   std::move(q),         std::move(trace),  std::move(trace_refit),
                   iterations,           converged};
}

} // namespace ziss
