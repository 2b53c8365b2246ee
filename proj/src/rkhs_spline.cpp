#include "ziss/rkhs_spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ziss/errors.hpp"

namespace ziss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double k1(double x) { return x - 0.5; }
double k2(double x) {
    const double a = k1(x);
    return 0.5 * (a * a - 1.0 / 12.0);
}
double k4(double x) {
    const double a = k1(x);
    const double a2 = a * a;
    return (a2 * a2 - 0.5 * a2 + 7.0 / 240.0) / 24.0;
}

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw std::domain_error(std::string("cubic_kernel: ") + name + " outside [0,1]");
    }
}

// Representer system for one set of data points and kernel knots, all
// rescaled to [0,1]. S holds the null-space design (1, s), R the kernel
// sections at the knots, Q the knot Gram matrix.
struct SplineSystem {
    Eigen::MatrixXd S;  // N x 2
    Eigen::MatrixXd R;  // N x K
    Eigen::MatrixXd Q;  // K x K
    bool saddle = true; // K == N with knots identical to the points

    static SplineSystem build(const std::vector<double>& x01,
                              const std::vector<double>& k01, bool saddle) {
        SplineSystem sys;
        const auto n = static_cast<Eigen::Index>(x01.size());
        const auto k = static_cast<Eigen::Index>(k01.size());
        sys.saddle = saddle;
        sys.S.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            sys.S(i, 0) = 1.0;
            sys.S(i, 1) = x01[static_cast<std::size_t>(i)];
        }
        sys.R.resize(n, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < k; ++j) {
                sys.R(i, j) = cubic_kernel(k01[static_cast<std::size_t>(j)],
                                           x01[static_cast<std::size_t>(i)]);
            }
        }
        if (saddle) {
            sys.Q = sys.R;  // knots == points
        } else {
            sys.Q = kernel_gram(k01);
        }
        return sys;
    }
};

struct WorkingSolution {
    Eigen::Vector2d d = Eigen::Vector2d::Zero();
    Eigen::VectorXd c;
    Eigen::VectorXd eta;        // fitted values at the data points
    double trace_a = kNaN;
};

// Weighted penalized least squares:
//   min sum_i w_i (y_i - eta_i)^2 + lambda c^T Q c,  eta = S d + R c.
// K == N uses the symmetric saddle-point system in sqrt(w)-scaled variables
// (smallest eigenvalue >= lambda); K < N uses the PSD normal equations with
// an LDLT ridge retry.
WorkingSolution solve_working(const SplineSystem& sys, const Eigen::VectorXd& w,
                              const Eigen::VectorXd& y, double lambda, bool want_trace) {
    const Eigen::Index n = sys.R.rows();
    const Eigen::Index k = sys.R.cols();
    WorkingSolution out;

    if (sys.saddle) {
        // Saddle system [Qt + lambda I, St; St^T, 0] in sqrt(w)-scaled
        // variables, solved through the SPD block: M = Qt + lambda I (LLT,
        // eigenvalues >= lambda), then the 2x2 Schur system for d.
        const Eigen::VectorXd sw = w.cwiseMax(0.0).cwiseSqrt();
        Eigen::MatrixXd m = sw.asDiagonal() * sys.Q * sw.asDiagonal();
        m.diagonal().array() += lambda;
        const Eigen::MatrixXd st = sw.asDiagonal() * sys.S;
        const Eigen::VectorXd z = sw.cwiseProduct(y);

        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success) {
            throw SingularSystemError("penalized WLS system is not positive definite");
        }
        const Eigen::VectorXd minv_z = llt.solve(z);
        const Eigen::MatrixXd minv_s = llt.solve(st);
        const Eigen::Matrix2d g2 = st.transpose() * minv_s;

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> g2_eig(g2);
        if (g2_eig.eigenvalues()(0) <=
            1e-12 * std::max(g2_eig.eigenvalues()(1), 1e-300)) {
            throw SingularSystemError("penalized WLS system is singular: fewer than two "
                                      "distinct knots carry positive weight");
        }
        out.d = g2.ldlt().solve(st.transpose() * minv_z);
        const Eigen::VectorXd ct = minv_z - minv_s * out.d;
        out.c = sw.cwiseProduct(ct);
        out.eta = sys.S * out.d + sys.R * out.c;
        if (want_trace) {
            // A = I - lambda * dct/dz with
            // dct/dz = M^-1 - (M^-1 S) G2^-1 (M^-1 S)^T; inert zero-weight
            // rows cancel exactly, so only positive-weight rows are summed.
            const Eigen::MatrixXd minv = llt.solve(Eigen::MatrixXd::Identity(n, n));
            const Eigen::Matrix2d g2_inv = g2.inverse();
            double tr = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (w[i] <= 0.0) continue;
                const Eigen::Vector2d yi = minv_s.row(i).transpose();
                tr += 1.0 - lambda * (minv(i, i) - yi.dot(g2_inv * yi));
            }
            out.trace_a = tr;
        }
        return out;
    }

    Eigen::MatrixXd g(k + 2, k + 2);
    const Eigen::MatrixXd rw = sys.R.transpose() * w.asDiagonal();
    const Eigen::MatrixXd sw = sys.S.transpose() * w.asDiagonal();
    g.topLeftCorner(k, k) = rw * sys.R + lambda * sys.Q;
    g.topRightCorner(k, 2) = rw * sys.S;
    g.bottomLeftCorner(2, k) = g.topRightCorner(k, 2).transpose();
    g.bottomRightCorner(2, 2) = sw * sys.S;

    Eigen::VectorXd rhs(k + 2);
    rhs.head(k) = rw * y;
    rhs.tail(2) = sw * y;

    const double scale = g.diagonal().cwiseAbs().maxCoeff();
    double ridge = 0.0;
    for (int attempt = 0; attempt < 2; ++attempt) {
        Eigen::MatrixXd gr = g;
        gr.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gr);
        if (ldlt.info() == Eigen::Success) {
            const Eigen::VectorXd sol = ldlt.solve(rhs);
            const double resid = (gr * sol - rhs).norm();
            if (sol.allFinite() && resid <= 1e-8 * (rhs.norm() + scale)) {
                out.c = sol.head(k);
                out.d = sol.tail(2);
                out.eta = sys.S * out.d + sys.R * out.c;
                if (want_trace) {
                    Eigen::MatrixXd qx(k + 2, k);
                    qx.topRows(k) = sys.Q;
                    qx.bottomRows(2).setZero();
                    const Eigen::MatrixXd x = ldlt.solve(qx);
                    out.trace_a = static_cast<double>(k + 2) - lambda * x.topRows(k).trace();
                }
                return out;
            }
        }
        ridge = std::max(1e-10 * scale, 1e-14);
    }
    throw SingularSystemError("penalized WLS normal equations are singular");
}

struct ProblemSetup {
    std::vector<double> knots;   // representer knots, original units
    std::vector<double> x01;     // rescaled data points
    Interval domain;
    SplineSystem sys;
};

ProblemSetup setup_problem(const std::vector<double>& points,
                           const std::optional<Interval>& domain_opt,
                           const std::vector<double>* rep_knots,
                           std::size_t n_total_hint, double sum_w) {
    if (points.empty()) {
        throw SingularSystemError("penalized spline: no data points");
    }
    ProblemSetup p;
    p.domain = domain_opt.value_or(Interval{points.front(), points.back()});
    if (!(p.domain.lo < p.domain.hi)) {
        throw SingularSystemError("penalized spline: empty domain");
    }
    for (double t : points) {
        if (!p.domain.contains(t)) {
            throw std::invalid_argument("penalized spline: point outside the domain");
        }
    }
    bool saddle;
    if (rep_knots != nullptr) {
        p.knots = *rep_knots;
        saddle = false;
    } else {
        const std::size_t n_total =
            n_total_hint > 0 ? n_total_hint
                             : static_cast<std::size_t>(std::llround(std::max(sum_w, 1.0)));
        p.knots = select_representer_knots(points, n_total);
        saddle = p.knots.size() == points.size();
    }
    p.x01.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) p.x01[i] = p.domain.rescale(points[i]);
    std::vector<double> k01(p.knots.size());
    for (std::size_t i = 0; i < p.knots.size(); ++i) k01[i] = p.domain.rescale(p.knots[i]);
    p.sys = SplineSystem::build(p.x01, k01, saddle);
    return p;
}

void require_two_weighted_points(const std::vector<double>& points,
                                 const std::vector<double>& weights) {
    double first = kNaN;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        if (std::isnan(first)) {
            first = points[i];
        } else if (points[i] != first) {
            return;
        }
    }
    throw SingularSystemError("penalized spline: need at least two distinct points "
                              "with positive weight");
}

SplineMeanCurve make_curve(const ProblemSetup& p, const WorkingSolution& sol) {
    SplineMeanCurve curve;
    curve.knots = p.knots;
    curve.d = sol.d;
    curve.c = sol.c;
    curve.domain = p.domain;
    return curve;
}

// State of the Poisson Newton iteration.
struct PoissonState {
    Eigen::Vector2d d = Eigen::Vector2d::Zero();
    Eigen::VectorXd c;
    Eigen::VectorXd eta;
};

double poisson_objective(const PoissonState& s, const Eigen::VectorXd& w,
                         const Eigen::VectorXd& ybar, const Eigen::MatrixXd& q,
                         double lambda) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        ll += w[i] * (std::exp(s.eta[i]) - ybar[i] * s.eta[i]);
    }
    return ll + 0.5 * lambda * s.c.dot(q * s.c);
}

struct PoissonFitResult {
    PoissonState state;
    Eigen::VectorXd work_w;   // final working weights w_i mu_i
    Eigen::VectorXd work_y;   // final working responses
};

PoissonFitResult fit_poisson_core(const ProblemSetup& p, const Eigen::VectorXd& w,
                                  const Eigen::VectorXd& ybar, double lambda,
                                  const PoissonFitOptions& opts) {
    const Eigen::Index n = w.size();
    const Eigen::Index k = static_cast<Eigen::Index>(p.knots.size());

    double wsum = 0.0, wy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        wsum += w[i];
        wy += w[i] * ybar[i];
    }
    if (wy <= 0.0) {
        throw DegenerateDataError("penalized Poisson spline: weighted responses are all zero");
    }

    PoissonState state;
    state.c = Eigen::VectorXd::Zero(k);
    if (opts.warm_start != nullptr && opts.warm_start->knots == p.knots &&
        opts.warm_start->domain.lo == p.domain.lo &&
        opts.warm_start->domain.hi == p.domain.hi &&
        opts.warm_start->c.size() == k) {
        state.d = opts.warm_start->d;
        state.c = opts.warm_start->c;
        state.eta = p.sys.S * state.d + p.sys.R * state.c;
    } else {
        // No warm start, or its knot set no longer matches (a knot was
        // dropped): start from the constant at the weighted mean.
        state.d[0] = std::log(wy / wsum);
        state.eta = Eigen::VectorXd::Constant(n, state.d[0]);
    }

    double obj = poisson_objective(state, w, ybar, p.sys.Q, lambda);
    if (!std::isfinite(obj)) {
        state.d = Eigen::Vector2d(std::log(wy / wsum), 0.0);
        state.c.setZero();
        state.eta = Eigen::VectorXd::Constant(n, state.d[0]);
        obj = poisson_objective(state, w, ybar, p.sys.Q, lambda);
    }
    if (opts.objective_trace != nullptr) opts.objective_trace->push_back(obj);

    Eigen::VectorXd work_w(n), work_y(n);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (w[i] > 0.0) {
                const double mu = std::exp(state.eta[i]);
                work_w[i] = w[i] * mu;
                work_y[i] = state.eta[i] + (ybar[i] - mu) / mu;
            } else {
                work_w[i] = 0.0;
                work_y[i] = 0.0;
            }
        }
        const WorkingSolution sol = solve_working(p.sys, work_w, work_y, lambda, false);

        PoissonState cand;
        cand.d = sol.d;
        cand.c = sol.c;
        cand.eta = sol.eta;
        double cand_obj = poisson_objective(cand, w, ybar, p.sys.Q, lambda);
        // Step halving toward the current state.
        int halvings = 0;
        while ((!std::isfinite(cand_obj) || cand_obj > obj) &&
               halvings < opts.max_step_halvings) {
            cand.d = 0.5 * (cand.d + state.d);
            cand.c = 0.5 * (cand.c + state.c);
            cand.eta = 0.5 * (cand.eta + state.eta);
            cand_obj = poisson_objective(cand, w, ybar, p.sys.Q, lambda);
            ++halvings;
        }
        if (!std::isfinite(cand_obj)) {
            throw NonConvergenceError("penalized Poisson spline: objective became "
                                      "non-finite despite step halving");
        }
        if (cand_obj > obj) {
            // Fully damped step cannot improve: numerically stationary.
            return {state, work_w, work_y};
        }
        const double change = obj - cand_obj;
        state = std::move(cand);
        obj = cand_obj;
        if (opts.objective_trace != nullptr) opts.objective_trace->push_back(obj);
        if (change <= opts.tol * (std::abs(obj) + 1.0)) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (w[i] > 0.0) {
                    const double mu = std::exp(state.eta[i]);
                    work_w[i] = w[i] * mu;
                    work_y[i] = state.eta[i] + (ybar[i] - mu) / mu;
                }
            }
            return {state, work_w, work_y};
        }
    }
    throw NonConvergenceError("penalized Poisson spline: no convergence within " +
                              std::to_string(opts.max_iter) + " Newton steps");
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void validate_lengths(const std::vector<double>& knots, const std::vector<double>& a,
                      const std::vector<double>& b) {
    if (knots.size() != a.size() || knots.size() != b.size()) {
        throw std::invalid_argument("penalized spline: input lengths differ");
    }
}

} // namespace

double cubic_kernel(double s, double u) {
    check_unit(s, "s");
    check_unit(u, "u");
    return k2(s) * k2(u) - k4(std::abs(s - u));
}

Eigen::MatrixXd kernel_gram(const std::vector<double>& rescaled_points) {
    const auto n = static_cast<Eigen::Index>(rescaled_points.size());
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = cubic_kernel(rescaled_points[static_cast<std::size_t>(i)],
                                          rescaled_points[static_cast<std::size_t>(j)]);
            q(i, j) = v;
            q(j, i) = v;
        }
    }
    return q;
}

double SplineMeanCurve::log_mean(double t) const {
    const double s = domain.rescale(t);
    check_unit(s, "t (rescaled)");
    double eta = d[0] + d[1] * s;
    for (std::size_t i = 0; i < knots.size(); ++i) {
        eta += c[static_cast<Eigen::Index>(i)] * cubic_kernel(domain.rescale(knots[i]), s);
    }
    return eta;
}

double SplineMeanCurve::roughness() const {
    if (knots.empty()) return 0.0;
    std::vector<double> k01(knots.size());
    for (std::size_t i = 0; i < knots.size(); ++i) k01[i] = domain.rescale(knots[i]);
    const Eigen::MatrixXd q = kernel_gram(k01);
    return c.dot(q * c);
}

SplineMeanCurve SplineMeanCurve::constant(double log_value, Interval domain) {
    SplineMeanCurve curve;
    curve.d[0] = log_value;
    curve.c.resize(0);
    curve.domain = domain;
    return curve;
}

SplineMeanCurve solve_penalized_wls(const std::vector<double>& knots,
                                    const std::vector<double>& weights,
                                    const std::vector<double>& working_response,
                                    double lambda, std::optional<Interval> domain) {
    validate_lengths(knots, weights, working_response);
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("solve_penalized_wls: lambda must be positive");
    }
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw std::invalid_argument("solve_penalized_wls: weights must be non-negative");
        }
    }
    require_two_weighted_points(knots, weights);
    const ProblemSetup p = setup_problem(knots, domain, nullptr, knots.size(), 0.0);
    const WorkingSolution sol =
        solve_working(p.sys, to_eigen(weights), to_eigen(working_response), lambda, false);
    return make_curve(p, sol);
}

SplineMeanCurve fit_poisson_spline(const std::vector<double>& knots,
                                   const std::vector<double>& weights,
                                   const std::vector<double>& mean_response, double lambda,
                                   std::optional<Interval> domain,
                                   const PoissonFitOptions& opts) {
    validate_lengths(knots, weights, mean_response);
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("fit_poisson_spline: lambda must be positive");
    }
    double sum_w = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0 || !std::isfinite(weights[i])) {
            throw std::invalid_argument("fit_poisson_spline: weights must be non-negative");
        }
        if (mean_response[i] < 0.0) {
            throw std::invalid_argument("fit_poisson_spline: mean responses must be non-negative");
        }
        sum_w += weights[i];
    }
    require_two_weighted_points(knots, weights);
    const ProblemSetup p =
        setup_problem(knots, domain, opts.representer_knots, opts.n_total_hint, sum_w);
    const PoissonFitResult fit =
        fit_poisson_core(p, to_eigen(weights), to_eigen(mean_response), lambda, opts);
    WorkingSolution sol;
    sol.d = fit.state.d;
    sol.c = fit.state.c;
    return make_curve(p, sol);
}

GcvResult gcv_select_lambda(const std::vector<double>& knots,
                            const std::vector<double>& weights,
                            const std::vector<double>& mean_response,
                            const std::vector<double>& lambda_grid,
                            std::optional<Interval> domain, const PoissonFitOptions& opts) {
    if (lambda_grid.empty()) {
        throw std::invalid_argument("gcv_select_lambda: empty lambda grid");
    }
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
        if (!(lambda_grid[i] > 0.0) ||
            (i > 0 && lambda_grid[i] <= lambda_grid[i - 1])) {
            throw std::invalid_argument("gcv_select_lambda: grid must be positive and increasing");
        }
    }
    validate_lengths(knots, weights, mean_response);
    require_two_weighted_points(knots, weights);

    double sum_w = 0.0;
    for (double w : weights) sum_w += w;
    const ProblemSetup p =
        setup_problem(knots, domain, opts.representer_knots, opts.n_total_hint, sum_w);
    const Eigen::VectorXd w = to_eigen(weights);
    const Eigen::VectorXd ybar = to_eigen(mean_response);

    double n_eff = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) n_eff += 1.0;
    }

    GcvResult result;
    result.scores.assign(lambda_grid.size(), kInf);
    result.trace_a.assign(lambda_grid.size(), kNaN);
    result.weighted_rss.assign(lambda_grid.size(), kNaN);

    SplineMeanCurve warm;
    bool have_warm = false;
    for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
        const double lambda = lambda_grid[g];
        PoissonFitOptions fit_opts = opts;
        fit_opts.objective_trace = nullptr;
        if (have_warm) fit_opts.warm_start = &warm;
        try {
            const PoissonFitResult fit = fit_poisson_core(p, w, ybar, lambda, fit_opts);
            const WorkingSolution with_trace =
                solve_working(p.sys, fit.work_w, fit.work_y, lambda, true);
            double rss = 0.0;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                if (fit.work_w[i] <= 0.0) continue;
                const double r = fit.work_y[i] - fit.state.eta[i];
                rss += fit.work_w[i] * r * r;
            }
            const double denom = n_eff - with_trace.trace_a;
            result.trace_a[g] = with_trace.trace_a;
            result.weighted_rss[g] = rss;
            result.scores[g] = denom > 1e-10 * n_eff
                                   ? (rss / n_eff) / ((denom / n_eff) * (denom / n_eff))
                                   : kInf;
            warm = SplineMeanCurve{p.knots, fit.state.d, fit.state.c, p.domain};
            have_warm = true;
        } catch (const NonConvergenceError&) {
        } catch (const SingularSystemError&) {
        } catch (const DegenerateDataError&) {
            throw;
        }
    }

    const auto best = std::min_element(result.scores.begin(), result.scores.end());
    if (!std::isfinite(*best)) {
        throw NonConvergenceError("gcv_select_lambda: every grid fit failed");
    }
    result.lambda_star = lambda_grid[static_cast<std::size_t>(best - result.scores.begin())];
    return result;
}

double default_lambda_init(std::size_t n_total) {
    return 10.0 * std::pow(static_cast<double>(std::max<std::size_t>(n_total, 1)), -2.0 / 9.0);
}

std::vector<double> default_lambda_grid(double lambda_init, int size, double span_decades) {
    if (size < 1 || !(lambda_init > 0.0) || span_decades < 0.0) {
        throw std::invalid_argument("default_lambda_grid: bad parameters");
    }
    std::vector<double> grid(static_cast<std::size_t>(size));
    if (size == 1) {
        grid[0] = lambda_init;
        return grid;
    }
    const double log10_init = std::log10(lambda_init);
    for (int i = 0; i < size; ++i) {
        const double frac = 2.0 * i / (size - 1) - 1.0;
        grid[static_cast<std::size_t>(i)] = std::pow(10.0, log10_init + span_decades * frac);
    }
    return grid;
}

std::vector<double> select_representer_knots(const std::vector<double>& points,
                                             std::size_t n_total) {
    const std::size_t n = points.size();
    if (n <= 200) return points;
    const auto target = static_cast<std::size_t>(
        std::ceil(10.0 * std::pow(static_cast<double>(n_total), 2.0 / 9.0)));
    const std::size_t k = std::clamp<std::size_t>(target, 2, n);
    std::vector<double> knots;
    knots.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto idx = static_cast<std::size_t>(
            std::llround(static_cast<double>(j) * static_cast<double>(n - 1) /
                         static_cast<double>(k - 1)));
        if (knots.empty() || points[idx] != knots.back()) knots.push_back(points[idx]);
    }
    return knots;
}

} // namespace ziss
