#include "ziss/baselines.hpp"

#include <cmath>

#include "ziss/errors.hpp"

namespace ziss {

namespace {

struct ReducedData {
    std::vector<double> points;
    std::vector<double> weights;
    std::vector<double> ybar;
    std::size_t n_obs = 0;  // observations behind the lambda policy
};

SplineMeanCurve fit_reduced(const ReducedData& r, const Interval& domain,
                            const LambdaPolicy& policy) {
    PoissonFitOptions opts;
    opts.n_total_hint = r.n_obs;
    double lambda = policy.init(r.n_obs);
    if (policy.use_gcv) {
        const GcvResult gcv = gcv_select_lambda(r.points, r.weights, r.ybar,
                                                policy.grid(r.n_obs), domain, opts);
        lambda = gcv.lambda_star;
    }
    return fit_poisson_spline(r.points, r.weights, r.ybar, lambda, domain, opts);
}

} // namespace

SplineMeanCurve fit_dss(const BinnedCountData& data, const LambdaPolicy& policy) {
    if (!data.has_positive_count()) {
        throw DegenerateDataError("fit_dss: all counts are zero");
    }
    ReducedData r;
    r.n_obs = data.total_observations();
    r.points = data.points;
    r.weights.resize(data.num_points());
    r.ybar.resize(data.num_points());
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        double sum = 0.0;
        for (int y : data.counts[i]) sum += y;
        r.weights[i] = static_cast<double>(data.counts[i].size());
        r.ybar[i] = sum / r.weights[i];
    }
    return fit_reduced(r, data.domain, policy);
}

SplineMeanCurve fit_nzss(const BinnedCountData& data, const LambdaPolicy& policy) {
    ReducedData r;
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        double sum = 0.0;
        std::size_t n_pos = 0;
        for (int y : data.counts[i]) {
            if (y > 0) {
                sum += y;
                ++n_pos;
            }
        }
        if (n_pos == 0) continue;
        r.points.push_back(data.points[i]);
        r.weights.push_back(static_cast<double>(n_pos));
        r.ybar.push_back(sum / static_cast<double>(n_pos));
        r.n_obs += n_pos;
    }
    if (r.points.size() < 2) {
        throw DegenerateDataError("fit_nzss: fewer than two points carry a positive count");
    }
    return fit_reduced(r, data.domain, policy);
}

} // namespace ziss
