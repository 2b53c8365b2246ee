#include "ziss/simulate.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include "ziss/baselines.hpp"
#include "ziss/errors.hpp"

namespace ziss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate(const SimulationConfig& c) {
    if (c.setting != 1 && c.setting != 2) {
        throw std::invalid_argument("simulation: setting must be 1 or 2");
    }
    if (c.n_points < 2 || c.samples_per_point < 1) {
        throw std::invalid_argument("simulation: need N >= 2 and M >= 1");
    }
    if (c.overdispersion < 0.0 || c.shift < 0.0) {
        throw std::invalid_argument("simulation: overdispersion and shift must be >= 0");
    }
}

SplineMeanCurve fit_method(Method m, const BinnedCountData& data) {
    switch (m) {
        case Method::Ziss:
            return fit_ziss(data).mean_curve;
        case Method::Nzss:
            return fit_nzss(data);
        case Method::Dss:
            return fit_dss(data);
    }
    throw std::invalid_argument("unknown method");
}

} // namespace

GroundTruth truth_setting1() {
    GroundTruth t;
    t.mu_true = [](double x) { return 2.0 * std::sin(9.0 * x) + 2.5; };
    // 1 - p1(t): the Table-1 curve is the Poisson-component probability.
    t.p_zero_true = [](double x) {
        const double d = x - 0.5;
        return 1.0 - 1.0 / (1.0 + std::exp(-0.5 * d * d + 1.0));
    };
    return t;
}

GroundTruth truth_setting2() {
    GroundTruth t;
    t.mu_true = [](double x) {
        const double a = x - 0.2;
        const double b = x - 0.7;
        const double s = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        return 8.0 * s * std::exp(-10.0 * a * a) + 6.0 * s * std::exp(-100.0 * b * b);
    };
    t.p_zero_true = [](double x) { return 1.0 - (0.25 * std::sin(6.0 * x) + 0.5); };
    return t;
}

int sample_count(SplitMix64& rng, double mu, double overdispersion) {
    if (mu <= 0.0) return 0;
    if (overdispersion <= 0.0) {
        std::poisson_distribution<int> pois(mu);
        return pois(rng);
    }
    // Gamma-Poisson mixture: mean mu, variance mu(1 + a mu).
    const double shape = 1.0 / overdispersion;
    std::gamma_distribution<double> gamma(shape, mu * overdispersion);
    const double rate = gamma(rng);
    if (rate <= 0.0) return 0;
    std::poisson_distribution<int> pois(rate);
    return pois(rng);
}

std::pair<BinnedCountData, GroundTruth> generate_from_truth(const GroundTruth& base,
                                                            int n_points,
                                                            int samples_per_point,
                                                            double overdispersion,
                                                            double shift,
                                                            std::uint64_t seed) {
    if (n_points < 2 || samples_per_point < 1) {
        throw std::invalid_argument("generate_from_truth: need N >= 2 and M >= 1");
    }
    const double lo = 1e-6;
    const double hi = 1.0 - 1e-6;
    std::vector<double> points(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        points[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n_points - 1);
    }

    GroundTruth effective;
    const auto base_mu = base.mu_true;
    effective.mu_true = [base_mu, shift](double t) { return base_mu(t) + shift; };
    effective.p_zero_true = base.p_zero_true;

    SplitMix64 rng(seed);
    std::vector<std::vector<int>> counts(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double p_zero = effective.p_zero_true(points[i]);
        const double mu = effective.mu_true(points[i]);
        counts[i].resize(static_cast<std::size_t>(samples_per_point));
        for (int j = 0; j < samples_per_point; ++j) {
            const bool dropout = rng.uniform01() < p_zero;
            counts[i][static_cast<std::size_t>(j)] =
                dropout ? 0 : sample_count(rng, mu, overdispersion);
        }
    }
    return {BinnedCountData(std::move(points), std::move(counts), Interval{0.0, 1.0}),
            std::move(effective)};
}

std::pair<BinnedCountData, GroundTruth> generate(const SimulationConfig& config) {
    validate(config);
    const GroundTruth base = config.setting == 1 ? truth_setting1() : truth_setting2();
    return generate_from_truth(base, config.n_points, config.samples_per_point,
                               config.overdispersion, config.shift, config.seed);
}

double mse(const SplineMeanCurve& curve, const GroundTruth& truth,
           const std::vector<double>& points) {
    if (points.empty()) {
        throw std::invalid_argument("mse: no evaluation points");
    }
    double sum = 0.0;
    for (double t : points) {
        const double diff = curve.mean(t) - truth.mu_true(t);
        sum += diff * diff;
    }
    return sum / static_cast<double>(points.size());
}

std::string method_name(Method m) {
    switch (m) {
        case Method::Ziss: return "ZISS";
        case Method::Nzss: return "NZSS";
        case Method::Dss: return "DSS";
    }
    return "?";
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    unsigned n_threads = jobs > 0 ? static_cast<unsigned>(jobs)
                                  : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, count));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

ReplicateTable run_replicates(const SimulationConfig& config,
                              const std::vector<Method>& methods,
                              std::vector<std::vector<double>>* per_replicate) {
    validate(config);
    if (config.replicates < 2) {
        throw std::invalid_argument("run_replicates: need at least two replicates");
    }
    if (methods.empty()) {
        throw std::invalid_argument("run_replicates: no methods requested");
    }
    const auto r_count = static_cast<std::size_t>(config.replicates);
    std::vector<std::vector<double>> results(r_count,
                                             std::vector<double>(methods.size(), kNaN));

    parallel_for(r_count, config.jobs, [&](std::size_t r) {
        SimulationConfig rep = config;
        rep.seed = config.seed + static_cast<std::uint64_t>(r) * config.seed_stride;
        const auto [data, truth] = generate(rep);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            try {
                const SplineMeanCurve curve = fit_method(methods[m], data);
                results[r][m] = mse(curve, truth, data.points);
            } catch (const std::exception&) {
                // recorded as NaN and excluded from the table
            }
        }
    });

    ReplicateTable table;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        MethodResult row;
        row.method = methods[m];
        double sum = 0.0;
        int n = 0;
        for (std::size_t r = 0; r < r_count; ++r) {
            if (std::isnan(results[r][m])) continue;
            sum += results[r][m];
            ++n;
        }
        row.effective_replicates = n;
        row.failures = static_cast<int>(r_count) - n;
        if (n > 0) {
            row.mean_mse = sum / n;
            double ss = 0.0;
            for (std::size_t r = 0; r < r_count; ++r) {
                if (std::isnan(results[r][m])) continue;
                const double d = results[r][m] - row.mean_mse;
                ss += d * d;
            }
            row.std_mse = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        }
        table.rows.push_back(row);
    }
    if (per_replicate != nullptr) *per_replicate = std::move(results);
    return table;
}

} // namespace ziss
