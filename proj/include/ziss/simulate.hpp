#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ziss/rkhs_spline.hpp"
#include "ziss/ziss_em.hpp"

namespace ziss {

// SplitMix64: counter-based 64-bit generator (output = mix of an advancing
// Weyl counter). One instance per replicate, seeded with seed + r * stride.
struct SplitMix64 {
    using result_type = std::uint64_t;
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type(0); }

    result_type operator()() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    // Uniform double in [0,1) from the top 53 bits.
    double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
};

struct SimulationConfig {
    int setting = 1;            // 1 or 2
    int n_points = 41;          // N
    int samples_per_point = 80; // M
    double overdispersion = 0.0;  // a = sigma^2 (0 = Poisson)
    double shift = 0.0;           // up-moving parameter h
    std::uint64_t seed = 0;
    int replicates = 100;        // R
    std::uint64_t seed_stride = 1;  // replicate r reseeds with seed + r*stride
    int jobs = 0;                // 0 = hardware concurrency
};

// True generating curves on [0,1]. p_zero_true is the dropout (excess-zero)
// probability; mu_true from generate() already includes the shift h.
struct GroundTruth {
    std::function<double(double)> mu_true;
    std::function<double(double)> p_zero_true;
};

GroundTruth truth_setting1();
GroundTruth truth_setting2();

// One count draw: Poisson(mu) when a = 0, else the gamma-Poisson mixture
// with mean mu and variance mu(1 + a mu).
int sample_count(SplitMix64& rng, double mu, double overdispersion);

std::pair<BinnedCountData, GroundTruth> generate_from_truth(const GroundTruth& base,
                                                            int n_points,
                                                            int samples_per_point,
                                                            double overdispersion,
                                                            double shift,
                                                            std::uint64_t seed);

std::pair<BinnedCountData, GroundTruth> generate(const SimulationConfig& config);

// Mean over `points` of (mu_hat(t) - mu_true(t))^2.
double mse(const SplineMeanCurve& curve, const GroundTruth& truth,
           const std::vector<double>& points);

enum class Method { Ziss, Nzss, Dss };

std::string method_name(Method m);

struct MethodResult {
    Method method = Method::Ziss;
    double mean_mse = 0.0;
    double std_mse = 0.0;
    int effective_replicates = 0;
    int failures = 0;
};

struct ReplicateTable {
    std::vector<MethodResult> rows;
};

// Runs R replicates (reseeding deterministically per replicate), fits each
// method, and reports mean/std of the per-replicate MSEs at the design
// points. Failed fits are excluded and counted. Optionally stores the raw
// R x methods MSE matrix (NaN marks a failure). Replicates run on a worker
// pool of config.jobs threads; results are deterministic regardless.
ReplicateTable run_replicates(const SimulationConfig& config,
                              const std::vector<Method>& methods,
                              std::vector<std::vector<double>>* per_replicate = nullptr);

// Shared worker pool: body(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

} // namespace ziss
