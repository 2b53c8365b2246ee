// Acceptance suite: runs every release gate end to end and prints one
// PASS/FAIL line per criterion. Exits non-zero if any criterion fails.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "oracles.hpp"
#include "ziss/baselines.hpp"
#include "ziss/errors.hpp"
#include "ziss/io.hpp"
#include "ziss/simulate.hpp"
#include "ziss/ziss_em.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(const std::string& name, const std::function<void(const std::string&)>& body) {
    try {
        body(name);
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

struct Table2Result {
    double ziss = 0.0, nzss = 0.0, dss = 0.0;
    int trace_violations = 0;
    int failures = 0;
};

// One Table-2 run: R replicates, all three methods, plus the EM trace
// monotonicity check on every replicate.
Table2Result table2_run(int setting, int replicates, std::uint64_t seed) {
    std::vector<double> ziss_mse(replicates), nzss_mse(replicates), dss_mse(replicates);
    std::vector<int> violations(replicates, 0);
    std::vector<int> failed(replicates, 0);
    ziss::parallel_for(static_cast<std::size_t>(replicates), 0, [&](std::size_t r) {
        ziss::SimulationConfig config;
        config.setting = setting;
        config.seed = seed + r;
        try {
            const auto [data, truth] = ziss::generate(config);
            const ziss::ZissFit fit = ziss::fit_ziss(data);
            for (std::size_t k = 1; k < fit.trace.size(); ++k) {
                if (fit.trace[k] > fit.trace[k - 1] + 1e-8) ++violations[r];
            }
            ziss_mse[r] = ziss::mse(fit.mean_curve, truth, data.points);
            nzss_mse[r] = ziss::mse(ziss::fit_nzss(data), truth, data.points);
            dss_mse[r] = ziss::mse(ziss::fit_dss(data), truth, data.points);
        } catch (const std::exception&) {
            failed[r] = 1;
        }
    });
    Table2Result out;
    int n = 0;
    for (int r = 0; r < replicates; ++r) {
        if (failed[r]) {
            ++out.failures;
            continue;
        }
        out.ziss += ziss_mse[r];
        out.nzss += nzss_mse[r];
        out.dss += dss_mse[r];
        out.trace_violations += violations[r];
        ++n;
    }
    if (n == 0) throw ziss::NonConvergenceError("every replicate failed");
    out.ziss /= n;
    out.nzss /= n;
    out.dss /= n;
    return out;
}

struct TrendPoint {
    double mean = 0.0;
    double se = 0.0;
};

TrendPoint trend_point(int setting, double overdispersion, double shift, int replicates,
                       std::uint64_t seed, ziss::Method method) {
    ziss::SimulationConfig config;
    config.setting = setting;
    config.overdispersion = overdispersion;
    config.shift = shift;
    config.seed = seed;
    config.replicates = replicates;
    const auto table = ziss::run_replicates(config, {method});
    const auto& row = table.rows.at(0);
    if (row.effective_replicates < 2) {
        throw ziss::NonConvergenceError("trend point has fewer than two usable replicates");
    }
    return {row.mean_mse, row.std_mse / std::sqrt(static_cast<double>(row.effective_replicates))};
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", x);
    return buf;
}

const std::string kCli = ZISS_CLI_PATH;

int run_cli(const std::string& args, const fs::path& stdout_file = {}) {
    std::string cmd = kCli + " " + args;
    if (!stdout_file.empty()) cmd += " > " + stdout_file.string();
    const int rc = std::system(cmd.c_str());
    if (rc == -1 || !WIFEXITED(rc)) return -1;
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

} // namespace

int main() {
    int table1_violations = 0;
    int table2_violations = 0;
    bool monotonicity_ran = false;

    run_criterion("Table-2 reproduction, Setting 1", [&](const std::string& name) {
        const Table2Result r = table2_run(1, 100, 20240801);
        table1_violations = r.trace_violations;
        monotonicity_ran = true;
        const bool windows = r.ziss >= 0.02 && r.ziss <= 0.06 && r.nzss >= 0.12 &&
                             r.nzss <= 0.28 && r.dss >= 4.3 && r.dss <= 6.5;
        const bool order = r.ziss < r.nzss && r.nzss < r.dss;
        report(name, windows && order && r.failures == 0,
               "ZISS=" + fmt(r.ziss) + " in [0.02,0.06], NZSS=" + fmt(r.nzss) +
                   " in [0.12,0.28], DSS=" + fmt(r.dss) + " in [4.3,6.5], ordering " +
                   (order ? "strict" : "violated") + ", failed replicates=" +
                   std::to_string(r.failures));
    });

    run_criterion("Table-2 reproduction, Setting 2", [&](const std::string& name) {
        const Table2Result r = table2_run(2, 100, 20240802);
        table2_violations = r.trace_violations;
        const bool window = r.ziss >= 0.10 && r.ziss <= 0.30;
        const bool order = r.ziss < r.nzss && r.nzss < r.dss;
        report(name, window && order && r.failures == 0,
               "ZISS=" + fmt(r.ziss) + " in [0.10,0.30], NZSS=" + fmt(r.nzss) + ", DSS=" +
                   fmt(r.dss) + ", ordering " + (order ? "strict" : "violated") +
                   ", failed replicates=" + std::to_string(r.failures));
    });

    run_criterion("E-step oracle equivalence", [&](const std::string& name) {
        double worst = 0.0;
        for (int y : {0, 1, 2, 3}) {
            for (double mu : {0.1, 1.0, 5.0}) {
                for (double p : {0.1, 0.5, 0.9}) {
                    const double got = y > 0 ? 1.0 : ziss::zero_responsibility(mu, p);
                    worst = std::max(worst,
                                     std::abs(got - oracles::bayes_zero_posterior(y, mu, p)));
                }
            }
        }
        report(name, worst <= 1e-12, "max |q - Bayes oracle| = " + fmt(worst) + " <= 1e-12");
    });

    run_criterion("Dropout Newton correctness", [&](const std::string& name) {
        const auto basis = ziss::BSplineBasis::clamped_uniform(0.0, 1.0, 6, 3);
        ziss::SimulationConfig config;
        config.setting = 2;
        config.n_points = 21;
        config.samples_per_point = 10;
        config.seed = 31337;
        const auto [data, truth] = ziss::generate(config);
        ziss::SplitMix64 rng(4242);
        ziss::Responsibilities q;
        q.q.resize(data.num_points());
        for (std::size_t i = 0; i < data.num_points(); ++i) {
            q.q[i].resize(data.counts[i].size());
            for (auto& v : q.q[i]) v = rng.uniform01();
        }
        auto value_at = [&](const Eigen::VectorXd& a) {
            return ziss::dropout_objective_grad_hess(data, q, basis, a).value;
        };
        auto grad_at = [&](const Eigen::VectorXd& a) {
            return ziss::dropout_objective_grad_hess(data, q, basis, a).grad;
        };
        double worst_g = 0.0, worst_h = 0.0;
        for (int draw = 0; draw < 20; ++draw) {
            Eigen::VectorXd alpha(basis.size());
            for (int k = 0; k < alpha.size(); ++k) alpha[k] = 3.0 * (rng.uniform01() - 0.5);
            const auto obj = ziss::dropout_objective_grad_hess(data, q, basis, alpha);
            const Eigen::VectorXd fd_g = oracles::fd_gradient(value_at, alpha, 1e-6);
            worst_g = std::max(worst_g, (obj.grad - fd_g).cwiseAbs().maxCoeff() /
                                            std::max(1.0, obj.grad.cwiseAbs().maxCoeff()));
            const Eigen::MatrixXd fd_h = oracles::fd_jacobian(grad_at, alpha, 1e-6);
            worst_h = std::max(worst_h, (obj.hess - fd_h).cwiseAbs().maxCoeff() /
                                            std::max(1.0, obj.hess.cwiseAbs().maxCoeff()));
        }
        report(name, worst_g <= 1e-5 && worst_h <= 1e-4,
               "20 draws: max grad rel err " + fmt(worst_g) + " <= 1e-5, max Hessian rel err " +
                   fmt(worst_h) + " <= 1e-4");
    });

    run_criterion("EM monotonicity", [&](const std::string& name) {
        if (!monotonicity_ran) {
            report(name, false, "Table-2 runs did not execute");
            return;
        }
        const int total = table1_violations + table2_violations;
        report(name, total == 0,
               "penalized NLL trace increases (slack 1e-8) across 200 replicates: " +
                   std::to_string(total));
    });

    run_criterion("Null-space limit", [&](const std::string& name) {
        std::vector<double> pts(41), w(41), ybar(41);
        ziss::SplitMix64 rng(97);
        for (int i = 0; i < 41; ++i) {
            pts[static_cast<std::size_t>(i)] = i / 40.0;
            w[static_cast<std::size_t>(i)] = 15.0 + 10.0 * rng.uniform01();
            ybar[static_cast<std::size_t>(i)] =
                std::exp(0.7 + 0.6 * pts[static_cast<std::size_t>(i)]) +
                0.4 * (rng.uniform01() - 0.5);
        }
        const ziss::SplineMeanCurve fit = ziss::fit_poisson_spline(pts, w, ybar, 1e12);
        const auto [a, b] = oracles::poisson_glm_affine(pts, w, ybar);
        double sup = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sup = std::max(sup, std::abs(fit.log_mean(pts[i]) - (a + b * pts[i])));
        }
        report(name, sup <= 1e-4,
               "sup |spline(1e12) - affine GLM oracle| = " + fmt(sup) + " <= 1e-4");
    });

    run_criterion("Kernel validity", [&](const std::string& name) {
        ziss::SplitMix64 rng(555);
        double worst = 0.0;
        bool symmetric = true;
        for (int set = 0; set < 50; ++set) {
            const int n = 10 + static_cast<int>(rng() % 31);
            std::vector<double> pts(static_cast<std::size_t>(n));
            for (auto& p : pts) p = rng.uniform01();
            const Eigen::MatrixXd q = ziss::kernel_gram(pts);
            symmetric = symmetric && (q - q.transpose()).cwiseAbs().maxCoeff() == 0.0;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q);
            worst = std::min(worst, eig.eigenvalues().minCoeff() / q.norm());
        }
        report(name, symmetric && worst >= -1e-10,
               "50 Gram matrices symmetric, min eigenvalue >= " + fmt(worst) + " * |Q|");
    });

    run_criterion("Figure-3 trends", [&](const std::string& name) {
        std::string detail;
        bool pass = true;
        const std::vector<double> h_grid{0.0, 1.0, 2.0, 4.0};
        const std::vector<double> a_grid{0.0, 0.1, 0.3};
        for (int setting : {1, 2}) {
            std::vector<TrendPoint> nzss;
            for (std::size_t k = 0; k < h_grid.size(); ++k) {
                nzss.push_back(trend_point(setting, 0.0, h_grid[k], 20,
                                           31000 + 100 * setting + k, ziss::Method::Nzss));
            }
            for (std::size_t k = 1; k < nzss.size(); ++k) {
                const double pooled =
                    std::sqrt(nzss[k].se * nzss[k].se + nzss[k - 1].se * nzss[k - 1].se);
                if (nzss[k].mean > nzss[k - 1].mean + pooled) pass = false;
            }
            detail += "S" + std::to_string(setting) + " NZSS(h)=";
            for (const auto& p : nzss) detail += fmt(p.mean) + " ";

            std::vector<TrendPoint> zs;
            for (std::size_t k = 0; k < a_grid.size(); ++k) {
                zs.push_back(trend_point(setting, a_grid[k], 0.0, 20,
                                         32000 + 100 * setting + k, ziss::Method::Ziss));
            }
            for (std::size_t k = 1; k < zs.size(); ++k) {
                const double pooled =
                    std::sqrt(zs[k].se * zs[k].se + zs[k - 1].se * zs[k - 1].se);
                if (zs[k].mean < zs[k - 1].mean - pooled) pass = false;
            }
            detail += "ZISS(a)=";
            for (const auto& p : zs) detail += fmt(p.mean) + " ";
        }
        report(name, pass, detail + (pass ? "(monotone within one pooled SE)"
                                          : "(monotonicity violated)"));
    });

    run_criterion("CLI round-trip", [&](const std::string& name) {
        ziss::SimulationConfig config;
        config.setting = 1;
        config.seed = 2025;
        const auto [data, truth] = ziss::generate(config);
        const ziss::ZissFit fit = ziss::fit_ziss(data);
        const double inprocess = ziss::mse(fit.mean_curve, truth, data.points);

        const fs::path dir = fs::temp_directory_path() / "ziss_acceptance";
        fs::create_directories(dir);
        std::vector<std::string> bytes(2);
        double cli_mse = -1.0;
        for (int pass = 0; pass < 2; ++pass) {
            const fs::path sub = dir / ("run" + std::to_string(pass));
            fs::create_directories(sub);
            const fs::path data_csv = sub / "data.csv";
            const fs::path fit_json = sub / "fit.json";
            const fs::path curves_csv = sub / "curves.csv";
            const fs::path eval_csv = sub / "eval.csv";
            const fs::path mse_txt = sub / "mse.txt";
            if (run_cli("simulate --setting 1 --seed 2025 --out " + data_csv.string()) != 0 ||
                run_cli("fit --input " + data_csv.string() + " --bins 0 --domain 0 1" +
                        " --summary " + fit_json.string() + " --curves " +
                        curves_csv.string()) != 0 ||
                run_cli("evaluate --fit " + fit_json.string() + " --truth setting1 --out " +
                            eval_csv.string(), mse_txt) != 0) {
                report(name, false, "a CLI stage exited non-zero");
                return;
            }
            const std::string mse_line = slurp(mse_txt);
            cli_mse = std::stod(mse_line.substr(mse_line.find('=') + 1));
            bytes[static_cast<std::size_t>(pass)] = slurp(data_csv) + slurp(fit_json) +
                                                    slurp(curves_csv) + slurp(eval_csv);
        }
        const double gap = std::abs(cli_mse - inprocess);
        const bool deterministic = bytes[0] == bytes[1] && !bytes[0].empty();
        report(name, gap <= 1e-10 && deterministic,
               "|CLI mse - in-process mse| = " + fmt(gap) + " <= 1e-10, outputs " +
                   (deterministic ? "byte-identical" : "differ") + " across runs");
    });

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
