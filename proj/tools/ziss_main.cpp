#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ziss/baselines.hpp"
#include "ziss/errors.hpp"
#include "ziss/io.hpp"
#include "ziss/simulate.hpp"
#include "ziss/ziss_em.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::vector<ziss::Method> parse_methods(const std::string& csv) {
    std::vector<ziss::Method> methods;
    std::istringstream in(csv);
    std::string token;
    while (std::getline(in, token, ',')) {
        if (token == "ziss") {
            methods.push_back(ziss::Method::Ziss);
        } else if (token == "nzss") {
            methods.push_back(ziss::Method::Nzss);
        } else if (token == "dss") {
            methods.push_back(ziss::Method::Dss);
        } else {
            throw std::invalid_argument("unknown method '" + token +
                                        "' (expected ziss, nzss, dss)");
        }
    }
    if (methods.empty()) {
        throw std::invalid_argument("--methods must name at least one method");
    }
    return methods;
}

struct SimulateArgs {
    ziss::SimulationConfig config;
    std::string methods = "ziss,nzss,dss";
    std::string out;
};

int cmd_simulate(const SimulateArgs& args) {
    if (args.config.replicates > 0) {
        const auto methods = parse_methods(args.methods);
        const ziss::ReplicateTable table = ziss::run_replicates(args.config, methods);
        std::ofstream out(args.out);
        if (!out) throw ziss::IoError("cannot write " + args.out);
        out << "method,mean_mse,std_mse,effective_R\n";
        for (const auto& row : table.rows) {
            out << ziss::method_name(row.method) << ',' << ziss::format_double(row.mean_mse)
                << ',' << ziss::format_double(row.std_mse) << ',' << row.effective_replicates
                << '\n';
            if (row.failures > 0) {
                std::cerr << "warning: " << row.failures << " replicate(s) failed for "
                          << ziss::method_name(row.method) << "\n";
            }
        }
        if (!out) throw ziss::IoError("failed while writing " + args.out);
        return kExitOk;
    }
    const auto [data, truth] = ziss::generate(args.config);
    ziss::write_counts_csv(args.out, data);
    return kExitOk;
}

struct FitArgs {
    std::string input;
    int bins = 150;
    int basis_m = 6;
    double epsilon = 1e-4;
    int max_iter = 200;
    double lambda_grid_span = 3.0;
    std::vector<double> domain;  // empty or {lo, hi}
    std::string summary = "fit.json";
    std::string curves = "curves.csv";
    int grid_points = 512;
    bool allow_nonconverged = false;
    bool seed_independent = false;  // accepted for compatibility; fits take no seed
};

int cmd_fit(const FitArgs& args) {
    auto rows = ziss::read_counts_csv(args.input);
    ziss::BinnedCountData data = ziss::bin_observations(std::move(rows), args.bins);
    if (!args.domain.empty()) {
        const ziss::Interval dom{args.domain[0], args.domain[1]};
        if (!(dom.lo < dom.hi)) {
            throw std::invalid_argument("--domain: LO must be below HI");
        }
        data = ziss::BinnedCountData(data.points, data.counts, dom);
    }

    ziss::ZissConfig config;
    config.basis_m = args.basis_m;
    config.epsilon = args.epsilon;
    config.max_em_iter = args.max_iter;
    config.lambda_policy.span_decades = args.lambda_grid_span;
    const ziss::ZissFit fit = ziss::fit_ziss(data, config);

    ziss::write_json_file(args.summary, ziss::fit_to_json(data, fit));
    ziss::write_curve_csv(args.curves, ziss::export_curves(fit, args.grid_points));

    if (!fit.converged) {
        std::cerr << "warning: EM did not converge within " << args.max_iter
                  << " iterations\n";
        if (!args.allow_nonconverged) return kExitNumerical;
    }
    return kExitOk;
}

struct EvaluateArgs {
    std::string fit_path;
    std::string truth = "setting1";
    std::string out;
};

int cmd_evaluate(const EvaluateArgs& args) {
    const ziss::ZissFit fit = ziss::fit_from_json(ziss::read_json_file(args.fit_path));

    std::vector<double> points;
    std::vector<double> mu_true;
    if (args.truth == "setting1" || args.truth == "setting2") {
        const ziss::GroundTruth truth =
            args.truth == "setting1" ? ziss::truth_setting1() : ziss::truth_setting2();
        points = fit.mean_curve.knots;
        mu_true.reserve(points.size());
        for (double t : points) mu_true.push_back(truth.mu_true(t));
    } else {
        std::ifstream in(args.truth);
        if (!in) throw ziss::IoError("cannot open truth file: " + args.truth);
        std::string line;
        if (!std::getline(in, line) || line.rfind("t,", 0) != 0) {
            throw ziss::CsvFormatError(args.truth + ": expected header 't,mu_true'");
        }
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream fields(line);
            std::string c1, c2;
            std::getline(fields, c1, ',');
            std::getline(fields, c2, ',');
            try {
                points.push_back(std::stod(c1));
                mu_true.push_back(std::stod(c2));
            } catch (const std::exception&) {
                throw ziss::CsvFormatError(args.truth + ": malformed row at line " +
                                           std::to_string(line_no));
            }
        }
        for (double t : points) {
            if (!fit.mean_curve.domain.contains(t)) {
                throw std::domain_error("truth point t=" + std::to_string(t) +
                                        " lies outside the fitted domain");
            }
        }
    }
    if (points.empty()) {
        throw std::invalid_argument("evaluate: no evaluation points");
    }

    std::ofstream out(args.out);
    if (!out) throw ziss::IoError("cannot write " + args.out);
    out << "t,mu_hat,mu_true,sq_err\n";
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double mu_hat = fit.mean_curve.mean(points[i]);
        const double err = mu_hat - mu_true[i];
        total += err * err;
        out << ziss::format_double(points[i]) << ',' << ziss::format_double(mu_hat) << ','
            << ziss::format_double(mu_true[i]) << ',' << ziss::format_double(err * err)
            << '\n';
    }
    if (!out) throw ziss::IoError("failed while writing " + args.out);
    std::printf("mse=%.17g\n", total / static_cast<double>(points.size()));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-inflated smoothing-spline fits for binned count data over pseudotime"};
    app.require_subcommand(1);

    SimulateArgs sim;
    sim.config.replicates = 0;
    auto* simulate = app.add_subcommand(
        "simulate", "Generate a synthetic dataset or a replicate MSE table");
    simulate->add_option("--setting", sim.config.setting, "Simulation setting (1 or 2)")
        ->check(CLI::Range(1, 2));
    simulate->add_option("--seed", sim.config.seed, "RNG seed");
    simulate->add_option("--n-points", sim.config.n_points, "Design points N");
    simulate->add_option("--samples-per-point", sim.config.samples_per_point,
                         "Replicate counts M per point");
    simulate->add_option("--overdispersion", sim.config.overdispersion,
                         "Negative-binomial overdispersion a (0 = Poisson)");
    simulate->add_option("--shift", sim.config.shift, "Up-moving shift h added to the mean");
    simulate->add_option("--replicates", sim.config.replicates,
                         "Run this many replicates and write a method MSE table");
    simulate->add_option("--methods", sim.methods, "Comma list of ziss,nzss,dss");
    simulate->add_option("--jobs", sim.config.jobs, "Worker threads (0 = all cores)");
    simulate->add_option("--out", sim.out, "Output CSV path")->required();

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the estimator to a t,y counts CSV");
    fit_cmd->add_option("--input", fit.input, "Input CSV with header t,y")->required();
    fit_cmd->add_option("--bins", fit.bins,
                        "Equal-width pseudotime bins (0 = distinct t values)");
    fit_cmd->add_option("--basis-m", fit.basis_m, "Dropout-curve B-spline basis size");
    fit_cmd->add_option("--epsilon", fit.epsilon, "EM convergence threshold");
    fit_cmd->add_option("--max-iter", fit.max_iter, "Maximum EM iterations");
    fit_cmd->add_option("--lambda-grid-span", fit.lambda_grid_span,
                        "GCV grid half-width in decades");
    fit_cmd->add_option("--domain", fit.domain, "Fitting domain LO HI (default: data range)")
        ->expected(2);
    fit_cmd->add_option("--summary", fit.summary, "Fit summary JSON path");
    fit_cmd->add_option("--curves", fit.curves, "Curve export CSV path");
    fit_cmd->add_option("--grid-points", fit.grid_points, "Curve export grid size");
    fit_cmd->add_flag("--allow-nonconverged", fit.allow_nonconverged,
                      "Exit 0 with a warning when EM hits the iteration cap");
    fit_cmd->add_flag("--seed-independent", fit.seed_independent,
                      "No-op: fits are deterministic and consume no seed");

    EvaluateArgs eval;
    auto* eval_cmd =
        app.add_subcommand("evaluate", "Squared error of a fit against a truth curve");
    eval_cmd->add_option("--fit", eval.fit_path, "Fit summary JSON")->required();
    eval_cmd->add_option("--truth", eval.truth,
                         "setting1, setting2, or a CSV with header t,mu_true");
    eval_cmd->add_option("--out", eval.out, "Per-point squared-error CSV")->required();

    try {
        app.parse(argc, argv);
        if (simulate->parsed()) return cmd_simulate(sim);
        if (fit_cmd->parsed()) return cmd_fit(fit);
        if (eval_cmd->parsed()) return cmd_evaluate(eval);
        return kExitValidation;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    } catch (const ziss::CsvFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ziss::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
