#include "ziss/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ziss/errors.hpp"

namespace ziss {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size() && std::isfinite(out);
}

bool parse_count(const std::string& s, int& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || v < 0 || v > INT32_MAX) return false;
    out = static_cast<int>(v);
    return true;
}

std::vector<double> json_to_vector(const nlohmann::json& j) {
    return j.get<std::vector<double>>();
}

Eigen::VectorXd json_to_eigen(const nlohmann::json& j) {
    const auto v = json_to_vector(j);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json eigen_to_json(const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return nlohmann::json(out);
}

} // namespace

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::vector<RawObservation> read_counts_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open input file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw CsvFormatError(path + ": empty file, expected header 't,y'");
    }
    {
        std::istringstream header(line);
        std::string c1, c2, extra;
        std::getline(header, c1, ',');
        std::getline(header, c2, ',');
        const bool more = static_cast<bool>(std::getline(header, extra, ','));
        if (trim(c1) != "t" || trim(c2) != "y" || more) {
            throw CsvFormatError(path + ": line 1: expected header 't,y'");
        }
    }

    std::vector<RawObservation> rows;
    std::vector<std::size_t> bad_lines;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::istringstream fields(line);
        std::string c1, c2, extra;
        std::getline(fields, c1, ',');
        const bool has_y = static_cast<bool>(std::getline(fields, c2, ','));
        const bool more = static_cast<bool>(std::getline(fields, extra, ','));
        RawObservation obs;
        if (!has_y || more || !parse_double(c1, obs.t) || !parse_count(c2, obs.y)) {
            bad_lines.push_back(line_no);
            if (bad_lines.size() >= 20) break;
        } else {
            rows.push_back(obs);
        }
    }
    if (!bad_lines.empty()) {
        std::string msg = path + ": malformed rows at line";
        msg += bad_lines.size() > 1 ? "s " : " ";
        for (std::size_t i = 0; i < bad_lines.size(); ++i) {
            if (i > 0) msg += ", ";
            msg += std::to_string(bad_lines[i]);
        }
        throw CsvFormatError(msg);
    }
    if (rows.empty()) {
        throw CsvFormatError(path + ": no data rows");
    }
    return rows;
}

BinnedCountData bin_observations(std::vector<RawObservation> rows, int bins) {
    if (bins < 0) {
        throw std::invalid_argument("bin_observations: bins must be >= 0");
    }
    if (rows.empty()) {
        throw std::invalid_argument("bin_observations: no observations");
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawObservation& a, const RawObservation& b) { return a.t < b.t; });
    const double lo = rows.front().t;
    const double hi = rows.back().t;

    if (bins == 0) {
        // Distinct t values as points; pad the domain by half the mean
        // spacing so aligned pre-binned data reproduce the binned domain.
        std::vector<double> points;
        std::vector<std::vector<int>> counts;
        for (const auto& r : rows) {
            if (points.empty() || r.t != points.back()) {
                points.push_back(r.t);
                counts.emplace_back();
            }
            counts.back().push_back(r.y);
        }
        if (points.size() < 2) {
            throw DegenerateDataError("bin_observations: need at least two distinct "
                                      "pseudotime values");
        }
        const double pad =
            (points.back() - points.front()) / (2.0 * static_cast<double>(points.size() - 1));
        const Interval domain{points.front() - pad, points.back() + pad};
        return BinnedCountData(std::move(points), std::move(counts), domain);
    }

    if (!(hi > lo)) {
        throw DegenerateDataError("bin_observations: all observations share one pseudotime");
    }
    const double width = (hi - lo) / bins;
    std::map<int, std::vector<int>> by_bin;
    for (const auto& r : rows) {
        int k = static_cast<int>((r.t - lo) / width);
        k = std::clamp(k, 0, bins - 1);
        by_bin[k].push_back(r.y);
    }
    std::vector<double> points;
    std::vector<std::vector<int>> counts;
    points.reserve(by_bin.size());
    for (auto& [k, ys] : by_bin) {
        points.push_back(lo + (k + 0.5) * width);
        counts.push_back(std::move(ys));
    }
    return BinnedCountData(std::move(points), std::move(counts), Interval{lo, hi});
}

void write_counts_csv(const std::string& path, const BinnedCountData& data) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "t,y\n";
    for (std::size_t i = 0; i < data.num_points(); ++i) {
        const std::string t = format_double(data.points[i]);
        for (int y : data.counts[i]) {
            out << t << ',' << y << '\n';
        }
    }
    if (!out) throw IoError("failed while writing " + path);
}

CurveExport export_curves(const ZissFit& fit, int grid_points) {
    if (grid_points < 2) {
        throw std::invalid_argument("export_curves: need at least two grid points");
    }
    const Interval dom = fit.mean_curve.domain;
    CurveExport ex;
    ex.t.resize(static_cast<std::size_t>(grid_points));
    ex.mu_hat.resize(ex.t.size());
    ex.dropout_hat.resize(ex.t.size());
    for (int i = 0; i < grid_points; ++i) {
        const double t = dom.lo + (dom.hi - dom.lo) * i / (grid_points - 1);
        ex.t[static_cast<std::size_t>(i)] = t;
        ex.mu_hat[static_cast<std::size_t>(i)] = fit.mean_curve.mean(t);
        ex.dropout_hat[static_cast<std::size_t>(i)] = fit.dropout.dropout_prob(t);
    }
    return ex;
}

void write_curve_csv(const std::string& path, const CurveExport& curves) {
    const bool with_truth = !curves.mu_true.empty();
    if (curves.mu_hat.size() != curves.t.size() ||
        curves.dropout_hat.size() != curves.t.size() ||
        (with_truth && curves.mu_true.size() != curves.t.size())) {
        throw std::invalid_argument("write_curve_csv: column length mismatch");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << (with_truth ? "t,mu_hat,dropout_hat,mu_true\n" : "t,mu_hat,dropout_hat\n");
    for (std::size_t i = 0; i < curves.t.size(); ++i) {
        out << format_double(curves.t[i]) << ',' << format_double(curves.mu_hat[i]) << ','
            << format_double(curves.dropout_hat[i]);
        if (with_truth) out << ',' << format_double(curves.mu_true[i]);
        out << '\n';
    }
    if (!out) throw IoError("failed while writing " + path);
}

nlohmann::json fit_to_json(const BinnedCountData& data, const ZissFit& fit) {
    nlohmann::json j;
    j["lambda"] = fit.lambda;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["penalized_nll"] = penalized_nll(data, fit);
    j["alpha"] = eigen_to_json(fit.dropout.alpha);
    j["spline"] = {
        {"knots", fit.mean_curve.knots},
        {"d", eigen_to_json(Eigen::VectorXd(fit.mean_curve.d))},
        {"c", eigen_to_json(fit.mean_curve.c)},
        {"domain", {fit.mean_curve.domain.lo, fit.mean_curve.domain.hi}},
    };
    j["basis"] = {
        {"degree", fit.dropout.basis.degree()},
        {"knots", fit.dropout.basis.knots()},
    };
    return j;
}

ZissFit fit_from_json(const nlohmann::json& j) {
    try {
        const auto& spline = j.at("spline");
        SplineMeanCurve curve;
        curve.knots = json_to_vector(spline.at("knots"));
        const Eigen::VectorXd d = json_to_eigen(spline.at("d"));
        if (d.size() != 2) throw std::invalid_argument("spline.d must have two entries");
        curve.d = d;
        curve.c = json_to_eigen(spline.at("c"));
        if (curve.c.size() != static_cast<Eigen::Index>(curve.knots.size())) {
            throw std::invalid_argument("spline.c does not match spline.knots");
        }
        const auto dom = json_to_vector(spline.at("domain"));
        if (dom.size() != 2) throw std::invalid_argument("spline.domain must be [lo, hi]");
        curve.domain = Interval{dom[0], dom[1]};

        const auto& basis_j = j.at("basis");
        BSplineBasis basis(basis_j.at("degree").get<int>(),
                           json_to_vector(basis_j.at("knots")));
        DropoutCurve dropout{basis, json_to_eigen(j.at("alpha"))};
        if (dropout.alpha.size() != basis.size()) {
            throw std::invalid_argument("alpha does not match the basis size");
        }

        return ZissFit{std::move(dropout),
                       std::move(curve),
                       j.at("lambda").get<double>(),
                       Responsibilities{},
                       {},
                       {},
                       j.at("iterations").get<int>(),
                       j.at("converged").get<bool>()};
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("fit JSON: ") + e.what());
    }
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed while writing " + path);
}

} // namespace ziss
