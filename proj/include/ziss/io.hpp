#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ziss/ziss_em.hpp"

namespace ziss {

// One row of the long-format input CSV (header "t,y").
struct RawObservation {
    double t = 0.0;
    int y = 0;
};

// Parses a long-format counts CSV. Throws CsvFormatError listing the
// offending line numbers, IoError if the file cannot be read.
std::vector<RawObservation> read_counts_csv(const std::string& path);

// Groups rows into `bins` equal-width intervals over [min t, max t], each
// bin represented by its midpoint; empty bins are dropped. bins = 0 treats
// the distinct t values as points and pads the domain by half the mean
// spacing on each side.
BinnedCountData bin_observations(std::vector<RawObservation> rows, int bins);

void write_counts_csv(const std::string& path, const BinnedCountData& data);

struct CurveExport {
    std::vector<double> t;
    std::vector<double> mu_hat;
    std::vector<double> dropout_hat;
    std::vector<double> mu_true;  // optional; written when non-empty
};

CurveExport export_curves(const ZissFit& fit, int grid_points);

void write_curve_csv(const std::string& path, const CurveExport& curves);

nlohmann::json fit_to_json(const BinnedCountData& data, const ZissFit& fit);

// Rebuilds the fitted curves from a summary JSON (responsibilities and the
// trace are not persisted).
ZissFit fit_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

// Serializes a double so that parsing it back returns the same bits.
std::string format_double(double x);

} // namespace ziss
