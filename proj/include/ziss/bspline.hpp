#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ziss {

// Clamped B-spline basis over a closed interval. The boundary knots are
// repeated degree+1 times, so the first and last basis functions interpolate
// at the interval ends and the basis forms a partition of unity everywhere
// in the domain. Immutable after construction; evaluation is thread-safe.
class BSplineBasis {
public:
    // Builds the basis from a full (clamped) knot vector.
    BSplineBasis(int degree, std::vector<double> knots);

    // m basis functions of the given degree with m - degree - 1 equally
    // spaced interior knots on (t_min, t_max).
    static BSplineBasis clamped_uniform(double t_min, double t_max, int m, int degree = 3);

    int degree() const { return degree_; }
    int size() const { return m_; }
    double t_min() const { return knots_.front(); }
    double t_max() const { return knots_.back(); }
    const std::vector<double>& knots() const { return knots_; }

    // (b_1(t), ..., b_m(t)) by the Cox-de Boor recurrence. The final knot
    // interval is right-closed so t = t_max evaluates to (0, ..., 0, 1).
    // Throws std::domain_error outside [t_min, t_max]; no extrapolation.
    Eigen::VectorXd evaluate(double t) const;

    // Row i is evaluate(points[i]).
    Eigen::MatrixXd design_matrix(std::span<const double> points) const;

private:
    int degree_;
    std::vector<double> knots_;
    int m_;

    int find_span(double t) const;
};

} // namespace ziss
