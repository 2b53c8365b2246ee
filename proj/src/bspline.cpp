#include "ziss/bspline.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ziss {

BSplineBasis::BSplineBasis(int degree, std::vector<double> knots)
    : degree_(degree), knots_(std::move(knots)) {
    if (degree_ < 0) {
        throw std::invalid_argument("BSplineBasis: degree must be non-negative");
    }
    const int order = degree_ + 1;
    m_ = static_cast<int>(knots_.size()) - order;
    if (m_ < order) {
        throw std::invalid_argument("BSplineBasis: need at least degree+1 basis functions");
    }
    if (!std::is_sorted(knots_.begin(), knots_.end())) {
        throw std::invalid_argument("BSplineBasis: knots must be non-decreasing");
    }
    if (knots_.front() >= knots_.back()) {
        throw std::invalid_argument("BSplineBasis: empty domain");
    }
    for (int i = 0; i < order; ++i) {
        if (knots_[i] != knots_.front() ||
            knots_[knots_.size() - 1 - i] != knots_.back()) {
            throw std::invalid_argument("BSplineBasis: boundary knots must repeat degree+1 times");
        }
    }
    if (knots_[order] == knots_.front() ||
        knots_[knots_.size() - 1 - order] == knots_.back()) {
        throw std::invalid_argument("BSplineBasis: boundary knots repeated more than degree+1 times");
    }
}

BSplineBasis BSplineBasis::clamped_uniform(double t_min, double t_max, int m, int degree) {
    if (t_min >= t_max) {
        throw std::invalid_argument("clamped_uniform: t_min must be below t_max");
    }
    if (degree < 0 || m < degree + 1) {
        throw std::invalid_argument("clamped_uniform: m must be at least degree+1");
    }
    const int interior = m - degree - 1;
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(m + degree + 1));
    for (int i = 0; i <= degree; ++i) knots.push_back(t_min);
    for (int k = 1; k <= interior; ++k) {
        knots.push_back(t_min + (t_max - t_min) * k / (interior + 1));
    }
    for (int i = 0; i <= degree; ++i) knots.push_back(t_max);
    return BSplineBasis(degree, std::move(knots));
}

int BSplineBasis::find_span(double t) const {
    // Largest span index k with knots[k] <= t < knots[k+1]; the last
    // non-empty interval is right-closed so t_max stays in-domain.
    const int lo = degree_;
    const int hi = m_ - 1;  // = knots_.size() - degree_ - 2
    if (t >= knots_[static_cast<std::size_t>(hi) + 1]) return hi;
    auto it = std::upper_bound(knots_.begin() + lo, knots_.begin() + hi + 1, t);
    return static_cast<int>(it - knots_.begin()) - 1;
}

Eigen::VectorXd BSplineBasis::evaluate(double t) const {
    if (t < t_min() || t > t_max()) {
        throw std::domain_error("BSplineBasis::evaluate: t=" + std::to_string(t) +
                                " outside [" + std::to_string(t_min()) + ", " +
                                std::to_string(t_max()) + "]");
    }
    const int span = find_span(t);
    const int order = degree_ + 1;

    // Cox-de Boor triangle for the order non-zero functions on this span.
    std::vector<double> vals(order, 0.0), left(order, 0.0), right(order, 0.0);
    vals[0] = 1.0;
    for (int j = 1; j <= degree_; ++j) {
        left[j] = t - knots_[static_cast<std::size_t>(span + 1 - j)];
        right[j] = knots_[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = vals[static_cast<std::size_t>(r)] /
                               (right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)]);
            vals[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * tmp;
            saved = left[static_cast<std::size_t>(j - r)] * tmp;
        }
        vals[static_cast<std::size_t>(j)] = saved;
    }

    Eigen::VectorXd out = Eigen::VectorXd::Zero(m_);
    for (int j = 0; j <= degree_; ++j) {
        out[span - degree_ + j] = vals[static_cast<std::size_t>(j)];
    }
    return out;
}

Eigen::MatrixXd BSplineBasis::design_matrix(std::span<const double> points) const {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(points.size()), m_);
    for (std::size_t i = 0; i < points.size(); ++i) {
        design.row(static_cast<Eigen::Index>(i)) = evaluate(points[i]).transpose();
    }
    return design;
}

} // namespace ziss
