#pragma once

#include <cmath>

namespace ziss {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    double length() const { return hi - lo; }
    bool contains(double t) const { return t >= lo && t <= hi; }
    bool contains_open(double t) const { return t > lo && t < hi; }
    // Affine map onto [0,1].
    double rescale(double t) const { return (t - lo) / (hi - lo); }
};

// Numerically stable logistic 1/(1+e^{-x}).
inline double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double log1p_exp(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

} // namespace ziss
