#pragma once

#include <stdexcept>
#include <string>

namespace ziss {

// Linear system for the spline coefficients is rank deficient (coincident
// knots, fewer than two usable design points, ...).
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative solver left the feasible region (non-finite objective or
// gradient) and damping could not recover.
class NonConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The data carry no usable signal for the requested fit (all counts zero,
// fewer than two effective design points, ...).
class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file; the message lists the offending line numbers.
class CsvFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ziss
