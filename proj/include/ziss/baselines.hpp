#pragma once

#include "ziss/rkhs_spline.hpp"
#include "ziss/ziss_em.hpp"

namespace ziss {

// Direct smoothing spline: Poisson log-link fit to all observations
// including zeros, lambda by GCV. Throws DegenerateDataError when every
// count is zero.
SplineMeanCurve fit_dss(const BinnedCountData& data, const LambdaPolicy& policy = {});

// Non-zero smoothing spline: the same fit restricted to strictly positive
// observations. The lambda policy's sample size is the number of positive
// observations, so adding pure zeros anywhere leaves the fit unchanged.
// Throws DegenerateDataError with fewer than two positive-count points.
SplineMeanCurve fit_nzss(const BinnedCountData& data, const LambdaPolicy& policy = {});

} // namespace ziss
