#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "kneebench/series.hpp"

namespace kb {

// Pointwise signed curvature of a normalized series. Endpoint values come from
// one-sided differences and sit outside [first, last].
struct CurvatureProfile {
    std::vector<double> values;
    std::size_t first = 0; // first valid index (inclusive)
    std::size_t last = 0;  // last valid index (inclusive)
};

// y'' / (1 + y'^2)^(3/2)
double analytic_curvature(double first_deriv, double second_deriv);

// Curvature of f after unit-square normalization, evaluated at normalized xt.
double normalized_analytic_curvature(const std::function<double(double)>& f_prime,
                                     const std::function<double(double)>& f_second,
                                     const NormalizationParams& params, double xt);

// Three-point central differences on the (possibly non-uniform) grid.
CurvatureProfile discrete_curvature(const NormalizedSeries& n);
CurvatureProfile discrete_curvature(const std::vector<double>& xs, const std::vector<double>& ys);

// argmin of curvature over the valid range; ties break toward the smallest index.
std::size_t curvature_argmin(const CurvatureProfile& profile);

} // namespace kb
