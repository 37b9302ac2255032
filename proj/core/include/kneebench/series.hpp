#pragma once

#include <cstddef>
#include <vector>

#include "kneebench/errors.hpp"

namespace kb {

// Ordered (x, y) points in their raw units. xs strictly increasing.
struct Series {
    std::vector<double> xs;
    std::vector<double> ys;

    std::size_t size() const { return xs.size(); }
};

// Affine maps back to raw units: x = a_x * xt + b_x, y = a_y * yt + b_y.
struct NormalizationParams {
    double a_x = 1.0;
    double b_x = 0.0;
    double a_y = 1.0;
    double b_y = 0.0;
};

// Unit-square series: both axes min-max scaled into [0, 1].
struct NormalizedSeries {
    std::vector<double> xs;
    std::vector<double> ys;
    NormalizationParams params;

    std::size_t size() const { return xs.size(); }
};

void validate_series(const Series& s);

NormalizedSeries normalize(const Series& s);
Series denormalize(const NormalizedSeries& n);

// Elbow <-> knee reflection: x -> x_max - x, y -> y_max - y, re-sorted.
Series flip_concavity(const Series& s);

// Reflection across y = 1 - x for monotone normalized samples.
NormalizedSeries flip_antidiagonal(const NormalizedSeries& n);

} // namespace kb
