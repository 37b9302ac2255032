#include "kneebench/series.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kb {

void validate_series(const Series& s) {
    if (s.xs.size() != s.ys.size())
        throw DegenerateSeries("series: xs and ys lengths differ");
    if (s.xs.size() < 3)
        throw DegenerateSeries("series: need at least 3 points");
    for (std::size_t i = 1; i < s.xs.size(); ++i)
        if (!(s.xs[i] > s.xs[i - 1]))
            throw DegenerateSeries("series: xs not strictly increasing");
}

NormalizedSeries normalize(const Series& s) {
    validate_series(s);
    const auto [x_min_it, x_max_it] = std::minmax_element(s.xs.begin(), s.xs.end());
    const auto [y_min_it, y_max_it] = std::minmax_element(s.ys.begin(), s.ys.end());
    const double x_min = *x_min_it, x_max = *x_max_it;
    const double y_min = *y_min_it, y_max = *y_max_it;
    if (x_max == x_min)
        throw DegenerateSeries("normalize: x range is zero");
    if (y_max == y_min)
        throw DegenerateSeries("normalize: y range is zero (flat series)");

    NormalizedSeries out;
    out.params = {x_max - x_min, x_min, y_max - y_min, y_min};
    out.xs.resize(s.size());
    out.ys.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out.xs[i] = (s.xs[i] - x_min) / (x_max - x_min);
        out.ys[i] = (s.ys[i] - y_min) / (y_max - y_min);
    }
    return out;
}

Series denormalize(const NormalizedSeries& n) {
    Series out;
    out.xs.resize(n.size());
    out.ys.resize(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
        out.xs[i] = n.params.a_x * n.xs[i] + n.params.b_x;
        out.ys[i] = n.params.a_y * n.ys[i] + n.params.b_y;
    }
    return out;
}

Series flip_concavity(const Series& s) {
    validate_series(s);
    const double x_max = s.xs.back();
    const double y_max = *std::max_element(s.ys.begin(), s.ys.end());

    Series out;
    const std::size_t L = s.size();
    out.xs.resize(L);
    out.ys.resize(L);
    // x_max - x reverses the x order; reading backwards keeps xs ascending
    for (std::size_t i = 0; i < L; ++i) {
        out.xs[i] = x_max - s.xs[L - 1 - i];
        out.ys[i] = y_max - s.ys[L - 1 - i];
    }
    return out;
}

NormalizedSeries flip_antidiagonal(const NormalizedSeries& n) {
    const std::size_t L = n.size();
    for (std::size_t i = 1; i < L; ++i)
        if (!(n.ys[i] > n.ys[i - 1]))
            throw NonMonotone("flip_antidiagonal: ys must be strictly increasing");

    NormalizedSeries out;
    out.params = {1.0, 0.0, 1.0, 0.0}; // axes swap; raw-scale provenance is lost
    out.xs.resize(L);
    out.ys.resize(L);
    // (xt, yt) -> (1 - yt, 1 - xt); reversing restores ascending x
    for (std::size_t i = 0; i < L; ++i) {
        out.xs[i] = 1.0 - n.ys[L - 1 - i];
        out.ys[i] = 1.0 - n.xs[L - 1 - i];
    }
    return out;
}

} // namespace kb
