#include "kneebench/curvature.hpp"

#include <cmath>

namespace kb {

double analytic_curvature(double first_deriv, double second_deriv) {
    const double denom = std::pow(1.0 + first_deriv * first_deriv, 1.5);
    return second_deriv / denom;
}

double normalized_analytic_curvature(const std::function<double(double)>& f_prime,
                                     const std::function<double(double)>& f_second,
                                     const NormalizationParams& params, double xt) {
    const double x = params.a_x * xt + params.b_x;
    const double d1 = (params.a_x / params.a_y) * f_prime(x);
    const double d2 = (params.a_x * params.a_x / params.a_y) * f_second(x);
    return analytic_curvature(d1, d2);
}

CurvatureProfile discrete_curvature(const std::vector<double>& xs, const std::vector<double>& ys) {
    NormalizedSeries n;
    n.xs = xs;
    n.ys = ys;
    return discrete_curvature(n);
}

CurvatureProfile discrete_curvature(const NormalizedSeries& n) {
    const std::size_t L = n.size();
    if (L < 3)
        throw DegenerateSeries("discrete_curvature: need at least 3 points");
    for (std::size_t i = 1; i < L; ++i)
        if (n.xs[i] - n.xs[i - 1] == 0.0)
            throw DegenerateSeries("discrete_curvature: zero x spacing");

    CurvatureProfile out;
    out.values.resize(L);
    out.first = 1;
    out.last = L - 2;

    for (std::size_t i = 1; i + 1 < L; ++i) {
        const double h1 = n.xs[i] - n.xs[i - 1];
        const double h2 = n.xs[i + 1] - n.xs[i];
        const double ym = n.ys[i - 1], y0 = n.ys[i], yp = n.ys[i + 1];
        // Lagrange weights for non-uniform central differences
        const double d1 = -h2 / (h1 * (h1 + h2)) * ym + (h2 - h1) / (h1 * h2) * y0 +
                          h1 / (h2 * (h1 + h2)) * yp;
        const double d2 = 2.0 * (ym / (h1 * (h1 + h2)) - y0 / (h1 * h2) + yp / (h2 * (h1 + h2)));
        out.values[i] = analytic_curvature(d1, d2);
    }

    // One-sided endpoint estimates, outside the valid range.
    {
        const double h = n.xs[1] - n.xs[0];
        const double d1 = (n.ys[1] - n.ys[0]) / h;
        out.values[0] = analytic_curvature(d1, 0.0);
        const double hn = n.xs[L - 1] - n.xs[L - 2];
        const double d1n = (n.ys[L - 1] - n.ys[L - 2]) / hn;
        out.values[L - 1] = analytic_curvature(d1n, 0.0);
    }
    return out;
}

std::size_t curvature_argmin(const CurvatureProfile& profile) {
    std::size_t best = profile.first;
    for (std::size_t i = profile.first + 1; i <= profile.last; ++i)
        if (profile.values[i] < profile.values[best])
            best = i;
    return best;
}

} // namespace kb
