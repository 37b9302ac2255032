#include "kneebench/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace kb {

namespace {

struct Line {
    double slope = 0.0;
    double intercept = 0.0;

    double at(double x) const { return slope * x + intercept; }
};

Line fit_line(const std::vector<double>& xs, const std::vector<double>& ys, std::size_t a,
              std::size_t b, FitMode mode) {
    if (mode == FitMode::linear_fit) {
        const double dx = xs[b] - xs[a];
        const double slope = dx == 0.0 ? 0.0 : (ys[b] - ys[a]) / dx;
        return {slope, ys[a] - slope * xs[a]};
    }
    const std::size_t n = b - a + 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = a; i <= b; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    const double slope = denom == 0.0 ? 0.0 : (n * sxy - sx * sy) / denom;
    return {slope, (sy - slope * sx) / n};
}

double rmse(const std::vector<double>& xs, const std::vector<double>& ys, std::size_t a,
            std::size_t b, const Line& line) {
    double acc = 0.0;
    for (std::size_t i = a; i <= b; ++i) {
        const double e = ys[i] - line.at(xs[i]);
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(b - a + 1));
}

std::vector<double> first_derivative(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t L = xs.size();
    std::vector<double> d(L);
    for (std::size_t i = 1; i + 1 < L; ++i)
        d[i] = (ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1]);
    d[0] = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    d[L - 1] = (ys[L - 1] - ys[L - 2]) / (xs[L - 1] - xs[L - 2]);
    return d;
}

void minmax_rescale(std::vector<double>& vs) {
    const auto [lo_it, hi_it] = std::minmax_element(vs.begin(), vs.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
        std::fill(vs.begin(), vs.end(), 0.0);
        return;
    }
    for (auto& v : vs)
        v = (v - lo) / (hi - lo);
}

// DFDT core on [start, L-1]; returns an absolute index.
std::size_t dfdt_once(const NormalizedSeries& s, std::size_t start) {
    const std::size_t L = s.size();
    std::vector<double> xs(s.xs.begin() + start, s.xs.end());
    std::vector<double> ys(s.ys.begin() + start, s.ys.end());
    std::vector<double> deriv = first_derivative(xs, ys);

    double threshold;
    try {
        threshold = isodata_threshold(deriv);
    } catch (const DegenerateInput&) {
        return start + 1; // constant slope: every derivative equals the threshold
    }
    std::size_t best = 1;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < deriv.size(); ++i) {
        const double gap = std::abs(deriv[i] - threshold);
        if (gap < best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    (void)L;
    return start + best;
}

// AL core on [0, end]; returns the combined-score argmin.
std::size_t al_once(const NormalizedSeries& s, std::size_t end, FitMode fit) {
    const auto& xs = s.xs;
    const auto& ys = s.ys;
    const std::size_t first = 1, last = end - 1;
    std::vector<double> rmse_scores, angle_scores;
    for (std::size_t c = first; c <= last; ++c) {
        const Line left = fit_line(xs, ys, 0, c, fit);
        const Line right = fit_line(xs, ys, c, end, fit);
        const double w = static_cast<double>(end + 1);
        rmse_scores.push_back((static_cast<double>(c + 1) * rmse(xs, ys, 0, c, left) +
                               static_cast<double>(end - c + 1) * rmse(xs, ys, c, end, right)) /
                              w);
        const double theta =
            std::abs(std::atan(left.slope) - std::atan(right.slope)) * 180.0 / M_PI;
        angle_scores.push_back((90.0 - theta) * (90.0 - theta));
    }
    minmax_rescale(rmse_scores);
    minmax_rescale(angle_scores);
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rmse_scores.size(); ++i) {
        const double score = rmse_scores[i] + angle_scores[i];
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    return first + best;
}

} // namespace

double SmoothingConfig::decay_alpha() const {
    switch (mode) {
    case SmoothMode::alpha:
        return value;
    case SmoothMode::span:
        return 2.0 / (value + 1.0);
    case SmoothMode::center_of_mass:
        return 1.0 / (1.0 + value);
    case SmoothMode::half_life:
        return 1.0 - std::pow(2.0, -1.0 / value);
    }
    return value;
}

std::vector<SmoothingConfig> smoothing_grid() {
    std::vector<SmoothingConfig> grid;
    for (int i = 1; i <= 50; ++i)
        grid.push_back({SmoothMode::center_of_mass, 0.2 * i});
    for (int i = 0; i <= 44; ++i)
        grid.push_back({SmoothMode::span, 1.2 + 0.2 * i});
    for (int i = 1; i <= 50; ++i)
        grid.push_back({SmoothMode::half_life, 0.2 * i});
    for (int i = 0; i <= 4; ++i)
        grid.push_back({SmoothMode::alpha, 0.1 + 0.2 * i});
    return grid;
}

std::vector<double> ewm_smooth(const std::vector<double>& ys, const SmoothingConfig& cfg) {
    const double alpha = cfg.decay_alpha();
    std::vector<double> out(ys.size());
    if (ys.empty())
        return out;
    out[0] = ys[0];
    for (std::size_t i = 1; i < ys.size(); ++i)
        out[i] = (1.0 - alpha) * out[i - 1] + alpha * ys[i];
    return out;
}

SmoothingConfig select_smooth_config(const std::vector<double>& ys_noisy,
                                     const std::vector<double>& ys_clean,
                                     const std::vector<SmoothingConfig>& grid) {
    SmoothingConfig best = grid.front();
    double best_mse = std::numeric_limits<double>::infinity();
    for (const auto& cfg : grid) {
        const std::vector<double> smoothed = ewm_smooth(ys_noisy, cfg);
        double mse = 0.0;
        for (std::size_t i = 0; i < smoothed.size(); ++i) {
            const double e = smoothed[i] - ys_clean[i];
            mse += e * e;
        }
        if (mse < best_mse) {
            best_mse = mse;
            best = cfg;
        }
    }
    return best;
}

NormalizedSeries concavity_preprocess(const NormalizedSeries& sample) {
    NormalizedSeries out = sample;
    for (auto& y : out.ys)
        y = 1.0 - y;
    return out;
}

double isodata_threshold(const std::vector<double>& values) {
    if (values.size() < 2)
        throw DegenerateInput("isodata: need at least two values");
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
        throw DegenerateInput("isodata: all values equal");
    double t = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    for (int iter = 0; iter < 500; ++iter) {
        double lo_sum = 0, hi_sum = 0;
        std::size_t lo_n = 0, hi_n = 0;
        for (double v : values) {
            if (v <= t) {
                lo_sum += v;
                ++lo_n;
            } else {
                hi_sum += v;
                ++hi_n;
            }
        }
        // empty high group: threshold above every value, pull it back down
        const double lo_mean = lo_n ? lo_sum / lo_n : t;
        const double hi_mean = hi_n ? hi_sum / hi_n : t;
        const double next = 0.5 * (lo_mean + hi_mean);
        if (std::abs(next - t) < 1e-9)
            return next;
        t = next;
    }
    return t;
}

Detection kneedle(const NormalizedSeries& sample, const KneedleConfig& cfg,
                  const SmoothingConfig& smooth) {
    const std::size_t L = sample.size();
    std::vector<double> ys = ewm_smooth(sample.ys, smooth);
    std::vector<double> xs = sample.xs;
    minmax_rescale(xs);
    minmax_rescale(ys);

    std::vector<double> d(L);
    for (std::size_t i = 0; i < L; ++i) {
        const double diff = ys[i] - xs[i];
        d[i] = cfg.transform == KneedleTransform::projection ? diff : diff * std::sqrt(0.5);
    }

    double mean_dx = 0.0;
    for (std::size_t i = 1; i < L; ++i)
        mean_dx += xs[i] - xs[i - 1];
    mean_dx /= static_cast<double>(L - 1);

    std::vector<std::size_t> maxima;
    for (std::size_t i = 1; i + 1 < L; ++i)
        if (d[i] > d[i - 1] && d[i] >= d[i + 1])
            maxima.push_back(i);

    Detection out;
    out.method = cfg.transform == KneedleTransform::projection ? "kneedle-proj" : "kneedle-rot";
    out.config = {{"zeta", cfg.zeta}};
    std::vector<double> scores;
    for (std::size_t m = 0; m < maxima.size(); ++m) {
        const std::size_t i = maxima[m];
        const double threshold = d[i] - cfg.zeta * mean_dx;
        const std::size_t stop = m + 1 < maxima.size() ? maxima[m + 1] : L;
        for (std::size_t j = i + 1; j < stop; ++j) {
            if (d[j] < threshold) {
                out.indices.push_back(i);
                scores.push_back(d[i]);
                break;
            }
        }
    }
    out.scores = std::move(scores);
    return out;
}

Detection l_method(const NormalizedSeries& sample) {
    const std::size_t L = sample.size();
    if (L < 4)
        throw DegenerateInput("l_method: need at least 4 points");
    const auto& xs = sample.xs;
    const auto& ys = sample.ys;
    std::size_t best = 1;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t c = 1; c + 2 < L; ++c) {
        const Line left = fit_line(xs, ys, 0, c, FitMode::best_fit);
        const Line right = fit_line(xs, ys, c, L - 1, FitMode::best_fit);
        const double score = (static_cast<double>(c + 1) * rmse(xs, ys, 0, c, left) +
                              static_cast<double>(L - c) * rmse(xs, ys, c, L - 1, right)) /
                             static_cast<double>(L);
        if (score < best_score) {
            best_score = score;
            best = c;
        }
    }
    Detection out;
    out.method = "l";
    out.indices = {best};
    out.scores = std::vector<double>{best_score};
    return out;
}

Detection dfdt(const NormalizedSeries& sample, bool refine) {
    if (sample.size() < 4)
        throw DegenerateInput("dfdt: need at least 4 points");
    Detection out;
    out.method = refine ? "dfdt-ref" : "dfdt";
    if (!refine) {
        out.indices = {dfdt_once(sample, 0)};
        return out;
    }
    std::size_t start = 0;
    std::size_t prev = dfdt_once(sample, 0);
    for (int iter = 0; iter < 50; ++iter) {
        start = prev / 2; // drop the head up to half the previous elbow
        if (sample.size() - start < 4)
            break;
        const std::size_t next = dfdt_once(sample, start);
        if (next == prev) {
            out.indices = {next};
            return out;
        }
        prev = next;
    }
    throw NoConvergence("dfdt: refinement did not converge");
}

Detection al_method(const NormalizedSeries& sample, FitMode fit, bool refine) {
    const std::size_t L = sample.size();
    if (L < 4)
        throw DegenerateInput("al_method: need at least 4 points");
    Detection out;
    out.method = refine ? "al-ref" : "al";
    if (!refine) {
        out.indices = {al_once(sample, L - 1, fit)};
        return out;
    }
    std::size_t end = L - 1;
    std::size_t prev = al_once(sample, end, fit);
    for (int iter = 0; iter < 50; ++iter) {
        end = std::min(end, std::max<std::size_t>(2 * prev, 3)); // cut the tail
        if (end + 1 > L)
            end = L - 1;
        const std::size_t next = al_once(sample, end, fit);
        if (next == prev) {
            out.indices = {next};
            return out;
        }
        prev = next;
    }
    throw NoConvergence("al_method: refinement did not converge");
}

Detection s_method(const NormalizedSeries& sample, const SMethodOptions& opts) {
    const std::size_t L = sample.size();
    if (L < 6)
        throw DegenerateInput("s_method: need at least 6 points");
    const std::size_t stride = opts.stride > 0 ? opts.stride : std::max<std::size_t>(1, L / 128);
    const auto& xs = sample.xs;
    const auto& ys = sample.ys;

    std::size_t best_j = 2;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 3 < L; i += stride) {
        const Line head = fit_line(xs, ys, 0, i, opts.fit);
        const double head_term = static_cast<double>(i + 1) * rmse(xs, ys, 0, i, head);
        for (std::size_t j = i + 2; j + 1 < L; j += stride) {
            const Line mid = fit_line(xs, ys, i, j, opts.fit);
            const Line tail = fit_line(xs, ys, j, L - 1, opts.fit);
            const double score = (head_term +
                                  static_cast<double>(j - i + 1) * rmse(xs, ys, i, j, mid) +
                                  static_cast<double>(L - j) * rmse(xs, ys, j, L - 1, tail)) /
                                 static_cast<double>(L);
            if (score < best_score) {
                best_score = score;
                best_j = j; // the middle-tail junction is reported as the knee
            }
        }
    }
    Detection out;
    out.method = "s";
    out.indices = {best_j};
    out.scores = std::vector<double>{best_score};
    return out;
}

} // namespace kb
