#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kneebench/series.hpp"

namespace kb {

struct Detection {
    std::vector<std::size_t> indices;
    std::optional<std::vector<double>> scores;
    std::string method;
    std::map<std::string, double> config;
};

enum class SmoothMode { center_of_mass, span, half_life, alpha };

struct SmoothingConfig {
    SmoothMode mode = SmoothMode::alpha;
    double value = 1.0;

    double decay_alpha() const;
};

// Table-2 grid: com 0.2..10.0 step 0.2, span 1.2..10.0 step 0.2,
// half-life 0.2..10.0 step 0.2, alpha 0.1..0.9 step 0.2.
std::vector<SmoothingConfig> smoothing_grid();

enum class KneedleTransform { projection, rotation };

struct KneedleConfig {
    double zeta = 0.01;
    KneedleTransform transform = KneedleTransform::projection;
};

enum class FitMode { best_fit, linear_fit };

std::vector<double> ewm_smooth(const std::vector<double>& ys, const SmoothingConfig& cfg);

SmoothingConfig select_smooth_config(const std::vector<double>& ys_noisy,
                                     const std::vector<double>& ys_clean,
                                     const std::vector<SmoothingConfig>& grid);

// Elbow-oriented view for DFDT/AL: (xt, yt) -> (xt, 1 - yt).
NormalizedSeries concavity_preprocess(const NormalizedSeries& sample);

double isodata_threshold(const std::vector<double>& values);

Detection kneedle(const NormalizedSeries& sample, const KneedleConfig& cfg,
                  const SmoothingConfig& smooth);

Detection l_method(const NormalizedSeries& sample);

Detection dfdt(const NormalizedSeries& sample, bool refine);

Detection al_method(const NormalizedSeries& sample, FitMode fit, bool refine);

struct SMethodOptions {
    FitMode fit = FitMode::linear_fit;
    std::size_t stride = 0; // 0: auto, max(1, L/128)
};

Detection s_method(const NormalizedSeries& sample, const SMethodOptions& opts = {});

} // namespace kb
