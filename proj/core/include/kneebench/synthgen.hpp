#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kneebench/curvature.hpp"
#include "kneebench/rng.hpp"
#include "kneebench/series.hpp"

namespace kb {

enum class Family {
    FT1, // ln(x)
    FT2, // x^m, odd m
    FT3, // x^(1/m), odd m
    FT4, // logistic
    FT5, // translated softplus
    FT6, // 1 - e^-x
    FT7, // rational-exponential product
    FT8, // piecewise linear
    FT9, // normal CDF (mu=13, sigma=5)
    FT10, // sum of K logistics
    FT11, // translated tilted sine
    FT12, // concatenation of single-knee curves
};

const char* family_name(Family f);
Family family_from_name(const std::string& name);

struct FamilySpec {
    Family family = Family::FT4;
    std::map<std::string, double> params;
    // FT10 per-term constants (height, steepness, center)
    std::vector<double> c1, c2, c3;
    // FT12 constituent single-knee specs
    std::vector<FamilySpec> parts;
    double x_lb = 0.0;
    double x_ub = 1.0;
    bool flipped = false;
    int knees = 1;
};

struct Sample {
    std::string id;
    FamilySpec spec;
    std::vector<double> xs;       // noisy normalized abscissae (== clean xs)
    std::vector<double> ys_noisy; // noisy normalized ordinates
    std::vector<double> ys_clean; // clean normalized ordinates
    std::vector<std::size_t> knee_indices;
    std::size_t L_prime = 0;
    std::uint64_t seed = 0;

    std::size_t size() const { return xs.size(); }
    NormalizedSeries clean_series() const;
    NormalizedSeries noisy_series() const;
};

enum class Split { train, sknee, mknee, ng };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct Dataset {
    std::vector<Sample> samples;
    Split split = Split::train;
    std::string generator_version;
    std::size_t L = 0;
};

inline constexpr const char* kGeneratorVersion = "kneebench-gen-1";

// Labeling constants: curvature window, local-minimum separation, boundary margin.
inline constexpr double kKneeCurvatureMax = -3.0;
inline constexpr double kKneeCurvatureMin = -340.0;
inline constexpr std::size_t kKneeSeparation = 20;
inline constexpr std::size_t kBoundaryMargin = 10;

double eval_family(const FamilySpec& spec, double x);

FamilySpec sample_spec(Family family, int knees, Rng& rng);

FamilySpec compose_ft12(const std::vector<FamilySpec>& parts, Rng& rng);

NormalizedSeries gen_clean(const FamilySpec& spec, std::size_t L);

std::vector<double> inject_noise(const std::vector<double>& ys_clean, std::size_t L_prime,
                                 std::uint64_t seed);

std::vector<std::size_t> label_knees(const NormalizedSeries& clean, const FamilySpec& spec);

// One fully validated sample (clean curve, labels, noise); rejection-samples the
// spec until labeling succeeds.
Sample gen_sample(Family family, int knees, std::size_t L, std::uint64_t seed,
                  const std::string& id);

Dataset gen_dataset(Split split, std::size_t n, std::size_t L, std::uint64_t seed);
Dataset gen_dataset(Split split, std::size_t n, std::size_t L, std::uint64_t seed, int threads);

void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

} // namespace kb
