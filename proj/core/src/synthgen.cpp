#include "kneebench/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kneebench/parallel.hpp"

namespace kb {

namespace {

constexpr int kRejectionCap = 1000;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus_neg(double x) {
    // -ln(1 + e^-x), overflow-safe on both tails
    return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return r;
}

// FT11 sine-sum weight for term i of a K-knee sample
double ft11_weight(int K, int i) {
    return binom(2 * K, K - i) / (i * std::pow(2.0, 2 * K - 1));
}

double ft11_weight_sum(int K) {
    double s = 0.0;
    for (int i = 1; i <= K; ++i)
        s += ft11_weight(K, i);
    return s;
}

double param(const FamilySpec& spec, const char* name) {
    auto it = spec.params.find(name);
    if (it == spec.params.end())
        throw DomainError(std::string("missing family parameter: ") + name);
    return it->second;
}

// Part of an FT12 composite, normalized to its own unit box.
double part_unit_value(const FamilySpec& part, double t) {
    const double x = part.x_lb + t * (part.x_ub - part.x_lb);
    const double y = eval_family(part, x);
    const double y_lo = eval_family(part, part.x_lb);
    const double y_hi = eval_family(part, part.x_ub);
    if (y_hi == y_lo)
        throw DegenerateSeries("ft12 part: flat segment");
    return (y - y_lo) / (y_hi - y_lo);
}

} // namespace

const char* family_name(Family f) {
    switch (f) {
    case Family::FT1: return "FT1";
    case Family::FT2: return "FT2";
    case Family::FT3: return "FT3";
    case Family::FT4: return "FT4";
    case Family::FT5: return "FT5";
    case Family::FT6: return "FT6";
    case Family::FT7: return "FT7";
    case Family::FT8: return "FT8";
    case Family::FT9: return "FT9";
    case Family::FT10: return "FT10";
    case Family::FT11: return "FT11";
    case Family::FT12: return "FT12";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(Family::FT12); ++i) {
        Family f = static_cast<Family>(i);
        if (name == family_name(f))
            return f;
    }
    throw FormatError("unknown family: " + name);
}

const char* split_name(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::sknee: return "sknee";
    case Split::mknee: return "mknee";
    case Split::ng: return "ng";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "sknee") return Split::sknee;
    if (name == "mknee") return Split::mknee;
    if (name == "ng") return Split::ng;
    throw FormatError("unknown split: " + name);
}

NormalizedSeries Sample::clean_series() const {
    return NormalizedSeries{xs, ys_clean, NormalizationParams{}};
}

NormalizedSeries Sample::noisy_series() const {
    return NormalizedSeries{xs, ys_noisy, NormalizationParams{}};
}

double eval_family(const FamilySpec& spec, double x) {
    switch (spec.family) {
    case Family::FT1:
        if (x <= 0.0)
            throw DomainError("FT1: x must be positive");
        return std::log(x);
    case Family::FT2: {
        const double m = param(spec, "m"); // odd, so (-1)^(m+1) = 1
        return std::pow(x, m);
    }
    case Family::FT3: {
        const double m = param(spec, "m");
        if (x < 0.0)
            throw DomainError("FT3: x must be non-negative");
        return std::pow(x, 1.0 / m);
    }
    case Family::FT4:
        return sigmoid(x);
    case Family::FT5:
        return softplus_neg(x);
    case Family::FT6:
        return 1.0 - std::exp(-x);
    case Family::FT7: {
        if (x < 0.0)
            throw DomainError("FT7: x must be non-negative");
        const double p = param(spec, "p"), q = param(spec, "q"), r = param(spec, "r");
        const double s = param(spec, "s"), m = param(spec, "m");
        const double u = m * x / s;
        return std::pow(u, p) - std::pow(u, q) * std::exp(-std::pow(x / s, r));
    }
    case Family::FT8: {
        const double m1 = param(spec, "m1"), m2 = param(spec, "m2"), xk = param(spec, "xk");
        const double c2 = (m1 - m2) * xk; // continuity at the breakpoint
        return x <= xk ? m1 * x : m2 * x + c2;
    }
    case Family::FT9:
        return normal_cdf((x - 13.0) / 5.0);
    case Family::FT10: {
        double y = 0.0;
        for (std::size_t i = 0; i < spec.c1.size(); ++i)
            y += spec.c1[i] * sigmoid(spec.c2[i] * (x - spec.c3[i]));
        return y;
    }
    case Family::FT11: {
        if (x <= 0.0)
            throw DomainError("FT11: x must be positive");
        const double m = param(spec, "m"), t = param(spec, "t"), q = param(spec, "q");
        const int K = spec.knees;
        double s = 0.0;
        for (int i = 1; i <= K; ++i)
            s += ft11_weight(K, i) * std::sin(i * x);
        return s / m + (x + t) * q * std::log(x);
    }
    case Family::FT12: {
        // part k covers [k, k+1] in composite coordinates, stacked by unit offsets
        const int K = static_cast<int>(spec.parts.size());
        if (x < 0.0 || x > K)
            throw DomainError("FT12: x outside composite domain");
        int k = std::min(static_cast<int>(std::floor(x)), K - 1);
        return k + part_unit_value(spec.parts[k], x - k);
    }
    }
    throw DomainError("eval_family: unknown family");
}

namespace {

bool non_decreasing(const std::vector<double>& ys);

struct Ft7Combo {
    double p, q, r, s, m;
};

// Brute-force search over the FT7 parameter grid: keep the combos that yield a
// monotone single-knee curve on the canonical [0, 2s] interval.
const std::vector<Ft7Combo>& ft7_valid_combos() {
    static const std::vector<Ft7Combo> combos = [] {
        std::vector<Ft7Combo> out;
        for (int p = 1; p <= 5; ++p)
            for (int q = 1; q <= 5; ++q)
                for (int r = 1; r <= 5; ++r)
                    for (double s : {10.0, 20.0})
                        for (int mi = 1; mi <= 50; ++mi) {
                            FamilySpec spec;
                            spec.family = Family::FT7;
                            spec.knees = 1;
                            spec.params = {{"p", double(p)}, {"q", double(q)}, {"r", double(r)},
                                           {"s", s},         {"m", 0.1 * mi}};
                            spec.x_lb = 0.0;
                            spec.x_ub = 2.0 * s;
                            try {
                                NormalizedSeries clean = gen_clean(spec, 128);
                                if (!non_decreasing(clean.ys))
                                    continue;
                                label_knees(clean, spec);
                                out.push_back({double(p), double(q), double(r), s, 0.1 * mi});
                            } catch (const Error&) {
                            }
                        }
        return out;
    }();
    return combos;
}

FamilySpec draw_raw(Family family, int knees, Rng& rng) {
    FamilySpec spec;
    spec.family = family;
    spec.knees = knees;
    switch (family) {
    case Family::FT1:
        // ln(x) needs x_lb near zero for a sharp enough knee after normalization
        spec.x_lb = rng.uniform(0.0005, 0.012);
        spec.x_ub = rng.uniform(5.0, 50.0);
        spec.flipped = rng.coin();
        break;
    case Family::FT2: {
        static const double ms[] = {3, 5, 9, 11};
        spec.params["m"] = ms[rng.uniform_int(0, 3)];
        spec.x_lb = rng.uniform(-2.0, -1.0);
        spec.x_ub = rng.uniform(0.05, 0.5);
        spec.flipped = rng.coin();
        break;
    }
    case Family::FT3: {
        static const double ms[] = {3, 5, 7, 9, 11, 13, 15, 17};
        spec.params["m"] = ms[rng.uniform_int(0, 7)];
        spec.x_lb = 0.0;
        spec.x_ub = rng.uniform(1.0, 20.0);
        spec.flipped = rng.coin();
        break;
    }
    case Family::FT4:
        spec.x_lb = rng.uniform(-30.0, -2.0);
        spec.x_ub = rng.uniform(2.0, 20.0);
        spec.flipped = rng.coin();
        break;
    case Family::FT5:
        spec.x_lb = rng.uniform(-20.0, -2.0);
        spec.x_ub = rng.uniform(2.0, 20.0);
        spec.flipped = rng.coin();
        break;
    case Family::FT6:
        spec.x_lb = rng.uniform(0.0, 0.5);
        spec.x_ub = rng.uniform(2.0, 20.0);
        spec.flipped = rng.coin();
        break;
    case Family::FT7: {
        const auto& combos = ft7_valid_combos();
        if (combos.empty())
            throw RejectionExhausted("FT7: brute-force search found no valid parameter sets");
        const auto& c = combos[rng.uniform_int(0, static_cast<std::int64_t>(combos.size()) - 1)];
        spec.params["p"] = c.p;
        spec.params["q"] = c.q;
        spec.params["r"] = c.r;
        spec.params["s"] = c.s;
        spec.params["m"] = c.m;
        spec.x_lb = 0.0;
        spec.x_ub = rng.uniform(c.s, 3.0 * c.s);
        break;
    }
    case Family::FT8: {
        const double m1 = rng.uniform(1.0, 10.0);
        spec.params["m1"] = m1;
        spec.params["m2"] = m1 * rng.uniform(0.0, 0.6); // m1 > m2 >= 0
        spec.params["xk"] = rng.uniform(0.1, 0.85);
        spec.x_lb = 0.0;
        spec.x_ub = 1.0;
        break;
    }
    case Family::FT9:
        spec.x_lb = rng.uniform(-7.0, 3.0);
        spec.x_ub = rng.uniform(23.0, 33.0);
        spec.flipped = rng.coin();
        break;
    case Family::FT10: {
        const double width = 10.0 * knees;
        spec.x_lb = 0.0;
        spec.x_ub = width;
        const double margin = 0.08 * width;
        const double min_gap = 0.12 * width;
        for (int attempt = 0;; ++attempt) {
            std::vector<double> centers(knees);
            for (auto& c : centers)
                c = rng.uniform(margin, width - margin);
            std::sort(centers.begin(), centers.end());
            bool ok = true;
            for (int i = 1; i < knees; ++i)
                if (centers[i] - centers[i - 1] < min_gap)
                    ok = false;
            if (ok) {
                spec.c3 = centers;
                break;
            }
            if (attempt >= kRejectionCap)
                throw RejectionExhausted("FT10: could not place step centers");
        }
        for (int i = 0; i < knees; ++i) {
            spec.c1.push_back(rng.uniform(0.5, 2.0));
            spec.c2.push_back(rng.uniform(5.0, 50.0));
        }
        break;
    }
    case Family::FT11: {
        spec.params["t"] = rng.uniform(0.5, 2.0);
        spec.params["q"] = rng.uniform(0.05, 0.3);
        spec.params["m"] = ft11_weight_sum(knees);
        // sawtooth shoulders sit near x = 1.1 + 2*pi*k; start past the first one
        // so every knee stays clear of the boundary margin
        spec.x_lb = rng.uniform(2.0, 4.0);
        spec.x_ub = spec.x_lb + 2.0 * M_PI * knees + rng.uniform(0.3, 1.5);
        break;
    }
    case Family::FT12: {
        static const Family singles[] = {Family::FT1, Family::FT2, Family::FT3, Family::FT4,
                                         Family::FT5, Family::FT6, Family::FT7, Family::FT8};
        std::vector<FamilySpec> parts;
        for (int k = 0; k < knees; ++k) {
            FamilySpec part = draw_raw(singles[rng.uniform_int(0, 7)], 1, rng);
            part.flipped = false; // composite joins the forward orientation only
            parts.push_back(std::move(part));
        }
        return compose_ft12(parts, rng);
    }
    }
    return spec;
}

bool non_decreasing(const std::vector<double>& ys) {
    for (std::size_t i = 1; i < ys.size(); ++i)
        if (ys[i] < ys[i - 1])
            return false;
    return true;
}

// Junction slope rule: the slope formed by the last two points of the existing
// curve must not exceed the first-two-point slope of the appended curve.
bool junctions_valid(const std::vector<FamilySpec>& parts) {
    constexpr double delta = 1.0 / 128.0;
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        const double end_slope =
            (part_unit_value(parts[k], 1.0) - part_unit_value(parts[k], 1.0 - delta)) / delta;
        const double start_slope = (part_unit_value(parts[k + 1], delta) - 0.0) / delta;
        if (end_slope > start_slope)
            return false;
    }
    return true;
}

} // namespace

FamilySpec sample_spec(Family family, int knees, Rng& rng) {
    const bool multi = family == Family::FT10 || family == Family::FT11 || family == Family::FT12;
    if ((multi && (knees < 2 || knees > 5)) || (!multi && knees != 1))
        throw DegenerateInput("sample_spec: knee count invalid for family");
    for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
        try {
            FamilySpec spec = draw_raw(family, knees, rng);
            NormalizedSeries clean = gen_clean(spec, 512);
            if (!non_decreasing(clean.ys))
                continue;
            label_knees(clean, spec);
            return spec;
        } catch (const Error&) {
        }
    }
    throw RejectionExhausted(std::string("sample_spec: no valid draw for ") + family_name(family));
}

FamilySpec compose_ft12(const std::vector<FamilySpec>& parts, Rng& rng) {
    if (parts.size() < 2 || parts.size() > 5)
        throw CompositionFailed("FT12: need 2..5 parts");
    std::vector<FamilySpec> ordered = parts;
    for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
        if (junctions_valid(ordered)) {
            FamilySpec spec;
            spec.family = Family::FT12;
            spec.knees = static_cast<int>(ordered.size());
            spec.parts = ordered;
            spec.x_lb = 0.0;
            spec.x_ub = static_cast<double>(ordered.size());
            return spec;
        }
        // Fisher-Yates reshuffle and retry
        for (std::size_t i = ordered.size() - 1; i > 0; --i)
            std::swap(ordered[i], ordered[rng.uniform_int(0, static_cast<std::int64_t>(i))]);
    }
    throw CompositionFailed("FT12: no part ordering satisfies the junction slope rule");
}

NormalizedSeries gen_clean(const FamilySpec& spec, std::size_t L) {
    if (L < 32)
        throw DegenerateSeries("gen_clean: L must be >= 32");
    Series raw;
    raw.xs.resize(L);
    raw.ys.resize(L);
    for (std::size_t j = 0; j < L; ++j) {
        const double x = spec.x_lb + static_cast<double>(j) / (L - 1) * (spec.x_ub - spec.x_lb);
        raw.xs[j] = x;
        raw.ys[j] = eval_family(spec, x);
    }
    NormalizedSeries n = normalize(raw);
    if (spec.flipped)
        n = flip_antidiagonal(n);
    return n;
}

std::vector<double> inject_noise(const std::vector<double>& ys_clean, std::size_t L_prime,
                                 std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> u(L_prime);
    for (auto& v : u)
        v = rng.uniform();
    std::sort(u.begin(), u.end());
    std::vector<double> out(ys_clean.size());
    for (std::size_t j = 0; j < ys_clean.size(); ++j) {
        const auto count = std::upper_bound(u.begin(), u.end(), ys_clean[j]) - u.begin();
        out[j] = static_cast<double>(count) / static_cast<double>(L_prime);
    }
    return out;
}

std::vector<std::size_t> label_knees(const NormalizedSeries& clean, const FamilySpec& spec) {
    const CurvatureProfile profile = discrete_curvature(clean);
    const std::size_t L = clean.size();
    if (L < 2 * kBoundaryMargin + 2)
        throw LabelingFailed("label_knees: series too short");
    const std::size_t lo = std::max(profile.first, kBoundaryMargin);
    const std::size_t hi = std::min(profile.last, L - kBoundaryMargin - 1);

    if (spec.knees == 1) {
        const std::size_t k = curvature_argmin(profile);
        if (k < lo || k > hi)
            throw LabelingFailed("label_knees: knee within boundary margin");
        const double v = profile.values[k];
        if (v > kKneeCurvatureMax || v < kKneeCurvatureMin)
            throw LabelingFailed("label_knees: knee curvature outside accepted range");
        return {k};
    }

    // Multi-knee: qualifying local minima, strictest first, separated by >= 20.
    struct Candidate {
        std::size_t idx;
        double value;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = lo; i <= hi; ++i) {
        if (profile.values[i] < profile.values[i - 1] && profile.values[i] <= profile.values[i + 1] &&
            profile.values[i] <= kKneeCurvatureMax && profile.values[i] >= kKneeCurvatureMin)
            cands.push_back({i, profile.values[i]});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.value != b.value ? a.value < b.value : a.idx < b.idx;
    });
    std::vector<std::size_t> picked;
    for (const auto& c : cands) {
        bool clear = true;
        for (std::size_t p : picked)
            if (std::max(p, c.idx) - std::min(p, c.idx) < kKneeSeparation)
                clear = false;
        if (clear)
            picked.push_back(c.idx);
    }
    if (picked.size() != static_cast<std::size_t>(spec.knees))
        throw LabelingFailed("label_knees: found " + std::to_string(picked.size()) +
                             " qualifying minima, expected " + std::to_string(spec.knees));
    std::sort(picked.begin(), picked.end());
    return picked;
}

Sample gen_sample(Family family, int knees, std::size_t L, std::uint64_t seed,
                  const std::string& id) {
    Rng rng(seed);
    for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
        FamilySpec spec;
        NormalizedSeries clean;
        std::vector<std::size_t> labels;
        try {
            spec = draw_raw(family, knees, rng);
            clean = gen_clean(spec, L);
            if (!non_decreasing(clean.ys))
                continue;
            labels = label_knees(clean, spec);
        } catch (const Error&) {
            continue;
        }
        static const std::size_t lprimes[] = {1000, 2000, 5000, 10000};
        const std::size_t L_prime = lprimes[rng.uniform_int(0, 3)];
        const std::uint64_t noise_seed = rng.next_u64();

        Sample s;
        s.id = id;
        s.spec = spec;
        s.xs = clean.xs;
        s.ys_clean = clean.ys;
        s.ys_noisy = inject_noise(clean.ys, L_prime, noise_seed);
        s.knee_indices = labels;
        s.L_prime = L_prime;
        s.seed = seed;
        return s;
    }
    throw RejectionExhausted(std::string("gen_sample: no valid draw for ") + family_name(family));
}

namespace {

struct Plan {
    Family family;
    int knees;
};

std::vector<Plan> dataset_plan(Split split, std::size_t n, std::uint64_t seed) {
    static const Family singles[] = {Family::FT1, Family::FT2, Family::FT3, Family::FT4,
                                     Family::FT5, Family::FT6, Family::FT7, Family::FT8};
    static const Family multis[] = {Family::FT10, Family::FT11, Family::FT12};
    std::vector<Plan> plan;
    plan.reserve(n);
    auto multi_knees = [&](std::size_t idx) {
        return 2 + static_cast<int>(Rng::derive(seed, 0x6b6e6565 + idx) % 4);
    };
    switch (split) {
    case Split::train: {
        const std::size_t n_single = (n + 1) / 2;
        const std::size_t n_multi = n - n_single;
        // equal integer split, remainder to the lowest-numbered families
        for (std::size_t i = 0; i < n_single; ++i)
            plan.push_back({singles[i % 8], 1});
        for (std::size_t i = 0; i < n_multi; ++i)
            plan.push_back({multis[i % 3], 0});
        for (std::size_t i = 0; i < plan.size(); ++i)
            if (plan[i].knees == 0)
                plan[i].knees = multi_knees(i);
        break;
    }
    case Split::sknee:
        for (std::size_t i = 0; i < n; ++i)
            plan.push_back({singles[i % 8], 1});
        break;
    case Split::mknee:
        for (std::size_t i = 0; i < n; ++i)
            plan.push_back({multis[i % 3], multi_knees(i)});
        break;
    case Split::ng:
        for (std::size_t i = 0; i < n; ++i)
            plan.push_back({Family::FT9, 1});
        break;
    }
    return plan;
}

} // namespace

Dataset gen_dataset(Split split, std::size_t n, std::size_t L, std::uint64_t seed) {
    return gen_dataset(split, n, L, seed, 0);
}

Dataset gen_dataset(Split split, std::size_t n, std::size_t L, std::uint64_t seed, int threads) {
    if (n < 1)
        throw DegenerateInput("gen_dataset: n must be >= 1");
    const auto plan = dataset_plan(split, n, seed);
    Dataset d;
    d.split = split;
    d.generator_version = kGeneratorVersion;
    d.L = L;
    d.samples.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        std::ostringstream id;
        id << split_name(split) << "-" << i;
        const std::uint64_t sample_seed = Rng::derive(seed, i);
        d.samples[i] = gen_sample(plan[i].family, plan[i].knees, L, sample_seed, id.str());
    });
    return d;
}

} // namespace kb
