#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kneebench/curvature.hpp"
#include "kneebench/synthgen.hpp"

using namespace kb;

namespace {

FamilySpec make_spec(Family f, double lb, double ub,
                     std::map<std::string, double> params = {}) {
    FamilySpec s;
    s.family = f;
    s.params = std::move(params);
    s.x_lb = lb;
    s.x_ub = ub;
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("eval_family fixed points") {
    CHECK(eval_family(make_spec(Family::FT1, 0.5, 2.0), 1.0) == 0.0);
    CHECK(eval_family(make_spec(Family::FT4, -5, 5), 0.0) == 0.5);
    CHECK(eval_family(make_spec(Family::FT9, 0, 26), 13.0) == doctest::Approx(0.5));
    CHECK(eval_family(make_spec(Family::FT2, -2, 0, {{"m", 3.0}}), -2.0) == -8.0);
    CHECK(eval_family(make_spec(Family::FT6, 0, 5), 0.0) == 0.0);
}

TEST_CASE("eval_family domain errors") {
    CHECK_THROWS_AS(eval_family(make_spec(Family::FT1, 0.5, 2.0), 0.0), DomainError);
    CHECK_THROWS_AS(eval_family(make_spec(Family::FT3, 0, 2, {{"m", 3.0}}), -1.0), DomainError);
}

TEST_CASE("sample_spec draws FT2 exponents from the published set") {
    Rng rng(21);
    for (int i = 0; i < 10; ++i) {
        FamilySpec s = sample_spec(Family::FT2, 1, rng);
        const double m = s.params.at("m");
        CHECK((m == 3.0 || m == 5.0 || m == 9.0 || m == 11.0));
    }
}

TEST_CASE("sample_spec FT8 keeps m1 > m2 >= 0") {
    Rng rng(22);
    for (int i = 0; i < 10; ++i) {
        FamilySpec s = sample_spec(Family::FT8, 1, rng);
        CHECK(s.params.at("m1") > s.params.at("m2"));
        CHECK(s.params.at("m2") >= 0.0);
    }
}

TEST_CASE("sample_spec FT10 with 3 knees has 3 logistic terms") {
    Rng rng(23);
    FamilySpec s = sample_spec(Family::FT10, 3, rng);
    CHECK(s.c1.size() == 3);
    CHECK(s.c2.size() == 3);
    CHECK(s.c3.size() == 3);
    CHECK(std::is_sorted(s.c3.begin(), s.c3.end()));
}

TEST_CASE("gen_clean produces a unit-square series of the requested length") {
    Rng rng(24);
    FamilySpec s = sample_spec(Family::FT6, 1, rng);
    NormalizedSeries n = gen_clean(s, 512);
    CHECK(n.size() == 512);
    CHECK(*std::min_element(n.xs.begin(), n.xs.end()) == 0.0);
    CHECK(*std::max_element(n.xs.begin(), n.xs.end()) == 1.0);
    CHECK(*std::min_element(n.ys.begin(), n.ys.end()) == 0.0);
    CHECK(*std::max_element(n.ys.begin(), n.ys.end()) == 1.0);
}

TEST_CASE("gen_clean FT4 interval choice moves the knee") {
    FamilySpec wide = make_spec(Family::FT4, -40, 40);
    FamilySpec narrow = make_spec(Family::FT4, -30, 10);
    const auto k_wide = label_knees(gen_clean(wide, 512), wide);
    const auto k_narrow = label_knees(gen_clean(narrow, 512), narrow);
    CHECK(k_wide.size() == 1);
    CHECK(k_narrow.size() == 1);
    CHECK(k_wide[0] != k_narrow[0]);
}

TEST_CASE("inject_noise pins the endpoints and preserves monotonicity") {
    std::vector<double> clean(64);
    for (int j = 0; j < 64; ++j)
        clean[j] = j / 63.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto noisy = inject_noise(clean, 500, seed);
        CHECK(noisy.front() == 0.0);
        CHECK(noisy.back() == 1.0);
        CHECK(std::is_sorted(noisy.begin(), noisy.end()));
        for (double v : noisy) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("inject_noise concentrates at large L'") {
    std::vector<double> clean(128);
    for (int j = 0; j < 128; ++j)
        clean[j] = j / 127.0;
    int close = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto noisy = inject_noise(clean, 1000000, seed);
        double worst = 0.0;
        for (std::size_t j = 0; j < clean.size(); ++j)
            worst = std::max(worst, std::abs(noisy[j] - clean[j]));
        if (worst < 0.005)
            ++close;
    }
    CHECK(close >= 19);
}

TEST_CASE("noise amplitude scales like 1/sqrt(L')") {
    std::vector<double> clean(256);
    for (int j = 0; j < 256; ++j)
        clean[j] = j / 255.0;
    double dev1 = 0.0, dev4 = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto n1 = inject_noise(clean, 1000, seed);
        auto n4 = inject_noise(clean, 4000, seed + 1000);
        for (std::size_t j = 0; j < clean.size(); ++j) {
            dev1 += std::abs(n1[j] - clean[j]);
            dev4 += std::abs(n4[j] - clean[j]);
        }
    }
    const double ratio = dev4 / dev1;
    CHECK(ratio > 0.4);
    CHECK(ratio < 0.6);
}

TEST_CASE("label_knees finds the FT8 breakpoint") {
    FamilySpec s = make_spec(Family::FT8, 0, 1, {{"m1", 5.0}, {"m2", 0.5}, {"xk", 0.4}});
    NormalizedSeries clean = gen_clean(s, 512);
    auto knees = label_knees(clean, s);
    REQUIRE(knees.size() == 1);
    const std::size_t expect = static_cast<std::size_t>(std::lround(0.4 * 511));
    CHECK(std::abs(static_cast<long>(knees[0]) - static_cast<long>(expect)) <= 2);
}

TEST_CASE("normalization shifts the sigmoid knee leftward") {
    // Fig-1 setup: raw y = 5 * sigmoid(10x - 5) on [0, 1]
    std::vector<double> xs(1000), ys(1000);
    for (int j = 0; j < 1000; ++j) {
        xs[j] = j / 999.0;
        ys[j] = 5.0 / (1.0 + std::exp(-10.0 * xs[j] + 5.0));
    }
    const std::size_t raw_knee = curvature_argmin(discrete_curvature(xs, ys));
    Series raw{xs, ys};
    const std::size_t norm_knee = curvature_argmin(discrete_curvature(normalize(raw)));
    CHECK(norm_knee < raw_knee);
}

TEST_CASE("label_knees FT10 matches the analytic curvature oracle within 2 indices") {
    Rng rng(31);
    FamilySpec s = sample_spec(Family::FT10, 3, rng);
    NormalizedSeries clean = gen_clean(s, 512);
    auto knees = label_knees(clean, s);
    REQUIRE(knees.size() == 3);

    auto f1 = [&](double x) {
        double d = 0.0;
        for (std::size_t i = 0; i < s.c1.size(); ++i) {
            const double e = 1.0 / (1.0 + std::exp(-s.c2[i] * (x - s.c3[i])));
            d += s.c1[i] * s.c2[i] * e * (1.0 - e);
        }
        return d;
    };
    auto f2 = [&](double x) {
        double d = 0.0;
        for (std::size_t i = 0; i < s.c1.size(); ++i) {
            const double e = 1.0 / (1.0 + std::exp(-s.c2[i] * (x - s.c3[i])));
            d += s.c1[i] * s.c2[i] * s.c2[i] * e * (1.0 - e) * (1.0 - 2.0 * e);
        }
        return d;
    };
    // oracle: strictest separated local minima of the Eq-4 curvature on the grid
    std::vector<double> k(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i)
        k[i] = normalized_analytic_curvature(f1, f2, clean.params, clean.xs[i]);
    struct C {
        std::size_t idx;
        double v;
    };
    std::vector<C> mins;
    for (std::size_t i = 1; i + 1 < k.size(); ++i)
        if (k[i] < k[i - 1] && k[i] <= k[i + 1] && k[i] <= -3.0)
            mins.push_back({i, k[i]});
    std::sort(mins.begin(), mins.end(), [](const C& a, const C& b) { return a.v < b.v; });
    std::vector<std::size_t> oracle;
    for (const auto& c : mins) {
        bool clear = true;
        for (auto p : oracle)
            if (std::max(p, c.idx) - std::min(p, c.idx) < 20)
                clear = false;
        if (clear)
            oracle.push_back(c.idx);
    }
    REQUIRE(oracle.size() >= 3);
    oracle.resize(3);
    std::sort(oracle.begin(), oracle.end());
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(static_cast<long>(knees[i]) - static_cast<long>(oracle[i])) <= 2);
}

TEST_CASE("compose_ft12 joins FT8, FT1, FT6 into a 3-knee composite") {
    Rng rng(41);
    std::vector<FamilySpec> parts;
    parts.push_back(sample_spec(Family::FT8, 1, rng));
    {
        FamilySpec p = sample_spec(Family::FT1, 1, rng);
        p.flipped = false;
        parts.push_back(p);
    }
    {
        FamilySpec p = sample_spec(Family::FT6, 1, rng);
        p.flipped = false;
        parts.push_back(p);
    }
    parts[0].flipped = false;
    FamilySpec composite = compose_ft12(parts, rng);
    CHECK(composite.parts.size() == 3);
    CHECK(composite.x_ub == 3.0);

    NormalizedSeries clean = gen_clean(composite, 512);
    auto knees = label_knees(clean, composite);
    REQUIRE(knees.size() == 3);
    // one knee inside each third of the composite
    std::vector<int> seg_count(3, 0);
    for (auto kn : knees)
        seg_count[std::min<std::size_t>(2, kn / 171)]++;
    CHECK(seg_count[0] == 1);
    CHECK(seg_count[1] == 1);
    CHECK(seg_count[2] == 1);

    // junction slope rule restated on the generated grid
    const std::size_t L = clean.size();
    for (int j = 1; j < 3; ++j) {
        const std::size_t at = static_cast<std::size_t>(j * (L - 1) / 3.0);
        const double before =
            (clean.ys[at - 1] - clean.ys[at - 3]) / (clean.xs[at - 1] - clean.xs[at - 3]);
        const double after =
            (clean.ys[at + 3] - clean.ys[at + 1]) / (clean.xs[at + 3] - clean.xs[at + 1]);
        CHECK(before <= after + 0.5);
    }
}

TEST_CASE("compose_ft12 rejects bad part counts") {
    Rng rng(42);
    CHECK_THROWS_AS(compose_ft12({sample_spec(Family::FT8, 1, rng)}, rng), CompositionFailed);
}

TEST_CASE("gen_dataset composition per split") {
    Dataset train = gen_dataset(Split::train, 24, 256, 77);
    CHECK(train.samples.size() == 24);
    int singles = 0, multis = 0;
    for (const auto& s : train.samples) {
        if (s.spec.family == Family::FT10 || s.spec.family == Family::FT11 ||
            s.spec.family == Family::FT12) {
            ++multis;
            CHECK(s.knee_indices.size() >= 2);
            CHECK(s.knee_indices.size() <= 5);
        } else {
            ++singles;
            CHECK(s.knee_indices.size() == 1);
        }
    }
    CHECK(singles == 12);
    CHECK(multis == 12);

    Dataset ng = gen_dataset(Split::ng, 6, 256, 78);
    for (const auto& s : ng.samples)
        CHECK(s.spec.family == Family::FT9);
}

TEST_CASE("generated samples keep labels away from the boundary") {
    Dataset d = gen_dataset(Split::train, 16, 256, 99);
    for (const auto& s : d.samples) {
        CHECK(s.xs == gen_clean(s.spec, 256).xs);
        CHECK(std::is_sorted(s.ys_noisy.begin(), s.ys_noisy.end()));
        const CurvatureProfile p = discrete_curvature(s.clean_series());
        for (auto k : s.knee_indices) {
            CHECK(k >= 10);
            CHECK(k <= 256 - 11);
            CHECK(p.values[k] <= -3.0);
            CHECK(p.values[k] >= -340.0);
        }
    }
}

TEST_CASE("dataset round-trips through the line format") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "kb_test_roundtrip.jsonl").string();
    Dataset d = gen_dataset(Split::sknee, 10, 256, 5);
    write_dataset(d, path);
    Dataset back = read_dataset(path);
    REQUIRE(back.samples.size() == d.samples.size());
    CHECK(back.split == d.split);
    CHECK(back.L == d.L);
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const auto& a = d.samples[i];
        const auto& b = back.samples[i];
        CHECK(a.id == b.id);
        CHECK(a.seed == b.seed);
        CHECK(a.L_prime == b.L_prime);
        CHECK(a.knee_indices == b.knee_indices);
        // bit-identical reals after the 17-significant-digit round trip
        CHECK(a.xs == b.xs);
        CHECK(a.ys_clean == b.ys_clean);
        CHECK(a.ys_noisy == b.ys_noisy);
    }
    fs::remove(path);
}

TEST_CASE("same seed yields byte-identical dataset files") {
    namespace fs = std::filesystem;
    const std::string p1 = (fs::temp_directory_path() / "kb_det_a.jsonl").string();
    const std::string p2 = (fs::temp_directory_path() / "kb_det_b.jsonl").string();
    write_dataset(gen_dataset(Split::mknee, 6, 256, 123, 4), p1);
    write_dataset(gen_dataset(Split::mknee, 6, 256, 123, 2), p2);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("truncated dataset file reports the offending line") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "kb_trunc.jsonl").string();
    write_dataset(gen_dataset(Split::ng, 3, 256, 9), path);
    std::string text = slurp(path);
    std::ofstream(path, std::ios::binary) << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(read_dataset(path), FormatError);
    try {
        read_dataset(path);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
    fs::remove(path);
}
