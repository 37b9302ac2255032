// Microbenchmarks for the hot paths: curvature, convolution forward/backward,
// the classical detectors, and a full network forward pass.

#include <benchmark/benchmark.h>

#include "kneebench/curvature.hpp"
#include "kneebench/detectors.hpp"
#include "kneebench/posteval.hpp"
#include "kneebench/synthgen.hpp"
#include "kneebench/unetconv.hpp"

namespace {

kb::Sample make_sample(std::size_t L) {
    return kb::gen_sample(kb::Family::FT4, 1, L, 17, "bench");
}

void bm_curvature(benchmark::State& state) {
    const auto s = make_sample(static_cast<std::size_t>(state.range(0))).clean_series();
    for (auto _ : state)
        benchmark::DoNotOptimize(kb::discrete_curvature(s));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_curvature)->Arg(512)->Arg(4096);

void bm_ewm_smooth(benchmark::State& state) {
    const auto s = make_sample(static_cast<std::size_t>(state.range(0)));
    kb::SmoothingConfig cfg;
    cfg.mode = kb::SmoothMode::span;
    cfg.value = 20.0;
    for (auto _ : state)
        benchmark::DoNotOptimize(kb::ewm_smooth(s.ys_noisy, cfg));
}
BENCHMARK(bm_ewm_smooth)->Arg(512)->Arg(4096);

void bm_smoothing_selection(benchmark::State& state) {
    const auto s = make_sample(512);
    const auto grid = kb::smoothing_grid();
    for (auto _ : state)
        benchmark::DoNotOptimize(kb::select_smooth_config(s.ys_noisy, s.ys_clean, grid));
}
BENCHMARK(bm_smoothing_selection);

void bm_detector(benchmark::State& state, const std::string& method) {
    const auto s = make_sample(512);
    for (auto _ : state)
        benchmark::DoNotOptimize(kb::classical_detect(method, s));
}
BENCHMARK_CAPTURE(bm_detector, l, "l");
BENCHMARK_CAPTURE(bm_detector, dfdt, "dfdt");
BENCHMARK_CAPTURE(bm_detector, al, "al");
BENCHMARK_CAPTURE(bm_detector, s, "s");
BENCHMARK_CAPTURE(bm_detector, kneedle, "kneedle-proj");

void bm_conv1d_forward(benchmark::State& state) {
    kb::ag::Graph g;
    auto x = kb::ag::make_tensor({1, 32, 256});
    auto w = kb::ag::make_tensor({32, 32, 11});
    auto b = kb::ag::make_tensor({32});
    for (auto _ : state) {
        kb::ag::Graph local;
        benchmark::DoNotOptimize(local.conv1d(x, w, b));
    }
}
BENCHMARK(bm_conv1d_forward);

void bm_unet_forward(benchmark::State& state) {
    kb::ModelConfig mc;
    mc.length = 256;
    mc.width_scale = 0.25;
    auto model = kb::build(mc, 1);
    const auto s = make_sample(256);
    for (auto _ : state)
        benchmark::DoNotOptimize(kb::predict(model, s.xs, s.ys_noisy));
}
BENCHMARK(bm_unet_forward);

void bm_gen_sample(benchmark::State& state) {
    std::uint64_t seed = 1;
    for (auto _ : state)
        benchmark::DoNotOptimize(kb::gen_sample(kb::Family::FT4, 1, 512, seed++, "b"));
}
BENCHMARK(bm_gen_sample);

} // namespace

BENCHMARK_MAIN();
