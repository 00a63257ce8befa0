#include "dtk/causal.hpp"
#include "dtk/rng.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

std::pair<std::vector<double>, std::vector<double>> noisy_pair(std::size_t n, std::uint64_t seed) {
    auto rng = dtk::make_rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = unif(rng);
        y[i] = x[i] * x[i] * x[i] + noise(rng);
    }
    return {std::move(x), std::move(y)};
}

void BM_DistanceCorrelation(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto [x, y] = noisy_pair(n, 17);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dtk::causal::distance_correlation(x, y));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}

void BM_IndependenceTest(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto [x, y] = noisy_pair(n, 17);
    dtk::causal::CausalConfig config;
    config.n_permutations = 200;
    config.seed = 5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(dtk::causal::independence_test(y, x, config));
    }
}

void BM_FitDirection(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto [x, y] = noisy_pair(n, 17);
    dtk::causal::CausalConfig config;
    config.n_permutations = 200;
    config.seed = 5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            dtk::causal::fit_direction(x, y, dtk::causal::Direction::XtoY, config));
    }
}

} // namespace

BENCHMARK(BM_DistanceCorrelation)->Arg(500)->Arg(2000)->Arg(8000);
BENCHMARK(BM_IndependenceTest)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitDirection)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
