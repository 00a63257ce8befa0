#include "dtk/metrics.hpp"
#include "dtk/rng.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

dtk::metrics::ScoredSet scored_set(std::size_t n, std::uint64_t seed) {
    auto rng = dtk::make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    dtk::metrics::ScoredSet scored;
    scored.scores.resize(n);
    scored.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        scored.scores[i] = unif(rng);
        scored.labels[i] = unif(rng) < 0.3 * scored.scores[i] + 0.05 ? 1 : 0;
    }
    return scored;
}

void BM_RocAuc(benchmark::State& state) {
    const auto scored = scored_set(static_cast<std::size_t>(state.range(0)), 23);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dtk::metrics::roc_auc(scored));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MaxF1(benchmark::State& state) {
    const auto scored = scored_set(static_cast<std::size_t>(state.range(0)), 23);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dtk::metrics::max_f_beta(scored, 1.0));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_DecileBucket(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto scored = scored_set(n, 23);
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = "C" + std::to_string(i);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dtk::metrics::decile_bucket(scored.scores, ids));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_RocAuc)->Arg(10000)->Arg(100000);
BENCHMARK(BM_MaxF1)->Arg(10000)->Arg(100000);
BENCHMARK(BM_DecileBucket)->Arg(20000)->Arg(100000);
