#include "dtk/gbdt.hpp"
#include "dtk/rng.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

namespace {

dtk::FeatureMatrix synthetic_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    dtk::FeatureMatrix matrix;
    auto rng = dtk::make_rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t r = 0; r < rows; ++r) matrix.customer_ids.push_back("C" + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) {
        matrix.feature_names.push_back("f" + std::to_string(c));
        std::vector<double> column(rows);
        for (double& v : column) v = noise(rng);
        matrix.columns.push_back(std::move(column));
        matrix.masks.emplace_back(rows, 0);
    }
    return matrix;
}

std::vector<int> synthetic_labels(const dtk::FeatureMatrix& matrix, std::uint64_t seed) {
    auto rng = dtk::make_rng(seed);
    std::bernoulli_distribution flip(0.1);
    std::vector<int> labels(matrix.rows());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const double signal = matrix.columns[0][r] + 0.5 * matrix.columns[1][r];
        labels[r] = (signal > 0) != flip(rng) ? 1 : 0;
    }
    return labels;
}

void BM_GbdtTrain(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto matrix = synthetic_matrix(rows, 20, 7);
    const auto labels = synthetic_labels(matrix, 11);
    dtk::gbdt::TrainConfig config;
    config.n_trees = 50;
    config.max_depth = 4;
    config.validation_fraction = 0;
    config.seed = 3;
    for (auto _ : state) {
        auto model = dtk::gbdt::train(matrix, labels, config);
        benchmark::DoNotOptimize(model);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows));
}

void BM_GbdtPredict(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto matrix = synthetic_matrix(rows, 20, 7);
    const auto labels = synthetic_labels(matrix, 11);
    dtk::gbdt::TrainConfig config;
    config.n_trees = 50;
    config.max_depth = 4;
    config.validation_fraction = 0;
    config.seed = 3;
    const auto model = dtk::gbdt::train(matrix, labels, config);
    for (auto _ : state) {
        auto scores = dtk::gbdt::predict_proba(model, matrix);
        benchmark::DoNotOptimize(scores);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows));
}

} // namespace

BENCHMARK(BM_GbdtTrain)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbdtPredict)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);
