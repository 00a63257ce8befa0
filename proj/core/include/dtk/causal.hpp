#pragma once

#include "dtk/records.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dtk::causal {

// Additive-noise asymmetry test: fit y = f(x) + e in each direction with a
// cubic least-squares polynomial, then test residuals against the regressor
// with a permuted distance-correlation test. A direction passes when
// independence cannot be rejected (p >= cl); the causal arrow points the way
// that passes while the reverse fails.

struct CausalConfig {
    double cl = 0.001;
    int n_permutations = 2000;
    int min_sample = 30;
    std::uint64_t seed = 0;
};

enum class Direction { XtoY, YtoX };
enum class Verdict { ForwardCausal, BackwardCausal, Inconclusive };

const char* to_string(Direction direction);
const char* to_string(Verdict verdict);

struct IndependenceResult {
    double statistic = 0;  // distance correlation of residuals vs regressor
    double p_value = 1;
    bool pass = true;
};

struct DirectionResult {
    Direction direction = Direction::XtoY;
    std::vector<double> coefficients;  // intercept..cubic on the standardized regressor
    double coefficient = 0;            // the linear term
    std::vector<double> residuals;
    IndependenceResult independence;
    bool pass() const { return independence.pass; }
};

// Exact distance correlation in O(n log n); value in [0,1]. Returns 0 when
// either argument is constant.
double distance_correlation(std::span<const double> x, std::span<const double> y);

// Permutation p-value: (1 + #{permuted stat >= observed}) / (1 + permutations).
IndependenceResult independence_test(std::span<const double> residuals,
                                     std::span<const double> regressor,
                                     const CausalConfig& config = {});

DirectionResult fit_direction(std::span<const double> x, std::span<const double> y,
                              Direction direction, const CausalConfig& config = {});

Verdict asymmetry_verdict(const DirectionResult& forward, const DirectionResult& backward);

struct GoldenSet {
    std::vector<std::string> ids;  // sorted
    int decile_min = 7;
    std::string rule;  // human-readable criteria snapshot
};

// Customers with ensemble bucket >= decile_min and at least one reported BCE
// dated on their last purchase day before as_of. Empty result is allowed.
GoldenSet build_golden_set(std::span<const std::string> customer_ids,
                           std::span<const int> ensemble_buckets,
                           const std::vector<BceEvent>& bce_events,
                           const std::vector<Transaction>& transactions, Date as_of,
                           int decile_min = 7);

} // namespace dtk::causal
