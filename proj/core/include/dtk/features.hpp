#pragma once

#include "dtk/panel.hpp"
#include "dtk/records.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dtk {

// Model matrix over the customer history strictly before the as-of date.
// Masked entries hold a documented sentinel value and carry a mask bit the
// trees route by; no NaN/inf ever enters the matrix.

enum class FeatureFamily {
    ratio_recent_to_year,
    gap_stat,
    below_std_flag,
    count,
    bce_recency,
    bce_rate,
    categorical,
};

enum class GapStat { mean, median, std_dev };
enum class CountSource { transactions, items, purchase_days, bce_events };

struct FeatureSpec {
    std::string name;
    FeatureFamily family = FeatureFamily::count;
    Metric metric = Metric::GMV;                      // ratio_recent_to_year, below_std_flag
    int k_days = 365;                                 // lookback window where applicable
    int w_months = 1;                                 // below_std_flag recent window
    double q = 0.75;                                  // below_std_flag std multiplier
    GapStat stat = GapStat::mean;                     // gap_stat
    CountSource source = CountSource::transactions;  // count
};

// The ~40-feature default catalog the rough model starts from: recent-window
// ratios, purchase-gap statistics, below-std flags, activity counts, BCE
// recency/rates, and the country code.
std::vector<FeatureSpec> default_catalog();

struct FeatureMatrix {
    std::vector<std::string> customer_ids;          // n rows, sorted
    std::vector<std::string> feature_names;         // m columns, catalog order
    std::vector<std::vector<double>> columns;       // m x n
    std::vector<std::vector<std::uint8_t>> masks;   // m x n, 1 = missing

    size_t rows() const { return customer_ids.size(); }
    size_t cols() const { return feature_names.size(); }
    // Column index by name; throws InputError when absent.
    size_t column_index(const std::string& name) const;
    FeatureMatrix select_columns(const std::vector<std::string>& names) const;
    FeatureMatrix select_rows(const std::vector<size_t>& row_indices) const;
};

struct MaskedValue {
    double value = 0;
    bool masked = false;
};

// (metric sum over last k_days) / (metric sum over last 365 days),
// both windows ending just before as_of. Zero denominator -> 0, masked.
MaskedValue ratio_recent_to_year(std::span<const Transaction> transactions, Metric metric,
                                 int k_days, Date as_of);

struct GapStatistics {
    double mean = 0;
    double median = 0;
    double std_dev = 0;
    bool masked = false;  // fewer than 2 distinct purchase days
};

// Gaps between successive distinct purchase days, in days.
GapStatistics gap_statistics(std::span<const Date> purchase_days);

// true iff mean of the last w months < mean(first 12-w) - q * sample_std(first 12-w).
bool below_std_flag(std::span<const double> history, int w_months, double q);

struct BceFeatures {
    double days_since_last_defect = 9999;  // sentinel when no BCE ever
    bool recency_masked = true;
    double defect_rate_7d = 0;  // defects excluding late_delivery / transactions
    bool rate_7d_masked = false;
    double defect_rate_1y = 0;
    bool rate_1y_masked = false;
    double bce_count_1y = 0;
};

BceFeatures bce_features(std::span<const BceEvent> events,
                         std::span<const Transaction> transactions, Date as_of);

// One row per scoreable customer (some purchase in months 0..11); columns in
// catalog order. transactions and bce_events must be sorted by
// (customer_id, date) as load_dataset returns them.
FeatureMatrix build_feature_matrix(const std::vector<Transaction>& transactions,
                                   const std::vector<BceEvent>& bce_events,
                                   const std::vector<CustomerProfile>& profiles,
                                   const MonthlyPanel& panel,
                                   const std::vector<FeatureSpec>& catalog, Date as_of);

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& matrix);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

} // namespace dtk
