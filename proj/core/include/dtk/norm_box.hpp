#pragma once

#include "dtk/panel.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace dtk {

// Downward-trend labeling: a customer trends downward on a metric when the
// target-month value falls strictly below mu - alpha*s, where mu and s are
// the mean and sample standard deviation of the 12 trailing monthly values.

struct NormBoxParams {
    double mu = 0;
    double s = 0;
    double alpha = 1;

    double lower_bound() const { return mu - alpha * s; }
};

struct DownwardLabel {
    std::string customer_id;
    Metric metric = Metric::GMV;
    bool scoreable = true;  // false for all-zero 12-month histories
    bool is_downward = false;
    double lower_bound = 0;  // meaningless when not scoreable
    double target_value = 0;
};

struct LabelSummary {
    std::vector<DownwardLabel> labels;  // one per customer, sorted by id
    double event_rate = 0;              // positives / customers
    size_t positives = 0;
    size_t scoreable = 0;
};

// mu and sample std (divisor 11) of exactly 12 values.
NormBoxParams norm_box_stats(std::span<const double> history, double alpha = 1);

DownwardLabel is_downward(std::span<const double> history, double next_value, double alpha);

struct AlphaPair {
    double fb = 1;
    double ib = 1;
};

LabelSummary label_panel(const MonthlyPanel& panel, Metric metric, double alpha_fb,
                         double alpha_ib, const std::vector<CustomerProfile>& profiles);

// Alpha tuning grid: 0.05, 0.10, ..., 3.00.
inline constexpr double kAlphaGridStep = 0.05;
inline constexpr int kAlphaGridSize = 60;
double alpha_grid_value(int step);  // step in 1..60

// Grid value whose event rate over the segment's customers is closest to
// target_rate; ties resolve to the smaller alpha. Throws InputError when no
// customer in the segment has s > 0 ("degenerate panel").
double tune_alpha(const MonthlyPanel& panel, Metric metric, Segment segment, double target_rate,
                  const std::vector<CustomerProfile>& profiles);

void write_labels(const std::filesystem::path& path, const LabelSummary& summary);
LabelSummary read_labels(const std::filesystem::path& path);

} // namespace dtk
