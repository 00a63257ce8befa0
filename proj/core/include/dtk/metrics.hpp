#pragma once

#include <span>
#include <string>
#include <vector>

namespace dtk::metrics {

// Scores with binary labels. Threshold metrics predict positive iff
// score >= t and scan the observed scores plus the degenerate all-negative
// threshold (+inf); ties between thresholds resolve to the larger t.

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // 0/1

    size_t size() const { return scores.size(); }
    void validate(bool require_both_classes) const;  // throws InputError
};

// P(score+ > score-) + 0.5 P(tie), computed by average ranks; identical to
// the trapezoidal area under the ROC curve.
double roc_auc(const ScoredSet& scored);

struct ThresholdMetric {
    double threshold = 0;
    double value = 0;
};

ThresholdMetric max_f_beta(const ScoredSet& scored, double beta = 1.0);
ThresholdMetric max_min_per_class_accuracy(const ScoredSet& scored);

// Mean negative log likelihood with scores clipped to [1e-12, 1-1e-12].
double log_loss(const ScoredSet& scored);

// Rank deciles, bucket n_buckets = highest scores. Equal scores order by
// customer id. Requires at least n_buckets customers.
std::vector<int> decile_bucket(std::span<const double> scores,
                               std::span<const std::string> customer_ids, int n_buckets = 10);

// Elementwise max of the three per-model buckets.
std::vector<int> ensemble_max(std::span<const int> y_gmv, std::span<const int> y_bi,
                              std::span<const int> y_pd);

struct RocPoint {
    double threshold;
    double tpr;
    double fpr;
};

struct PrPoint {
    double threshold;
    double precision;  // 1 when nothing is predicted positive
    double recall;
};

std::vector<RocPoint> roc_points(const ScoredSet& scored);
std::vector<PrPoint> pr_points(const ScoredSet& scored);

} // namespace dtk::metrics
