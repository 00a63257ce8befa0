#include "dtk/metrics.hpp"

#include "dtk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dtk::metrics {

namespace {

// Confusion counts at every candidate threshold, visited in descending
// threshold order starting from +inf (nothing predicted positive).
template <typename Visit>
void scan_thresholds(const ScoredSet& scored, Visit&& visit) {
    std::vector<size_t> order(scored.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scored.scores[a] > scored.scores[b]; });

    long long tp = 0, fp = 0;
    visit(std::numeric_limits<double>::infinity(), tp, fp);
    size_t i = 0;
    while (i < order.size()) {
        const double t = scored.scores[order[i]];
        while (i < order.size() && scored.scores[order[i]] == t) {
            if (scored.labels[order[i]]) ++tp;
            else ++fp;
            ++i;
        }
        visit(t, tp, fp);
    }
}

} // namespace

void ScoredSet::validate(bool require_both_classes) const {
    if (scores.size() != labels.size())
        throw InputError("scored set: scores and labels differ in length");
    long long positives = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i]))
            throw InputError("scored set: non-finite score");
        if (labels[i] != 0 && labels[i] != 1)
            throw InputError("scored set: labels must be 0 or 1");
        positives += labels[i];
    }
    if (require_both_classes &&
        (positives == 0 || positives == static_cast<long long>(scores.size())))
        throw InputError("scored set: both classes required");
}

double roc_auc(const ScoredSet& scored) {
    scored.validate(true);
    const size_t n = scored.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scored.scores[a] < scored.scores[b]; });

    // Average ranks over tied scores, then the Mann-Whitney identity.
    double positive_rank_sum = 0;
    long long n_pos = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scored.scores[order[j]] == scored.scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
        for (size_t k = i; k < j; ++k)
            if (scored.labels[order[k]]) {
                positive_rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const long long n_neg = static_cast<long long>(n) - n_pos;
    return (positive_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2) /
           (static_cast<double>(n_pos) * n_neg);
}

ThresholdMetric max_f_beta(const ScoredSet& scored, double beta) {
    scored.validate(true);
    if (!(beta > 0))
        throw InputError("beta must be > 0");
    const long long total_pos =
        std::accumulate(scored.labels.begin(), scored.labels.end(), 0LL);
    const double b2 = beta * beta;
    ThresholdMetric best{std::numeric_limits<double>::infinity(), -1};
    scan_thresholds(scored, [&](double t, long long tp, long long fp) {
        const long long fn = total_pos - tp;
        const double f =
            tp == 0 ? 0.0 : (1 + b2) * tp / ((1 + b2) * tp + b2 * fn + fp);
        if (f > best.value) best = {t, f};  // descending scan keeps the larger t on ties
    });
    return best;
}

ThresholdMetric max_min_per_class_accuracy(const ScoredSet& scored) {
    scored.validate(true);
    const long long total_pos =
        std::accumulate(scored.labels.begin(), scored.labels.end(), 0LL);
    const long long total_neg = static_cast<long long>(scored.size()) - total_pos;
    ThresholdMetric best{std::numeric_limits<double>::infinity(), -1};
    scan_thresholds(scored, [&](double t, long long tp, long long fp) {
        const double tpr = static_cast<double>(tp) / total_pos;
        const double tnr = static_cast<double>(total_neg - fp) / total_neg;
        const double value = std::min(tpr, tnr);
        if (value > best.value) best = {t, value};
    });
    return best;
}

double log_loss(const ScoredSet& scored) {
    scored.validate(false);
    if (scored.size() == 0)
        throw InputError("log loss of an empty set");
    double total = 0;
    for (size_t i = 0; i < scored.size(); ++i) {
        const double p = std::clamp(scored.scores[i], 1e-12, 1.0 - 1e-12);
        total += scored.labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / scored.size();
}

std::vector<int> decile_bucket(std::span<const double> scores,
                               std::span<const std::string> customer_ids, int n_buckets) {
    const size_t n = scores.size();
    if (customer_ids.size() != n)
        throw InputError("decile_bucket: ids and scores differ in length");
    if (n_buckets < 1)
        throw InputError("decile_bucket: n_buckets must be >= 1");
    if (n < static_cast<size_t>(n_buckets))
        throw InputError("decile_bucket: need at least " + std::to_string(n_buckets) +
                         " customers, got " + std::to_string(n));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return customer_ids[a] < customer_ids[b];
    });
    std::vector<int> buckets(n);
    for (size_t pos = 0; pos < n; ++pos)
        buckets[order[pos]] =
            n_buckets - static_cast<int>(pos * static_cast<size_t>(n_buckets) / n);
    return buckets;
}

std::vector<int> ensemble_max(std::span<const int> y_gmv, std::span<const int> y_bi,
                              std::span<const int> y_pd) {
    if (y_gmv.size() != y_bi.size() || y_gmv.size() != y_pd.size())
        throw InputError("ensemble_max: bucket vectors differ in length");
    std::vector<int> out(y_gmv.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::max({y_gmv[i], y_bi[i], y_pd[i]});
    return out;
}

std::vector<RocPoint> roc_points(const ScoredSet& scored) {
    scored.validate(true);
    const long long total_pos =
        std::accumulate(scored.labels.begin(), scored.labels.end(), 0LL);
    const long long total_neg = static_cast<long long>(scored.size()) - total_pos;
    std::vector<RocPoint> points;
    scan_thresholds(scored, [&](double t, long long tp, long long fp) {
        points.push_back({t, static_cast<double>(tp) / total_pos,
                          static_cast<double>(fp) / total_neg});
    });
    return points;
}

std::vector<PrPoint> pr_points(const ScoredSet& scored) {
    scored.validate(true);
    const long long total_pos =
        std::accumulate(scored.labels.begin(), scored.labels.end(), 0LL);
    std::vector<PrPoint> points;
    scan_thresholds(scored, [&](double t, long long tp, long long fp) {
        const double precision =
            tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
        points.push_back({t, precision, static_cast<double>(tp) / total_pos});
    });
    return points;
}

} // namespace dtk::metrics
