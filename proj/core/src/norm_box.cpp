#include "dtk/norm_box.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace dtk {

namespace {

bool all_zero(std::span<const double> history) {
    return std::all_of(history.begin(), history.end(), [](double v) { return v == 0.0; });
}

struct CustomerBox {
    double mu;
    double s;
    double next;
    Segment segment;
    bool scoreable;
};

std::unordered_map<std::string, Segment> segment_index(
    const std::vector<CustomerProfile>& profiles) {
    std::unordered_map<std::string, Segment> index;
    index.reserve(profiles.size());
    for (const auto& p : profiles)
        index.emplace(p.customer_id, p.segment);
    return index;
}

} // namespace

NormBoxParams norm_box_stats(std::span<const double> history, double alpha) {
    if (history.size() != kHistoryMonths)
        throw InputError("norm box needs exactly 12 monthly values, got " +
                         std::to_string(history.size()));
    double sum = 0;
    for (double v : history) sum += v;
    const double mu = sum / kHistoryMonths;
    double ss = 0;
    for (double v : history) ss += (v - mu) * (v - mu);
    NormBoxParams box;
    box.mu = mu;
    box.s = std::sqrt(ss / (kHistoryMonths - 1));
    box.alpha = alpha;
    return box;
}

DownwardLabel is_downward(std::span<const double> history, double next_value, double alpha) {
    const NormBoxParams box = norm_box_stats(history, alpha);
    DownwardLabel label;
    label.scoreable = !all_zero(history);
    label.target_value = next_value;
    label.lower_bound = box.lower_bound();
    label.is_downward = label.scoreable && next_value < label.lower_bound;
    return label;
}

LabelSummary label_panel(const MonthlyPanel& panel, Metric metric, double alpha_fb,
                         double alpha_ib, const std::vector<CustomerProfile>& profiles) {
    const auto segments = segment_index(profiles);
    LabelSummary summary;
    summary.labels.reserve(panel.customer_count());
    for (size_t i = 0; i < panel.customer_count(); ++i) {
        auto months = panel.months_at(i);
        double history[kHistoryMonths];
        for (int m = 0; m < kHistoryMonths; ++m)
            history[m] = metric_value(months[m], metric);
        auto it = segments.find(months[0].customer_id);
        if (it == segments.end())
            throw InputError("missing segment for customer " + months[0].customer_id);
        const double alpha = it->second == Segment::FB ? alpha_fb : alpha_ib;
        DownwardLabel label = is_downward(history, metric_value(months[12], metric), alpha);
        label.customer_id = months[0].customer_id;
        label.metric = metric;
        if (label.scoreable) ++summary.scoreable;
        if (label.is_downward) ++summary.positives;
        summary.labels.push_back(std::move(label));
    }
    summary.event_rate = summary.labels.empty()
                             ? 0.0
                             : static_cast<double>(summary.positives) / summary.labels.size();
    return summary;
}

double alpha_grid_value(int step) {
    return step * kAlphaGridStep;
}

double tune_alpha(const MonthlyPanel& panel, Metric metric, Segment segment, double target_rate,
                  const std::vector<CustomerProfile>& profiles) {
    if (!(target_rate > 0 && target_rate < 1))
        throw InputError("target_rate must be in (0,1)");
    const auto segments = segment_index(profiles);

    struct Stats {
        double mu, s, next;
        bool scoreable;
    };
    std::vector<Stats> members;
    for (size_t i = 0; i < panel.customer_count(); ++i) {
        auto months = panel.months_at(i);
        auto it = segments.find(months[0].customer_id);
        if (it == segments.end())
            throw InputError("missing segment for customer " + months[0].customer_id);
        if (it->second != segment) continue;
        double history[kHistoryMonths];
        for (int m = 0; m < kHistoryMonths; ++m)
            history[m] = metric_value(months[m], metric);
        NormBoxParams box = norm_box_stats(history);
        members.push_back(
            {box.mu, box.s, metric_value(months[12], metric), !all_zero(history)});
    }
    if (members.empty())
        throw InputError(std::string("no ") + to_string(segment) + " customers in panel");
    const bool degenerate =
        std::none_of(members.begin(), members.end(),
                     [](const Stats& m) { return m.scoreable && m.s > 0; });
    if (degenerate)
        throw InputError("degenerate panel: every customer has zero variance");

    double best_alpha = alpha_grid_value(1);
    double best_gap = std::numeric_limits<double>::infinity();
    for (int step = 1; step <= kAlphaGridSize; ++step) {
        const double alpha = alpha_grid_value(step);
        size_t positives = 0;
        for (const auto& m : members)
            if (m.scoreable && m.next < m.mu - alpha * m.s) ++positives;
        const double rate = static_cast<double>(positives) / members.size();
        const double gap = std::abs(rate - target_rate);
        if (gap < best_gap) {  // strict: ties keep the smaller alpha
            best_gap = gap;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

void write_labels(const std::filesystem::path& path, const LabelSummary& summary) {
    CsvWriter out(path, {"customer_id", "metric", "is_downward", "lower_bound", "target_value"});
    for (const auto& l : summary.labels)
        out.write_row({l.customer_id, to_string(l.metric), l.is_downward ? "1" : "0",
                       l.scoreable ? format_double(l.lower_bound) : "",
                       format_double(l.target_value)});
}

LabelSummary read_labels(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "metric", "is_downward", "lower_bound", "target_value"});
    LabelSummary summary;
    CsvRow row;
    while (reader.next(row)) {
        DownwardLabel l;
        l.customer_id = row.fields[0];
        try {
            l.metric = parse_metric(row.fields[1]);
        } catch (const InputError& e) {
            reader.fail(row, e.what());
        }
        l.is_downward = reader.as_int(row, 2) == 1;
        l.scoreable = !row.fields[3].empty();
        if (l.scoreable) l.lower_bound = reader.as_double(row, 3);
        l.target_value = reader.as_double(row, 4);
        if (l.scoreable) ++summary.scoreable;
        if (l.is_downward) ++summary.positives;
        summary.labels.push_back(std::move(l));
    }
    summary.event_rate = summary.labels.empty()
                             ? 0.0
                             : static_cast<double>(summary.positives) / summary.labels.size();
    return summary;
}

} // namespace dtk
