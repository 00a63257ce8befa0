#include "dtk/features.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace dtk {

namespace {

std::span<const Transaction> in_window(std::span<const Transaction> transactions, Date from,
                                       Date until) {
    auto lo = std::lower_bound(transactions.begin(), transactions.end(), from,
                               [](const Transaction& t, Date d) { return t.date < d; });
    auto hi = std::lower_bound(lo, transactions.end(), until,
                               [](const Transaction& t, Date d) { return t.date < d; });
    return {lo, hi};
}

std::span<const BceEvent> bce_in_window(std::span<const BceEvent> events, Date from, Date until) {
    auto lo = std::lower_bound(events.begin(), events.end(), from,
                               [](const BceEvent& e, Date d) { return e.date < d; });
    auto hi = std::lower_bound(lo, events.end(), until,
                               [](const BceEvent& e, Date d) { return e.date < d; });
    return {lo, hi};
}

double window_metric_sum(std::span<const Transaction> window, Metric metric) {
    switch (metric) {
        case Metric::GMV: {
            double total = 0;
            for (const auto& t : window) total += t.amount;
            return total;
        }
        case Metric::BI: {
            double total = 0;
            for (const auto& t : window) total += t.item_count;
            return total;
        }
        case Metric::PD: {
            int days = 0;
            Date last;
            bool any = false;
            for (const auto& t : window) {
                if (!any || t.date != last) ++days;  // window spans are date-sorted
                last = t.date;
                any = true;
            }
            return days;
        }
    }
    return 0;
}

std::vector<Date> distinct_days(std::span<const Transaction> window) {
    std::vector<Date> days;
    for (const auto& t : window)
        if (days.empty() || t.date != days.back()) days.push_back(t.date);
    return days;
}

double sample_std(std::span<const double> values, double mean) {
    if (values.size() < 2) return 0;
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (values.size() - 1));
}

} // namespace

MaskedValue ratio_recent_to_year(std::span<const Transaction> transactions, Metric metric,
                                 int k_days, Date as_of) {
    const double year = window_metric_sum(in_window(transactions, as_of.plus_days(-365), as_of),
                                          metric);
    if (year == 0) return {0.0, true};
    const double recent =
        window_metric_sum(in_window(transactions, as_of.plus_days(-k_days), as_of), metric);
    return {recent / year, false};
}

GapStatistics gap_statistics(std::span<const Date> purchase_days) {
    GapStatistics stats;
    if (purchase_days.size() < 2) {
        stats.masked = true;
        return stats;
    }
    std::vector<double> gaps(purchase_days.size() - 1);
    for (size_t i = 1; i < purchase_days.size(); ++i)
        gaps[i - 1] = purchase_days[i] - purchase_days[i - 1];
    double sum = 0;
    for (double g : gaps) sum += g;
    stats.mean = sum / gaps.size();
    std::vector<double> sorted = gaps;
    std::sort(sorted.begin(), sorted.end());
    const size_t mid = sorted.size() / 2;
    stats.median = sorted.size() % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
    stats.std_dev = sample_std(gaps, stats.mean);
    return stats;
}

bool below_std_flag(std::span<const double> history, int w_months, double q) {
    if (history.size() != kHistoryMonths)
        throw InputError("below_std_flag needs 12 monthly values");
    if (w_months < 1 || w_months > 3)
        throw InputError("below_std_flag window must be 1..3 months");
    if (!(q > 0))
        throw InputError("below_std_flag multiplier must be > 0");
    const size_t split = kHistoryMonths - w_months;
    double ref_mean = 0;
    for (size_t i = 0; i < split; ++i) ref_mean += history[i];
    ref_mean /= split;
    const double ref_std = sample_std(history.subspan(0, split), ref_mean);
    double recent_mean = 0;
    for (size_t i = split; i < history.size(); ++i) recent_mean += history[i];
    recent_mean /= w_months;
    return recent_mean < ref_mean - q * ref_std;
}

BceFeatures bce_features(std::span<const BceEvent> events,
                         std::span<const Transaction> transactions, Date as_of) {
    BceFeatures out;
    auto before = bce_in_window(events, Date::from_days(INT32_MIN / 2), as_of);
    if (!before.empty()) {
        out.days_since_last_defect = as_of - before.back().date;
        out.recency_masked = false;
    }

    auto rate_in = [&](int days, double& rate, bool& masked) {
        const Date from = as_of.plus_days(-days);
        const auto tx = in_window(transactions, from, as_of);
        size_t defects = 0;
        for (const auto& e : bce_in_window(events, from, as_of))
            if (e.bce_type != BceType::late_delivery) ++defects;
        if (tx.empty()) {
            rate = 0;
            masked = true;
        } else {
            rate = static_cast<double>(defects) / tx.size();
            masked = false;
        }
    };
    rate_in(7, out.defect_rate_7d, out.rate_7d_masked);
    rate_in(365, out.defect_rate_1y, out.rate_1y_masked);
    out.bce_count_1y =
        static_cast<double>(bce_in_window(events, as_of.plus_days(-365), as_of).size());
    return out;
}

std::vector<FeatureSpec> default_catalog() {
    std::vector<FeatureSpec> catalog;
    auto add = [&](FeatureSpec spec) { catalog.push_back(std::move(spec)); };

    const Metric metrics[] = {Metric::GMV, Metric::BI, Metric::PD};
    for (Metric metric : metrics)
        for (int k : {30, 60, 90, 180}) {
            FeatureSpec spec;
            spec.name = std::string(to_string(metric)) + "_ratio_" + std::to_string(k) + "d";
            spec.family = FeatureFamily::ratio_recent_to_year;
            spec.metric = metric;
            spec.k_days = k;
            add(spec);
        }

    struct FlagParam {
        int w;
        double q;
        const char* tag;
    };
    const FlagParam flags[] = {{1, 0.75, "w1_q75"}, {2, 0.75, "w2_q75"},
                               {3, 0.75, "w3_q75"}, {1, 1.5, "w1_q150"}};
    for (Metric metric : metrics)
        for (const auto& f : flags) {
            FeatureSpec spec;
            spec.name = std::string(to_string(metric)) + "_below_std_" + f.tag;
            spec.family = FeatureFamily::below_std_flag;
            spec.metric = metric;
            spec.w_months = f.w;
            spec.q = f.q;
            add(spec);
        }

    const std::pair<int, const char*> gap_windows[] = {{365, "1y"}, {30, "30d"}};
    const std::pair<GapStat, const char*> gap_stats[] = {
        {GapStat::mean, "mean"}, {GapStat::median, "median"}, {GapStat::std_dev, "std"}};
    for (const auto& [days, wtag] : gap_windows)
        for (const auto& [stat, stag] : gap_stats) {
            FeatureSpec spec;
            spec.name = std::string("gap_") + stag + "_" + wtag;
            spec.family = FeatureFamily::gap_stat;
            spec.k_days = days;
            spec.stat = stat;
            add(spec);
        }

    const std::pair<CountSource, const char*> counts[] = {
        {CountSource::purchase_days, "purchase_days_1y"},
        {CountSource::items, "items_1y"},
        {CountSource::transactions, "tx_count_1y"}};
    for (const auto& [source, name] : counts) {
        FeatureSpec spec;
        spec.name = name;
        spec.family = FeatureFamily::count;
        spec.k_days = 365;
        spec.source = source;
        add(spec);
    }

    {
        FeatureSpec spec;
        spec.name = "days_since_last_defect";
        spec.family = FeatureFamily::bce_recency;
        add(spec);
    }
    for (int k : {7, 365}) {
        FeatureSpec spec;
        spec.name = "defect_rate_" + std::string(k == 7 ? "7d" : "1y");
        spec.family = FeatureFamily::bce_rate;
        spec.k_days = k;
        add(spec);
    }
    {
        FeatureSpec spec;
        spec.name = "bce_count_1y";
        spec.family = FeatureFamily::count;
        spec.k_days = 365;
        spec.source = CountSource::bce_events;
        add(spec);
    }
    {
        FeatureSpec spec;
        spec.name = "country_code";
        spec.family = FeatureFamily::categorical;
        add(spec);
    }
    return catalog;
}

size_t FeatureMatrix::column_index(const std::string& name) const {
    for (size_t i = 0; i < feature_names.size(); ++i)
        if (feature_names[i] == name) return i;
    throw InputError("feature matrix has no column '" + name + "'");
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::string>& names) const {
    FeatureMatrix out;
    out.customer_ids = customer_ids;
    for (const auto& name : names) {
        const size_t idx = column_index(name);
        out.feature_names.push_back(name);
        out.columns.push_back(columns[idx]);
        out.masks.push_back(masks[idx]);
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<size_t>& row_indices) const {
    FeatureMatrix out;
    out.feature_names = feature_names;
    out.customer_ids.reserve(row_indices.size());
    for (size_t r : row_indices) out.customer_ids.push_back(customer_ids[r]);
    out.columns.resize(cols());
    out.masks.resize(cols());
    for (size_t c = 0; c < cols(); ++c) {
        out.columns[c].reserve(row_indices.size());
        out.masks[c].reserve(row_indices.size());
        for (size_t r : row_indices) {
            out.columns[c].push_back(columns[c][r]);
            out.masks[c].push_back(masks[c][r]);
        }
    }
    return out;
}

FeatureMatrix build_feature_matrix(const std::vector<Transaction>& transactions,
                                   const std::vector<BceEvent>& bce_events,
                                   const std::vector<CustomerProfile>& profiles,
                                   const MonthlyPanel& panel,
                                   const std::vector<FeatureSpec>& catalog, Date as_of) {
    if (catalog.empty())
        throw InputError("feature catalog is empty");
    {
        std::set<std::string> seen;
        for (const auto& spec : catalog)
            if (!seen.insert(spec.name).second)
                throw InputError("duplicate feature name '" + spec.name + "'");
    }

    // Country frequency ranks: most frequent -> 0, ties alphabetical.
    std::map<std::string, size_t> country_freq;
    for (const auto& p : profiles) ++country_freq[p.country];
    std::vector<std::pair<std::string, size_t>> by_freq(country_freq.begin(), country_freq.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::unordered_map<std::string, double> country_rank;
    for (size_t i = 0; i < by_freq.size(); ++i) country_rank[by_freq[i].first] = double(i);

    std::unordered_map<std::string, const CustomerProfile*> profile_of;
    for (const auto& p : profiles) profile_of.emplace(p.customer_id, &p);

    FeatureMatrix matrix;
    for (const auto& spec : catalog) matrix.feature_names.push_back(spec.name);
    matrix.columns.resize(catalog.size());
    matrix.masks.resize(catalog.size());

    auto tx_begin = transactions.begin();
    auto bce_begin = bce_events.begin();

    for (size_t i = 0; i < panel.customer_count(); ++i) {
        auto months = panel.months_at(i);
        const std::string& id = months[0].customer_id;
        bool scoreable = false;
        for (int m = 0; m < kHistoryMonths; ++m)
            if (months[m].pd >= 1) scoreable = true;
        if (!scoreable) continue;

        auto profile_it = profile_of.find(id);
        if (profile_it == profile_of.end())
            throw InputError("missing profile for customer " + id);

        // Sorted inputs let us walk both files in one forward pass.
        auto tx_lo = std::lower_bound(tx_begin, transactions.end(), id,
                                      [](const Transaction& t, const std::string& key) {
                                          return t.customer_id < key;
                                      });
        auto tx_hi = std::upper_bound(tx_lo, transactions.end(), id,
                                      [](const std::string& key, const Transaction& t) {
                                          return key < t.customer_id;
                                      });
        tx_begin = tx_hi;
        auto bce_lo = std::lower_bound(bce_begin, bce_events.end(), id,
                                       [](const BceEvent& e, const std::string& key) {
                                           return e.customer_id < key;
                                       });
        auto bce_hi = std::upper_bound(bce_lo, bce_events.end(), id,
                                       [](const std::string& key, const BceEvent& e) {
                                           return key < e.customer_id;
                                       });
        bce_begin = bce_hi;

        const std::span<const Transaction> tx_all(&*tx_lo, size_t(tx_hi - tx_lo));
        const std::span<const BceEvent> bce_all(
            bce_lo == bce_hi ? nullptr : &*bce_lo, size_t(bce_hi - bce_lo));
        const std::span<const Transaction> tx_hist =
            in_window(tx_all, Date::from_days(INT32_MIN / 2), as_of);
        const std::span<const BceEvent> bce_hist =
            bce_in_window(bce_all, Date::from_days(INT32_MIN / 2), as_of);

        const BceFeatures bce = bce_features(bce_hist, tx_hist, as_of);

        matrix.customer_ids.push_back(id);
        for (size_t c = 0; c < catalog.size(); ++c) {
            const FeatureSpec& spec = catalog[c];
            double value = 0;
            bool masked = false;
            switch (spec.family) {
                case FeatureFamily::ratio_recent_to_year: {
                    const MaskedValue v =
                        ratio_recent_to_year(tx_hist, spec.metric, spec.k_days, as_of);
                    value = v.value;
                    masked = v.masked;
                    break;
                }
                case FeatureFamily::gap_stat: {
                    const auto window =
                        in_window(tx_hist, as_of.plus_days(-spec.k_days), as_of);
                    const auto days = distinct_days(window);
                    const GapStatistics stats = gap_statistics(days);
                    value = spec.stat == GapStat::mean     ? stats.mean
                            : spec.stat == GapStat::median ? stats.median
                                                           : stats.std_dev;
                    masked = stats.masked;
                    break;
                }
                case FeatureFamily::below_std_flag: {
                    double history[kHistoryMonths];
                    for (int m = 0; m < kHistoryMonths; ++m)
                        history[m] = metric_value(months[m], spec.metric);
                    value = below_std_flag(history, spec.w_months, spec.q) ? 1.0 : 0.0;
                    break;
                }
                case FeatureFamily::count: {
                    const Date from = as_of.plus_days(-spec.k_days);
                    if (spec.source == CountSource::bce_events) {
                        value = static_cast<double>(bce_in_window(bce_hist, from, as_of).size());
                    } else {
                        const auto window = in_window(tx_hist, from, as_of);
                        value = spec.source == CountSource::transactions
                                    ? static_cast<double>(window.size())
                                : spec.source == CountSource::items
                                    ? window_metric_sum(window, Metric::BI)
                                    : window_metric_sum(window, Metric::PD);
                    }
                    break;
                }
                case FeatureFamily::bce_recency:
                    value = bce.days_since_last_defect;
                    masked = bce.recency_masked;
                    break;
                case FeatureFamily::bce_rate:
                    if (spec.k_days == 7) {
                        value = bce.defect_rate_7d;
                        masked = bce.rate_7d_masked;
                    } else {
                        value = bce.defect_rate_1y;
                        masked = bce.rate_1y_masked;
                    }
                    break;
                case FeatureFamily::categorical:
                    value = country_rank.at(profile_it->second->country);
                    break;
            }
            if (!std::isfinite(value))
                throw InputError("non-finite value for feature " + spec.name);
            matrix.columns[c].push_back(value);
            matrix.masks[c].push_back(masked ? 1 : 0);
        }
    }
    return matrix;
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& matrix) {
    std::vector<std::string> header{"customer_id"};
    for (const auto& name : matrix.feature_names) {
        header.push_back(name);
        header.push_back(name + "_mask");
    }
    CsvWriter out(path, header);
    std::vector<std::string> fields(header.size());
    for (size_t r = 0; r < matrix.rows(); ++r) {
        fields[0] = matrix.customer_ids[r];
        for (size_t c = 0; c < matrix.cols(); ++c) {
            fields[1 + 2 * c] = format_double(matrix.columns[c][r]);
            fields[2 + 2 * c] = matrix.masks[c][r] ? "1" : "0";
        }
        out.write_row(fields);
    }
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
    CsvReader reader(path);
    const auto& header = reader.header();
    if (header.empty() || header[0] != "customer_id" || header.size() % 2 == 0)
        throw InputError(path.string() + ": malformed feature matrix header");
    FeatureMatrix matrix;
    const size_t n_features = (header.size() - 1) / 2;
    for (size_t c = 0; c < n_features; ++c) {
        const std::string& name = header[1 + 2 * c];
        if (header[2 + 2 * c] != name + "_mask")
            throw InputError(path.string() + ": column " + name + " lacks its mask companion");
        matrix.feature_names.push_back(name);
    }
    matrix.columns.resize(n_features);
    matrix.masks.resize(n_features);
    CsvRow row;
    while (reader.next(row)) {
        matrix.customer_ids.push_back(row.fields[0]);
        for (size_t c = 0; c < n_features; ++c) {
            matrix.columns[c].push_back(reader.as_double(row, 1 + 2 * c));
            const long long mask = reader.as_int(row, 2 + 2 * c);
            if (mask != 0 && mask != 1) reader.fail(row, "mask must be 0 or 1");
            matrix.masks[c].push_back(static_cast<std::uint8_t>(mask));
        }
    }
    return matrix;
}

} // namespace dtk
