#include "dtk/generator.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"
#include "dtk/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace dtk {

namespace {

void check_prob(double value, const char* field) {
    if (!(value >= 0 && value <= 1))
        throw InputError(std::string("generator config: ") + field + " must be in [0,1]");
}

void check_positive(double value, const char* field) {
    if (!(value > 0))
        throw InputError(std::string("generator config: ") + field + " must be > 0");
}

void check_non_negative(double value, const char* field) {
    if (!(value >= 0))
        throw InputError(std::string("generator config: ") + field + " must be >= 0");
}

// One-shot draws so replaying a prefix of a substream never depends on
// distribution-object caching.
double draw_normal(std::mt19937_64& rng, double mean, double sd) {
    std::normal_distribution<double> dist(mean, sd);
    return dist(rng);
}

double draw_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

bool draw_bernoulli(std::mt19937_64& rng, double p) {
    if (p <= 0) return false;
    if (p >= 1) return true;
    std::bernoulli_distribution dist(p);
    return dist(rng);
}

int draw_poisson(std::mt19937_64& rng, double rate) {
    if (rate <= 0) return 0;
    std::poisson_distribution<int> dist(rate);
    return dist(rng);
}

double draw_exponential(std::mt19937_64& rng, double mean) {
    std::exponential_distribution<double> dist(1.0 / mean);
    return dist(rng);
}

int draw_index(std::mt19937_64& rng, int n) {
    std::uniform_int_distribution<int> dist(0, n - 1);
    return dist(rng);
}

std::string make_customer_id(int ordinal) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "C%06d", ordinal);
    return buf;
}

struct CustomerStatic {
    std::string country;
    double baseline;
};

// The "attr" substream holds the draws simulate_post_period has to replay.
CustomerStatic draw_static(const GeneratorConfig& config, int ordinal) {
    auto rng = make_rng(derive_seed(config.seed, "attr", static_cast<std::uint64_t>(ordinal)));
    CustomerStatic attrs;
    double u = draw_uniform(rng, 0.0, 1.0);
    double cum = 0;
    attrs.country = config.countries.back();
    const double total =
        std::accumulate(config.country_weights.begin(), config.country_weights.end(), 0.0);
    for (size_t c = 0; c < config.countries.size(); ++c) {
        cum += config.country_weights[c] / total;
        if (u < cum) {
            attrs.country = config.countries[c];
            break;
        }
    }
    attrs.baseline = std::exp(draw_normal(rng, config.baseline_log_mean, config.baseline_log_sd));
    return attrs;
}

} // namespace

void GeneratorConfig::validate() const {
    if (n_customers < 1)
        throw InputError("generator config: n_customers must be >= 1");
    check_prob(fb_fraction, "fb_fraction");
    check_prob(fb_purchase_prob, "fb_purchase_prob");
    check_prob(ib_purchase_prob, "ib_purchase_prob");
    check_prob(bce_rate_per_transaction, "bce_rate_per_transaction");
    check_prob(p_suffer, "p_suffer");
    check_prob(p_report, "p_report");
    if (!(suffer_effect > 0 && suffer_effect < 1))
        throw InputError("generator config: suffer_effect must be in (0,1)");
    if (suffer_first_month < 0 || suffer_last_month > 11 ||
        suffer_first_month > suffer_last_month)
        throw InputError(
            "generator config: need 0 <= suffer_first_month <= suffer_last_month <= 11");
    check_prob(drift_fraction, "drift_fraction");
    if (!(drift_rate_min > 0 && drift_rate_min <= drift_rate_max && drift_rate_max < 1))
        throw InputError("generator config: need 0 < drift_rate_min <= drift_rate_max < 1");
    if (!(drift_floor > 0 && drift_floor < 1))
        throw InputError("generator config: drift_floor must be in (0,1)");
    check_non_negative(fb_tx_rate, "fb_tx_rate");
    check_non_negative(ib_tx_rate, "ib_tx_rate");
    check_non_negative(tx_noise_sd, "tx_noise_sd");
    check_non_negative(item_rate, "item_rate");
    check_non_negative(noise_sd, "noise_sd");
    check_prob(spike_prob, "spike_prob");
    check_positive(spike_scale, "spike_scale");
    check_positive(baseline_log_sd, "baseline_log_sd");
    if (countries.empty() || countries.size() != country_weights.size())
        throw InputError("generator config: countries and country_weights must align");
    for (double w : country_weights)
        check_positive(w, "country_weights");
}

GeneratedData generate(const GeneratorConfig& config) {
    config.validate();
    const ObservationWindow window = config.window();
    GeneratedData out;
    out.ground_truth.reserve(config.n_customers);
    out.customer_countries.reserve(config.n_customers);

    const int n_fb_types = static_cast<int>(std::llround(config.fb_fraction * config.n_customers));

    for (int ordinal = 0; ordinal < config.n_customers; ++ordinal) {
        const std::string id = make_customer_id(ordinal);
        const CustomerStatic attrs = draw_static(config, ordinal);
        out.customer_countries.emplace_back(id, attrs.country);

        const bool fb_type = ordinal < n_fb_types;
        const double purchase_prob =
            fb_type ? config.fb_purchase_prob : config.ib_purchase_prob;
        const double tx_rate = fb_type ? config.fb_tx_rate : config.ib_tx_rate;

        auto rng =
            make_rng(derive_seed(config.seed, "months", static_cast<std::uint64_t>(ordinal)));

        GroundTruth truth;
        truth.customer_id = id;
        truth.is_drifter = draw_bernoulli(rng, config.drift_fraction);
        int drift_start = 0;
        double drift_rate = 1.0;
        if (truth.is_drifter) {
            // Start late so the decline is still fresh against the customer's
            // own yearly norm at the scoring month. A drift that starts early
            // gets absorbed into the norm window and stops looking like a
            // drop by the time anyone measures it.
            drift_start = 8 + draw_index(rng, 4);
            drift_rate = draw_uniform(rng, config.drift_rate_min, config.drift_rate_max);
        }

        for (int m = 0; m < kPanelMonths; ++m) {
            // Suffering compounds: each month past the trigger scales the
            // propensity and spend by another factor of suffer_effect, so
            // most sufferers fade out within a few months.
            const int months_suffering =
                truth.suffer_month.has_value() ? m - *truth.suffer_month : 0;
            const double damp =
                months_suffering > 0 ? std::pow(config.suffer_effect, months_suffering) : 1.0;
            // Drift shrinks what they spend, not whether they show up.
            const double drift_damp =
                truth.is_drifter && m >= drift_start
                    ? std::max(std::pow(drift_rate, static_cast<double>(m - drift_start + 1)),
                               config.drift_floor)
                    : 1.0;
            if (!draw_bernoulli(rng, purchase_prob * damp)) continue;

            double mult = std::exp(draw_normal(rng, 0.0, config.noise_sd));
            if (draw_bernoulli(rng, config.spike_prob))
                mult += draw_exponential(rng, config.spike_scale);
            const double month_spend = attrs.baseline * mult * damp * drift_damp;

            // Transaction counts are a habit, not a fresh Poisson draw: a
            // customer who makes 7 purchases a month makes about 7 next month
            // too, so the count panels stay quiet until something real (a
            // suffered event, an organic drift) pulls the habit down.
            const double tx_wobble = std::exp(draw_normal(rng, 0.0, config.tx_noise_sd));
            const int n_tx =
                1 + static_cast<int>(std::lround(tx_rate * damp * drift_damp * tx_wobble));
            const YearMonth ym = window.start_month().plus_months(m);
            const int month_days = days_in_month(ym.year, ym.month);

            std::vector<int> days(n_tx);
            for (int t = 0; t < n_tx; ++t) days[t] = 1 + draw_index(rng, month_days);
            std::sort(days.begin(), days.end());

            std::vector<double> weights(n_tx);
            double weight_sum = 0;
            for (int t = 0; t < n_tx; ++t) {
                weights[t] = draw_uniform(rng, 0.5, 1.5);
                weight_sum += weights[t];
            }

            for (int t = 0; t < n_tx; ++t) {
                Transaction tx;
                tx.customer_id = id;
                tx.date = Date::from_ymd(ym.year, ym.month, days[t]);
                // Two-decimal currency at the source, like an export would be.
                tx.amount =
                    std::round(month_spend * weights[t] / weight_sum * 100.0) / 100.0;
                // Items per transaction follow the same habit logic as the
                // transaction count itself.
                const double item_wobble =
                    std::exp(draw_normal(rng, 0.0, config.tx_noise_sd));
                tx.item_count =
                    1 + static_cast<int>(std::lround(
                            config.item_rate * damp * drift_damp * item_wobble));
                out.transactions.push_back(tx);

                if (!draw_bernoulli(rng, config.bce_rate_per_transaction)) continue;
                BceEvent event;
                event.customer_id = id;
                event.date = tx.date;
                const double type_u = draw_uniform(rng, 0.0, 1.0);
                event.bce_type = type_u < 0.35   ? BceType::item_not_received
                                 : type_u < 0.65 ? BceType::not_as_described
                                 : type_u < 0.90 ? BceType::late_delivery
                                                 : BceType::other;
                // Only frequent buyers can become sufferers: a walk-away is
                // only an observable event against an established habit, and
                // the downstream stages all key off that habit breaking.
                const bool converts = fb_type && m >= config.suffer_first_month &&
                                      m <= config.suffer_last_month && !truth.is_sufferer &&
                                      draw_bernoulli(rng, config.p_suffer);
                if (converts) {
                    truth.is_sufferer = true;
                    truth.suffer_month = m;
                    truth.is_reporter = draw_bernoulli(rng, config.p_report);
                }
                // Reporters report from their trigger event onward.
                event.reported = truth.is_reporter;
                out.bce_events.push_back(event);
                if (converts) break;  // the bad experience cuts the month short
            }
        }
        out.ground_truth.push_back(std::move(truth));
    }

    auto by_id_date = [](const auto& a, const auto& b) {
        if (a.customer_id != b.customer_id) return a.customer_id < b.customer_id;
        return a.date < b.date;
    };
    std::stable_sort(out.transactions.begin(), out.transactions.end(), by_id_date);
    std::stable_sort(out.bce_events.begin(), out.bce_events.end(), by_id_date);
    return out;
}

SummaryReport summarize(const std::vector<Transaction>& transactions,
                        const std::vector<GroundTruth>& ground_truth,
                        const ObservationWindow& window, int fb_min_active_months) {
    SummaryReport report;
    report.customers = ground_truth.size();
    for (const auto& row : ground_truth) {
        if (row.is_sufferer) ++report.sufferers;
        if (row.is_reporter) ++report.reporters;
        if (row.is_sufferer && !row.is_reporter) ++report.silent_sufferers;
    }
    if (transactions.empty()) return report;

    const MonthlyPanel panel = build_monthly_panel(transactions, window);
    const auto profiles = assign_segment(panel, fb_min_active_months);
    double gmv_fb = 0, gmv_ib = 0;
    size_t n_fb = 0, n_ib = 0;
    for (const auto& p : profiles) {
        double total = 0;
        for (const auto& month : panel.months(p.customer_id)) total += month.gmv;
        if (p.segment == Segment::FB) {
            gmv_fb += total;
            ++n_fb;
        } else {
            gmv_ib += total;
            ++n_ib;
        }
    }
    if (n_fb) report.mean_monthly_gmv_fb = gmv_fb / (n_fb * kPanelMonths);
    if (n_ib) report.mean_monthly_gmv_ib = gmv_ib / (n_ib * kPanelMonths);
    return report;
}

int customer_ordinal(const std::string& customer_id) {
    if (customer_id.size() < 2 || customer_id[0] != 'C')
        throw InputError("customer id '" + customer_id + "' was not produced by the generator");
    int value = 0;
    const char* first = customer_id.data() + 1;
    const char* last = customer_id.data() + customer_id.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || value < 0)
        throw InputError("customer id '" + customer_id + "' was not produced by the generator");
    return value;
}

std::vector<PostPeriodRow> simulate_post_period(
    const std::vector<std::pair<std::string, bool>>& customers_in_test,
    const std::vector<GroundTruth>& ground_truth, const GeneratorConfig& config,
    double treatment_multiplier, double post_noise_sd, std::uint64_t seed) {
    if (!(treatment_multiplier > 0))
        throw InputError("treatment_multiplier must be > 0");
    std::unordered_map<std::string, const GroundTruth*> truth;
    truth.reserve(ground_truth.size());
    for (const auto& row : ground_truth) truth.emplace(row.customer_id, &row);

    std::vector<PostPeriodRow> rows;
    rows.reserve(customers_in_test.size());
    for (const auto& [id, in_test] : customers_in_test) {
        auto it = truth.find(id);
        if (it == truth.end())
            throw InputError("customer " + id + " missing from ground truth");
        const int ordinal = customer_ordinal(id);
        const CustomerStatic attrs = draw_static(config, ordinal);
        auto rng = make_rng(derive_seed(seed, "post", static_cast<std::uint64_t>(ordinal)));
        double gmv = attrs.baseline * std::exp(draw_normal(rng, 0.0, post_noise_sd));
        if (it->second->is_sufferer) {
            gmv *= config.suffer_effect;
            if (in_test) gmv *= treatment_multiplier;
        }
        rows.push_back({id, std::round(gmv * 100.0) / 100.0});
    }
    std::sort(rows.begin(), rows.end(),
              [](const PostPeriodRow& a, const PostPeriodRow& b) {
                  return a.customer_id < b.customer_id;
              });
    return rows;
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruth>& rows) {
    CsvWriter out(path,
                  {"customer_id", "is_sufferer", "is_reporter", "suffer_month", "is_drifter"});
    for (const auto& r : rows)
        out.write_row({r.customer_id, r.is_sufferer ? "1" : "0", r.is_reporter ? "1" : "0",
                       r.suffer_month ? std::to_string(*r.suffer_month) : "",
                       r.is_drifter ? "1" : "0"});
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
    CsvReader reader(path,
                     {"customer_id", "is_sufferer", "is_reporter", "suffer_month", "is_drifter"});
    std::vector<GroundTruth> rows;
    CsvRow row;
    while (reader.next(row)) {
        GroundTruth r;
        r.customer_id = row.fields[0];
        r.is_sufferer = reader.as_int(row, 1) == 1;
        r.is_reporter = reader.as_int(row, 2) == 1;
        if (!row.fields[3].empty())
            r.suffer_month = static_cast<int>(reader.as_int(row, 3));
        r.is_drifter = reader.as_int(row, 4) == 1;
        if (r.is_reporter && !r.is_sufferer)
            reader.fail(row, "is_reporter requires is_sufferer");
        if (r.is_sufferer != r.suffer_month.has_value())
            reader.fail(row, "suffer_month must be present exactly for sufferers");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_customers(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& countries) {
    CsvWriter out(path, {"customer_id", "country"});
    for (const auto& [id, country] : countries) out.write_row({id, country});
}

std::vector<std::pair<std::string, std::string>> read_customers(
    const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "country"});
    std::vector<std::pair<std::string, std::string>> rows;
    CsvRow row;
    while (reader.next(row)) rows.emplace_back(row.fields[0], row.fields[1]);
    return rows;
}

void write_post_period(const std::filesystem::path& path, const std::vector<PostPeriodRow>& rows) {
    CsvWriter out(path, {"customer_id", "post_gmv"});
    for (const auto& r : rows) out.write_row({r.customer_id, format_money(r.post_gmv)});
}

std::vector<PostPeriodRow> read_post_period(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "post_gmv"});
    std::vector<PostPeriodRow> rows;
    CsvRow row;
    while (reader.next(row)) {
        PostPeriodRow r;
        r.customer_id = row.fields[0];
        r.post_gmv = reader.as_double(row, 1);
        if (r.post_gmv < 0) reader.fail(row, "negative post_gmv");
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace dtk
