#pragma once

#include "dtk/panel.hpp"
#include "dtk/records.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dtk {

// Synthetic customer population with planted sufferers. Spend is a
// per-customer lognormal baseline under multiplicative monthly noise; a
// Bernoulli draw per transaction emits BCE events, so BCE count rises with
// activity (the confound the causal stage has to untangle). A BCE may turn a
// frequent buyer into a sufferer: the trigger ends that month's purchases,
// and every later month compounds another factor of suffer_effect onto spend
// and purchase propensity, so most sufferers fade out near the trigger date.
// Reporters are the sufferers whose events carry the reported flag; silent
// sufferers leave the same transaction and BCE trace with the flag off.
struct GeneratorConfig {
    int n_customers = 20000;
    double fb_fraction = 0.6;  // share of customers drawn as frequent-buyer types

    double baseline_log_mean = 3.6;
    double baseline_log_sd = 0.7;

    double fb_purchase_prob = 0.97;  // monthly activity probability per type
    double ib_purchase_prob = 0.38;
    double fb_tx_rate = 6.0;  // habitual extra transactions per active month
    double ib_tx_rate = 1.5;
    double tx_noise_sd = 0.18;  // lognormal wobble on the transaction habit
    double item_rate = 0.7;     // items per transaction = 1 + Poisson(item_rate)

    double noise_sd = 0.1;      // lognormal monthly noise
    double spike_prob = 0.1;    // chance of an additive spending spike
    double spike_scale = 0.7;   // spike ~ Exponential(mean = spike_scale)

    double bce_rate_per_transaction = 0.012;
    double p_suffer = 0.8;        // BCE turns a non-sufferer into a sufferer
    double p_report = 0.55;       // sufferer reports (reported flag on events)
    double suffer_effect = 0.05;  // delta in (0,1)
    int suffer_first_month = 6;   // BCEs before this month index never convert
    int suffer_last_month = 7;    // BCEs after this month index no longer convert

    // Organic decline: drifters keep shopping but their spend and intensity
    // decay by a per-customer monthly rate from a random start month, down to
    // a floor share of their baseline. They give the trend models real
    // downward slopes that have nothing to do with bad experiences, like most
    // declining customers in the wild, while the floor keeps them clearly
    // apart from sufferers, who stop outright.
    double drift_fraction = 0.22;
    double drift_rate_min = 0.65;  // monthly decay multiplier bounds
    double drift_rate_max = 0.85;
    double drift_floor = 0.25;  // decay stops at this share of baseline

    YearMonth target{2017, 9};
    std::vector<std::string> countries = {"US", "UK", "DE"};
    std::vector<double> country_weights = {0.5, 0.3, 0.2};

    std::uint64_t seed = 42;

    ObservationWindow window() const { return ObservationWindow{target}; }
    void validate() const;  // throws InputError naming the bad field
};

struct GroundTruth {
    std::string customer_id;
    bool is_sufferer = false;
    bool is_reporter = false;
    std::optional<int> suffer_month;  // present iff is_sufferer
    bool is_drifter = false;
};

struct GeneratedData {
    std::vector<Transaction> transactions;
    std::vector<BceEvent> bce_events;
    std::vector<GroundTruth> ground_truth;
    std::vector<std::pair<std::string, std::string>> customer_countries;
};

GeneratedData generate(const GeneratorConfig& config);

struct SummaryReport {
    size_t customers = 0;
    size_t sufferers = 0;
    size_t silent_sufferers = 0;
    size_t reporters = 0;
    double mean_monthly_gmv_fb = 0;
    double mean_monthly_gmv_ib = 0;
};

SummaryReport summarize(const std::vector<Transaction>& transactions,
                        const std::vector<GroundTruth>& ground_truth,
                        const ObservationWindow& window, int fb_min_active_months = 6);

// Post-campaign month of GMV for the assigned customers. Baselines are
// replayed from the generator substreams; test-group sufferers get the
// treatment multiplier.
struct PostPeriodRow {
    std::string customer_id;
    double post_gmv = 0;
};

std::vector<PostPeriodRow> simulate_post_period(
    const std::vector<std::pair<std::string, bool>>& customers_in_test,
    const std::vector<GroundTruth>& ground_truth, const GeneratorConfig& config,
    double treatment_multiplier, double post_noise_sd, std::uint64_t seed);

// customer id "C<ordinal>" as emitted by generate(); throws on foreign ids.
int customer_ordinal(const std::string& customer_id);

void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruth>& rows);
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);

void write_customers(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& countries);
std::vector<std::pair<std::string, std::string>> read_customers(
    const std::filesystem::path& path);

void write_post_period(const std::filesystem::path& path, const std::vector<PostPeriodRow>& rows);
std::vector<PostPeriodRow> read_post_period(const std::filesystem::path& path);

} // namespace dtk
