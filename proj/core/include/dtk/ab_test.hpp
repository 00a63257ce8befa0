#pragma once

#include "dtk/spy_em.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dtk {

// Campaign A/B machinery: stratified random assignment over the detected
// population (golden + silent sufferers), Welch two-sample t-test on
// post-period GMV, and the percent lift readout.

enum class AbGroup { Test, Control };

const char* to_string(AbGroup group);

struct AbConfig {
    double test_fraction = 0.8;
    // Per-status overrides keyed by status name ("golden", "silent_sufferer").
    std::map<std::string, double> stratum_fractions;
    double cl = 0.05;
    std::uint64_t seed = 0;

    double fraction_for(PopulationStatus status) const;
    void validate() const;
};

struct AbAssignment {
    std::vector<std::string> customer_ids;
    std::vector<PopulationStatus> statuses;
    std::vector<AbGroup> groups;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;  // e.g. empty strata

    size_t size() const { return customer_ids.size(); }
    int count(PopulationStatus status, AbGroup group) const;
    int count(AbGroup group) const;
};

// Stratified by status; normals are not part of the campaign. Within each
// stratum the test count is round(fraction * n).
AbAssignment assign_groups(const LabeledPopulation& population, const AbConfig& config);

struct WelchResult {
    double t = 0;
    double p = 1;
    double df = 0;
};

// Unequal-variance two-sample t-test, two-sided p. Zero variance in both
// samples gives t = 0, p = 1 for equal means and p = 0 otherwise.
WelchResult welch_t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// (test - control) / control * 100; control must be positive.
double lift(double test_mean, double control_mean);

struct AbReadout {
    double test_mean = 0;
    double control_mean = 0;
    double t = 0;
    double p = 1;
    double df = 0;
    double lift_percent = 0;
    int n_test = 0;
    int n_control = 0;
    double cl = 0.05;
    bool significant = false;
};

// Welch test + lift over post-period GMV, pooled across strata. Every
// assigned customer must appear in post_gmv.
AbReadout campaign_readout(const AbAssignment& assignment,
                           const std::map<std::string, double>& post_gmv, double cl = 0.05);

// assignment.csv: customer_id,status,group
void write_assignment(const std::filesystem::path& path, const AbAssignment& assignment);
AbAssignment read_assignment(const std::filesystem::path& path);

// abtest_report.csv: one `row` label column then golden/silent_sufferer/total
// columns. Count rows fill all three; statistic rows fill only `total`.
void write_abtest_report(const std::filesystem::path& path, const AbAssignment& assignment,
                         const AbReadout& readout);

} // namespace dtk
