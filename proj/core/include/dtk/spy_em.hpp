#pragma once

#include "dtk/features.hpp"
#include "dtk/gbdt.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dtk {

// Spy-based semi-supervised EM. Golden customers are trusted positives; the
// mixed population starts all-negative. Each iteration plants a random subset
// of the golden set ("spies") into the mixed pool, trains a small boosted
// model, picks the score cutoff that maximizes F-beta for spies against the
// currently-negative mixed members, relabels the mixed pool at that cutoff,
// and returns the spies. The loop stops when the fraction of mixed labels
// that flipped drops to theta or below.

struct SpyEmConfig {
    double spy_fraction = 0.15;
    double theta = 0.001;
    int max_iterations = 50;
    double holdout_fraction = 0.3;  // golden rows reserved for recall tracking
    double cutoff_beta = 1.0;
    gbdt::TrainConfig base;  // defaults overridden: additive stumps, wide bins
    std::uint64_t seed = 0;

    // The base learner is deliberately weak: depth-1 trees over wide bins add
    // up per-feature evidence and cannot carve pockets around individual
    // spies, so a spy scores exactly like the cluster it was drawn from and
    // the F-beta cutoff lands at the cluster base instead of a spy tail. A
    // sharper learner memorizes the spies and the relabeling stalls after a
    // handful of flips. No validation split, every row counts.
    SpyEmConfig() {
        base.n_trees = 20;
        base.max_depth = 1;
        base.min_samples_leaf = 4000;
        base.validation_fraction = 0;
    }
    void validate() const;
};

struct SpyEmState {
    int iteration = 0;
    std::vector<int> mixed_labels;       // 0/1 per mixed row
    std::vector<int> holdout_rows;       // golden rows excluded from the loop
    std::vector<int> train_golden_rows;  // golden rows eligible as spies
    std::vector<int> current_spies;      // subset of train_golden_rows
    gbdt::Model model;                   // classifier from the last iteration
    bool has_model = false;
    std::vector<double> beta_history;
    std::vector<double> recall_history;  // holdout golden at the iteration cutoff
    std::vector<double> cutoff_history;
    std::vector<bool> degenerate_cutoff;  // single-class fallback used
    std::vector<double> mixed_scores;     // last scores over the mixed rows
    std::vector<double> golden_scores;    // last scores over all golden rows
    bool converged = false;
};

enum class PopulationStatus { Golden, SilentSufferer, Normal };

const char* to_string(PopulationStatus status);
PopulationStatus parse_population_status(const std::string& text);

struct LabeledMember {
    std::string customer_id;
    PopulationStatus status = PopulationStatus::Normal;
    double score = 0;
};

struct LabeledPopulation {
    std::vector<LabeledMember> members;  // golden rows first, then mixed
    double final_cutoff = 0.5;
};

// beta = flips / |mixed|; empty mixed set gives 0.
double label_change_rate(const std::vector<int>& prev_labels,
                         const std::vector<int>& new_labels);

// Delegates to metrics::max_f_beta; single-class reference falls back to 0.5
// (degenerate flag reported through the bool).
std::pair<double, bool> select_cutoff(const std::vector<double>& scores,
                                      const std::vector<int>& reference_labels, double beta);

struct StepResult {
    double beta = 0;
    double cutoff = 0.5;
    double holdout_recall = 0;
    bool degenerate_cutoff = false;
};

class SpyEmEngine {
public:
    // Requires at least 20 golden rows and matching feature columns.
    SpyEmEngine(const FeatureMatrix& golden, const FeatureMatrix& mixed, SpyEmConfig config);

    // Runs one iteration. spy_override (indices into the golden matrix, all
    // within train_golden_rows) replaces the seeded draw; used to verify the
    // frozen-spy fixed point.
    StepResult step(const std::vector<int>* spy_override = nullptr);

    bool done() const;  // converged or iteration limit reached
    const SpyEmState& state() const { return state_; }
    LabeledPopulation finalize() const;

private:
    FeatureMatrix golden_;
    FeatureMatrix mixed_;
    FeatureMatrix combined_;  // golden rows then mixed rows
    SpyEmConfig config_;
    SpyEmState state_;
};

// Construct an engine, step until done, return the labeled population and the
// final state. An empty mixed set records a single degenerate iteration
// (beta 0, cutoff 0.5, no model) and labels every golden member golden.
std::pair<LabeledPopulation, SpyEmState> run_spy_em(const FeatureMatrix& golden,
                                                    const FeatureMatrix& mixed,
                                                    const SpyEmConfig& config);

// labeled_population.csv: customer_id,status,score
void write_labeled_population(const std::filesystem::path& path, const LabeledPopulation& pop);
LabeledPopulation read_labeled_population(const std::filesystem::path& path);

// spyem_trace.csv: iteration,beta,holdout_recall,cutoff
void write_spyem_trace(const std::filesystem::path& path, const SpyEmState& state);

struct TraceRow {
    int iteration = 0;
    double beta = 0;
    double holdout_recall = 0;
    double cutoff = 0;
};
std::vector<TraceRow> read_spyem_trace(const std::filesystem::path& path);

} // namespace dtk
