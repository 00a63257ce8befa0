#include "dtk/spy_em.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"
#include "dtk/metrics.hpp"
#include "dtk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

namespace dtk {

void SpyEmConfig::validate() const {
    if (!(spy_fraction > 0 && spy_fraction < 1))
        throw InputError("spy_em: spy_fraction must be in (0,1)");
    if (!(theta > 0))
        throw InputError("spy_em: theta must be positive");
    if (max_iterations < 1)
        throw InputError("spy_em: max_iterations must be at least 1");
    if (!(holdout_fraction > 0 && holdout_fraction < 1))
        throw InputError("spy_em: holdout_fraction must be in (0,1)");
    if (!(cutoff_beta > 0))
        throw InputError("spy_em: cutoff_beta must be positive");
    base.validate();
}

const char* to_string(PopulationStatus status) {
    switch (status) {
    case PopulationStatus::Golden: return "golden";
    case PopulationStatus::SilentSufferer: return "silent_sufferer";
    default: return "normal";
    }
}

PopulationStatus parse_population_status(const std::string& text) {
    if (text == "golden") return PopulationStatus::Golden;
    if (text == "silent_sufferer") return PopulationStatus::SilentSufferer;
    if (text == "normal") return PopulationStatus::Normal;
    throw InputError("unknown population status: " + text);
}

double label_change_rate(const std::vector<int>& prev_labels,
                         const std::vector<int>& new_labels) {
    if (prev_labels.size() != new_labels.size())
        throw InputError("label_change_rate: length mismatch");
    if (prev_labels.empty()) return 0;
    std::size_t flips = 0;
    for (std::size_t i = 0; i < prev_labels.size(); ++i)
        if (prev_labels[i] != new_labels[i]) ++flips;
    return static_cast<double>(flips) / static_cast<double>(prev_labels.size());
}

std::pair<double, bool> select_cutoff(const std::vector<double>& scores,
                                      const std::vector<int>& reference_labels, double beta) {
    if (scores.size() != reference_labels.size())
        throw InputError("select_cutoff: length mismatch");
    const bool has_pos = std::find(reference_labels.begin(), reference_labels.end(), 1) !=
                         reference_labels.end();
    const bool has_neg = std::find(reference_labels.begin(), reference_labels.end(), 0) !=
                         reference_labels.end();
    if (!has_pos || !has_neg) return {0.5, true};
    const auto best = metrics::max_f_beta({scores, reference_labels}, beta);
    return {best.threshold, false};
}

namespace {

FeatureMatrix vertical_concat(const FeatureMatrix& top, const FeatureMatrix& bottom) {
    if (top.feature_names != bottom.feature_names)
        throw InputError("spy_em: golden and mixed matrices must share columns");
    FeatureMatrix out;
    out.feature_names = top.feature_names;
    out.customer_ids = top.customer_ids;
    out.customer_ids.insert(out.customer_ids.end(), bottom.customer_ids.begin(),
                            bottom.customer_ids.end());
    out.columns.resize(top.cols());
    out.masks.resize(top.cols());
    for (std::size_t c = 0; c < top.cols(); ++c) {
        out.columns[c] = top.columns[c];
        out.columns[c].insert(out.columns[c].end(), bottom.columns[c].begin(),
                              bottom.columns[c].end());
        out.masks[c] = top.masks[c];
        out.masks[c].insert(out.masks[c].end(), bottom.masks[c].begin(), bottom.masks[c].end());
    }
    return out;
}

} // namespace

SpyEmEngine::SpyEmEngine(const FeatureMatrix& golden, const FeatureMatrix& mixed,
                         SpyEmConfig config)
    : golden_(golden), mixed_(mixed), config_(std::move(config)) {
    config_.validate();
    if (golden_.rows() < 20) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "spy_em: need at least 20 golden rows, got %zu",
                      golden_.rows());
        throw InputError(buf);
    }
    {
        std::set<std::string> seen(golden_.customer_ids.begin(), golden_.customer_ids.end());
        for (const auto& id : mixed_.customer_ids)
            if (seen.count(id))
                throw InputError("spy_em: customer in both golden and mixed sets: " + id);
    }
    combined_ = vertical_concat(golden_, mixed_);
    state_.mixed_labels.assign(mixed_.rows(), 0);

    const int n_golden = static_cast<int>(golden_.rows());
    std::vector<int> order(n_golden);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(derive_seed(config_.seed, "holdout"));
    std::shuffle(order.begin(), order.end(), rng);
    int n_holdout = static_cast<int>(std::lround(config_.holdout_fraction * n_golden));
    n_holdout = std::clamp(n_holdout, 1, n_golden - 2);
    state_.holdout_rows.assign(order.begin(), order.begin() + n_holdout);
    state_.train_golden_rows.assign(order.begin() + n_holdout, order.end());
    std::sort(state_.holdout_rows.begin(), state_.holdout_rows.end());
    std::sort(state_.train_golden_rows.begin(), state_.train_golden_rows.end());
}

bool SpyEmEngine::done() const {
    return state_.converged || state_.iteration >= config_.max_iterations;
}

StepResult SpyEmEngine::step(const std::vector<int>* spy_override) {
    const int k = state_.iteration + 1;
    StepResult result;

    if (mixed_.rows() == 0) {
        state_.iteration = k;
        state_.beta_history.push_back(0);
        state_.cutoff_history.push_back(0.5);
        state_.degenerate_cutoff.push_back(true);
        state_.recall_history.push_back(std::numeric_limits<double>::quiet_NaN());
        state_.current_spies.clear();
        state_.golden_scores.assign(golden_.rows(), std::numeric_limits<double>::quiet_NaN());
        state_.converged = true;
        result.beta = 0;
        result.cutoff = 0.5;
        result.degenerate_cutoff = true;
        result.holdout_recall = std::numeric_limits<double>::quiet_NaN();
        return result;
    }

    if (spy_override != nullptr) {
        std::set<int> eligible(state_.train_golden_rows.begin(), state_.train_golden_rows.end());
        for (int row : *spy_override)
            if (!eligible.count(row))
                throw InputError("spy_em: spy override row outside the training golden set");
        if (spy_override->empty())
            throw InputError("spy_em: spy override must not be empty");
        state_.current_spies = *spy_override;
    } else {
        std::vector<int> pool = state_.train_golden_rows;
        auto rng = make_rng(derive_seed(config_.seed, "spies", static_cast<std::uint64_t>(k)));
        std::shuffle(pool.begin(), pool.end(), rng);
        int n_spies = static_cast<int>(
            std::lround(config_.spy_fraction * static_cast<double>(pool.size())));
        n_spies = std::clamp(n_spies, 1, static_cast<int>(pool.size()));
        pool.resize(n_spies);
        std::sort(pool.begin(), pool.end());
        state_.current_spies = std::move(pool);
    }

    // M' = spies + mixed, spies labeled 1, mixed at current labels.
    std::vector<std::size_t> train_rows;
    std::vector<int> train_labels;
    train_rows.reserve(state_.current_spies.size() + mixed_.rows());
    for (int row : state_.current_spies) {
        train_rows.push_back(static_cast<std::size_t>(row));
        train_labels.push_back(1);
    }
    for (std::size_t m = 0; m < mixed_.rows(); ++m) {
        train_rows.push_back(golden_.rows() + m);
        train_labels.push_back(state_.mixed_labels[m]);
    }
    gbdt::TrainConfig base = config_.base;
    base.seed = derive_seed(config_.seed, "base", static_cast<std::uint64_t>(k));
    state_.model = gbdt::train(combined_.select_rows(train_rows), train_labels, base);
    state_.has_model = true;

    const std::vector<double> all_scores = gbdt::predict_proba(state_.model, combined_);
    state_.golden_scores.assign(all_scores.begin(), all_scores.begin() + golden_.rows());
    state_.mixed_scores.assign(all_scores.begin() + golden_.rows(), all_scores.end());

    // Cutoff reference: spies as positives, currently-negative mixed as negatives.
    std::vector<double> ref_scores;
    std::vector<int> ref_labels;
    for (int row : state_.current_spies) {
        ref_scores.push_back(state_.golden_scores[row]);
        ref_labels.push_back(1);
    }
    for (std::size_t m = 0; m < mixed_.rows(); ++m) {
        if (state_.mixed_labels[m] == 0) {
            ref_scores.push_back(state_.mixed_scores[m]);
            ref_labels.push_back(0);
        }
    }
    const auto [cutoff, degenerate] = select_cutoff(ref_scores, ref_labels, config_.cutoff_beta);

    std::vector<int> new_labels(mixed_.rows());
    for (std::size_t m = 0; m < mixed_.rows(); ++m)
        new_labels[m] = state_.mixed_scores[m] >= cutoff ? 1 : 0;
    const double beta = label_change_rate(state_.mixed_labels, new_labels);
    state_.mixed_labels = std::move(new_labels);

    int recalled = 0;
    for (int row : state_.holdout_rows)
        if (state_.golden_scores[row] >= cutoff) ++recalled;
    const double recall =
        static_cast<double>(recalled) / static_cast<double>(state_.holdout_rows.size());

    state_.iteration = k;
    state_.beta_history.push_back(beta);
    state_.cutoff_history.push_back(cutoff);
    state_.degenerate_cutoff.push_back(degenerate);
    state_.recall_history.push_back(recall);
    if (beta <= config_.theta) state_.converged = true;

    result.beta = beta;
    result.cutoff = cutoff;
    result.holdout_recall = recall;
    result.degenerate_cutoff = degenerate;
    return result;
}

LabeledPopulation SpyEmEngine::finalize() const {
    if (state_.iteration == 0)
        throw InputError("spy_em: finalize before any iteration");
    LabeledPopulation pop;
    pop.final_cutoff = state_.cutoff_history.back();
    pop.members.reserve(golden_.rows() + mixed_.rows());
    for (std::size_t g = 0; g < golden_.rows(); ++g)
        pop.members.push_back({golden_.customer_ids[g], PopulationStatus::Golden,
                               state_.golden_scores.empty() ? 0 : state_.golden_scores[g]});
    for (std::size_t m = 0; m < mixed_.rows(); ++m) {
        const auto status = state_.mixed_labels[m] == 1 ? PopulationStatus::SilentSufferer
                                                        : PopulationStatus::Normal;
        pop.members.push_back({mixed_.customer_ids[m], status, state_.mixed_scores[m]});
    }
    return pop;
}

std::pair<LabeledPopulation, SpyEmState> run_spy_em(const FeatureMatrix& golden,
                                                    const FeatureMatrix& mixed,
                                                    const SpyEmConfig& config) {
    SpyEmEngine engine(golden, mixed, config);
    while (!engine.done()) engine.step();
    return {engine.finalize(), engine.state()};
}

void write_labeled_population(const std::filesystem::path& path, const LabeledPopulation& pop) {
    CsvWriter writer(path, {"customer_id", "status", "score"});
    for (const auto& member : pop.members) {
        writer.write_row({member.customer_id, to_string(member.status),
                          std::isnan(member.score) ? "" : format_double(member.score)});
    }
}

LabeledPopulation read_labeled_population(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "status", "score"});
    LabeledPopulation pop;
    CsvRow row;
    while (reader.next(row)) {
        LabeledMember member;
        member.customer_id = row.fields[0];
        member.status = parse_population_status(row.fields[1]);
        member.score = row.fields[2].empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : reader.as_double(row, 2);
        pop.members.push_back(std::move(member));
    }
    return pop;
}

void write_spyem_trace(const std::filesystem::path& path, const SpyEmState& state) {
    CsvWriter writer(path, {"iteration", "beta", "holdout_recall", "cutoff"});
    for (std::size_t i = 0; i < state.beta_history.size(); ++i) {
        const double recall = state.recall_history[i];
        writer.write_row({std::to_string(i + 1), format_double(state.beta_history[i]),
                          std::isnan(recall) ? "" : format_double(recall),
                          format_double(state.cutoff_history[i])});
    }
}

std::vector<TraceRow> read_spyem_trace(const std::filesystem::path& path) {
    CsvReader reader(path, {"iteration", "beta", "holdout_recall", "cutoff"});
    std::vector<TraceRow> rows;
    CsvRow row;
    while (reader.next(row)) {
        TraceRow out;
        out.iteration = static_cast<int>(reader.as_int(row, 0));
        out.beta = reader.as_double(row, 1);
        out.holdout_recall = row.fields[2].empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : reader.as_double(row, 2);
        out.cutoff = reader.as_double(row, 3);
        rows.push_back(out);
    }
    return rows;
}

} // namespace dtk
