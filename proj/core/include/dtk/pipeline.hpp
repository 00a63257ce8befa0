#pragma once

#include "dtk/ab_test.hpp"
#include "dtk/causal.hpp"
#include "dtk/features.hpp"
#include "dtk/gbdt.hpp"
#include "dtk/generator.hpp"
#include "dtk/norm_box.hpp"
#include "dtk/spy_em.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace dtk {

// File-based pipeline: every stage reads and writes CSV/JSON artifacts in one
// run directory, so stages are independently runnable and a rerun with the
// same config and seed reproduces every byte.

struct LabelerConfig {
    AlphaPair gmv{1.0, 0.75};
    AlphaPair bi{1.5, 1.0};
    AlphaPair pd{1.25, 1.0};
    int fb_min_active_months = 6;

    AlphaPair alphas(Metric metric) const;
    void validate() const;
};

struct FeaturesConfig {
    std::vector<FeatureSpec> catalog = default_catalog();
    int top_k = 13;  // 0 keeps the full catalog

    void validate() const;
};

struct TrainSection {
    gbdt::TrainConfig gmv;
    gbdt::TrainConfig bi;
    gbdt::TrainConfig pd;

    const gbdt::TrainConfig& for_metric(Metric metric) const;
    gbdt::TrainConfig& for_metric(Metric metric);
};

struct CausalSection {
    causal::CausalConfig test;
    int decile_min = 7;

    void validate() const;
};

struct AbSection {
    AbConfig ab;
    double treatment_multiplier = 1.3;
    double post_noise_sd = 0.05;

    void validate() const;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    std::filesystem::path out_dir = "run";
    GeneratorConfig generator;
    LabelerConfig labeler;
    FeaturesConfig features;
    TrainSection train;
    CausalSection causal;
    SpyEmConfig spyem;
    AbSection abtest;

    void validate() const;
};

// JSON round trip. Loading starts from defaults; unknown keys are errors.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& config);

// Artifact locations inside the run directory. The override map lets stage
// commands point individual artifacts at other files ("scores" ->
// my_scores.csv); relative overrides resolve against the directory.
struct RunPaths {
    std::filesystem::path dir;
    std::map<std::string, std::filesystem::path> overrides;

    std::filesystem::path resolve(const std::string& key, const std::string& fallback) const;

    std::filesystem::path config_used() const { return resolve("config_used", "config_used.json"); }
    std::filesystem::path transactions() const { return resolve("transactions", "transactions.csv"); }
    std::filesystem::path bce() const { return resolve("bce", "bce.csv"); }
    std::filesystem::path ground_truth() const { return resolve("ground_truth", "ground_truth.csv"); }
    std::filesystem::path customers() const { return resolve("customers", "customers.csv"); }
    std::filesystem::path panel() const { return resolve("panel", "panel.csv"); }
    std::filesystem::path profiles() const { return resolve("profiles", "profiles.csv"); }
    std::filesystem::path labels(Metric m) const;
    std::filesystem::path event_rates(Metric m) const;
    std::filesystem::path features() const { return resolve("features", "features.csv"); }
    std::filesystem::path model(Metric m) const;
    std::filesystem::path metrics(Metric m) const;
    std::filesystem::path scores() const { return resolve("scores", "scores.csv"); }
    std::filesystem::path roc(Metric m) const;
    std::filesystem::path pr(Metric m) const;
    std::filesystem::path golden_set() const { return resolve("golden_set", "golden_set.json"); }
    std::filesystem::path golden_features() const { return resolve("golden_features", "golden.csv"); }
    std::filesystem::path mixed_features() const {
        return resolve("mixed_features", "mixed_features.csv");
    }
    std::filesystem::path causal_report() const {
        return resolve("causal_report", "causal_report.csv");
    }
    std::filesystem::path labeled_population() const {
        return resolve("labeled_population", "labeled_population.csv");
    }
    std::filesystem::path spyem_trace() const { return resolve("spyem_trace", "spyem_trace.csv"); }
    std::filesystem::path assignment() const { return resolve("assignment", "assignment.csv"); }
    std::filesystem::path post_period() const { return resolve("post_period", "post_period.csv"); }
    std::filesystem::path abtest_report() const {
        return resolve("abtest_report", "abtest_report.csv");
    }
    std::filesystem::path report() const { return resolve("report", "report.md"); }
};

// Per-stage seeds for `dtk run`; standalone stage commands take --seed
// directly as the stage seed.
std::uint64_t stage_seed(std::uint64_t master, const std::string& stage);

// Stage functions. Each reads its input artifacts through `paths` and writes
// its outputs there; missing inputs raise InputError naming the path.
void stage_generate(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed);
void stage_panel(const PipelineConfig& config, const RunPaths& paths);
LabelSummary stage_label(const PipelineConfig& config, const RunPaths& paths, Metric metric);
void stage_featurize(const PipelineConfig& config, const RunPaths& paths);
void stage_train(const PipelineConfig& config, const RunPaths& paths, Metric metric,
                 std::uint64_t seed);
void stage_score(const PipelineConfig& config, const RunPaths& paths);
void stage_causal(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed);
void stage_spyem(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed);
// use_existing_post reads post_period() instead of simulating it.
void stage_abtest(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed,
                  bool use_existing_post = false);
void stage_report(const PipelineConfig& config, const RunPaths& paths);

// Markdown report assembled purely from artifact files (report.cpp).
std::string render_report(const RunPaths& paths);

// generate -> panel -> label x3 -> featurize -> train x3 -> score -> causal
// -> spyem -> abtest -> report, with per-stage derived seeds. A failing stage
// aborts with its name in the message; earlier artifacts stay on disk.
void run_pipeline(const PipelineConfig& config);

} // namespace dtk
