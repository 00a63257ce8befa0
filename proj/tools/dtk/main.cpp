#include "dtk/errors.hpp"
#include "dtk/pipeline.hpp"
#include "dtk/rng.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::vector<dtk::Metric> metric_list(const std::string& text) {
    if (text == "all") return {dtk::Metric::GMV, dtk::Metric::BI, dtk::Metric::PD};
    return {dtk::parse_metric(text)};
}

struct StageSeed {
    CLI::Option* option = nullptr;
    std::uint64_t value = 0;

    // Explicit --seed on the stage wins; otherwise derive from the master.
    std::uint64_t resolve(std::uint64_t master, const std::string& stage) const {
        return option->count() ? value : dtk::stage_seed(master, stage);
    }
};

StageSeed add_stage_seed(CLI::App* sub) {
    StageSeed seed;
    seed.option = sub->add_option("--seed", seed.value, "seed for this stage");
    return seed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"customer downtrend detection toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t master_seed = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "pipeline config file (JSON)");
    auto* opt_seed = app.add_option("--seed", master_seed, "master seed (default 42)");
    auto* opt_out = app.add_option("--out", out_dir, "run directory (default run)");
    app.add_flag("--quiet", quiet, "suppress progress messages");

    auto* cmd_generate = app.add_subcommand("generate", "simulate the customer population");
    const StageSeed generate_seed = add_stage_seed(cmd_generate);

    auto* cmd_summarize =
        app.add_subcommand("summarize", "print generated-population counts and means");

    app.add_subcommand("panel", "build the monthly panel and segment profiles");

    auto* cmd_label = app.add_subcommand("label", "norm-box downward-trend labels");
    std::string label_metric = "all";
    double alpha_fb = 0, alpha_ib = 0;
    cmd_label->add_option("--metric", label_metric, "gmv|bi|pd|all (default all)");
    auto* opt_alpha_fb = cmd_label->add_option("--alpha-fb", alpha_fb, "frequent-buyer alpha");
    auto* opt_alpha_ib = cmd_label->add_option("--alpha-ib", alpha_ib, "infrequent-buyer alpha");

    app.add_subcommand("featurize", "build the feature matrix");

    auto* cmd_train = app.add_subcommand("train", "train the boosted-tree model per metric");
    std::string train_metric = "all";
    int trees = 0, depth = 0, top_k = -1;
    std::string model_out;
    cmd_train->add_option("--metric", train_metric, "gmv|bi|pd|all (default all)");
    auto* opt_trees = cmd_train->add_option("--trees", trees, "number of trees");
    auto* opt_depth = cmd_train->add_option("--depth", depth, "max tree depth");
    auto* opt_top_k = cmd_train->add_option("--top-k", top_k, "keep k features (0 = all)");
    auto* opt_model_out = cmd_train->add_option("--out", model_out, "model file (single metric)");
    const StageSeed train_seed = add_stage_seed(cmd_train);

    auto* cmd_score = app.add_subcommand("score", "score, bucket, and ensemble all customers");
    std::string models_arg, scores_out;
    cmd_score->add_option("--models", models_arg, "gmv,bi,pd model files (comma separated)");
    cmd_score->add_option("--out", scores_out, "scores file");

    auto* cmd_causal = app.add_subcommand("causal", "golden set and causal asymmetry test");
    std::string causal_scores, causal_bce;
    double causal_cl = 0;
    cmd_causal->add_option("--scores", causal_scores, "scores file");
    cmd_causal->add_option("--bce", causal_bce, "bce events file");
    auto* opt_causal_cl = cmd_causal->add_option("--cl", causal_cl, "confidence level");
    const StageSeed causal_seed = add_stage_seed(cmd_causal);

    auto* cmd_spyem = app.add_subcommand("spyem", "spy-EM silent-sufferer recovery");
    std::string spy_golden, spy_mixed;
    double theta = 0, spy_fraction = 0;
    int max_iter = 0;
    cmd_spyem->add_option("--golden", spy_golden, "golden feature rows");
    cmd_spyem->add_option("--mixed", spy_mixed, "mixed feature rows");
    auto* opt_theta = cmd_spyem->add_option("--theta", theta, "label-change stop threshold");
    auto* opt_max_iter = cmd_spyem->add_option("--max-iter", max_iter, "iteration cap");
    auto* opt_spy_fraction =
        cmd_spyem->add_option("--spy-fraction", spy_fraction, "golden fraction used as spies");
    const StageSeed spyem_seed = add_stage_seed(cmd_spyem);

    auto* cmd_abtest = app.add_subcommand("abtest", "campaign assignment and lift readout");
    std::string population_path, post_gmv_path;
    double test_fraction = 0, ab_cl = 0;
    cmd_abtest->add_option("--population", population_path, "labeled population file");
    auto* opt_post_gmv =
        cmd_abtest->add_option("--post-gmv", post_gmv_path, "existing post-period gmv file");
    auto* opt_test_fraction =
        cmd_abtest->add_option("--test-fraction", test_fraction, "test group fraction");
    auto* opt_ab_cl = cmd_abtest->add_option("--cl", ab_cl, "significance level");
    const StageSeed abtest_seed = add_stage_seed(cmd_abtest);

    app.add_subcommand("report", "render report.md from the run artifacts");
    app.add_subcommand("run", "execute the full pipeline");

    // Global flags are accepted after the subcommand too (dtk run --seed 7).
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        dtk::PipelineConfig config;
        if (!config_path.empty()) config = dtk::load_pipeline_config(config_path);
        if (opt_seed->count()) config.seed = master_seed;
        if (opt_out->count()) config.out_dir = out_dir;
        config.validate();

        dtk::RunPaths paths{config.out_dir};
        const auto note = [&](const std::string& message) {
            if (!quiet) std::cerr << "[dtk] " << message << "\n";
        };

        if (app.got_subcommand("run")) {
            note("running full pipeline into " + config.out_dir.string());
            dtk::run_pipeline(config);
            note("done");
            return 0;
        }
        if (app.got_subcommand(cmd_generate)) {
            note("generating population");
            dtk::stage_generate(config, paths, generate_seed.resolve(config.seed, "generate"));
            return 0;
        }
        if (app.got_subcommand(cmd_summarize)) {
            const auto transactions = dtk::read_transactions(paths.transactions());
            const auto truth = dtk::read_ground_truth(paths.ground_truth());
            const auto summary = dtk::summarize(transactions, truth, config.generator.window(),
                                                config.labeler.fb_min_active_months);
            std::cout << "customers: " << summary.customers << "\n"
                      << "sufferers: " << summary.sufferers << "\n"
                      << "silent_sufferers: " << summary.silent_sufferers << "\n"
                      << "reporters: " << summary.reporters << "\n"
                      << "mean_monthly_gmv_fb: " << summary.mean_monthly_gmv_fb << "\n"
                      << "mean_monthly_gmv_ib: " << summary.mean_monthly_gmv_ib << "\n";
            return 0;
        }
        if (app.got_subcommand("panel")) {
            note("building monthly panel");
            dtk::stage_panel(config, paths);
            return 0;
        }
        if (app.got_subcommand(cmd_label)) {
            const auto metrics = metric_list(label_metric);
            if ((opt_alpha_fb->count() || opt_alpha_ib->count()) && metrics.size() != 1)
                throw dtk::InputError("--alpha-fb/--alpha-ib need --metric gmv|bi|pd");
            for (dtk::Metric m : metrics) {
                dtk::AlphaPair& alphas = m == dtk::Metric::GMV  ? config.labeler.gmv
                                         : m == dtk::Metric::BI ? config.labeler.bi
                                                                : config.labeler.pd;
                if (opt_alpha_fb->count()) alphas.fb = alpha_fb;
                if (opt_alpha_ib->count()) alphas.ib = alpha_ib;
                note(std::string("labeling ") + dtk::to_string(m));
                dtk::stage_label(config, paths, m);
            }
            return 0;
        }
        if (app.got_subcommand("featurize")) {
            note("building feature matrix");
            dtk::stage_featurize(config, paths);
            return 0;
        }
        if (app.got_subcommand(cmd_train)) {
            const auto metrics = metric_list(train_metric);
            if (opt_model_out->count() && metrics.size() != 1)
                throw dtk::InputError("--out needs --metric gmv|bi|pd");
            if (opt_top_k->count()) config.features.top_k = top_k;
            const std::uint64_t base = train_seed.resolve(config.seed, "train");
            for (dtk::Metric m : metrics) {
                dtk::gbdt::TrainConfig& train_config = config.train.for_metric(m);
                if (opt_trees->count()) train_config.n_trees = trees;
                if (opt_depth->count()) train_config.max_depth = depth;
                if (opt_model_out->count())
                    paths.overrides["model_" + std::string(dtk::to_string(m))] = model_out;
                note(std::string("training ") + dtk::to_string(m));
                dtk::stage_train(config, paths, m, dtk::derive_seed(base, dtk::to_string(m)));
            }
            return 0;
        }
        if (app.got_subcommand(cmd_score)) {
            if (!models_arg.empty()) {
                std::vector<std::string> parts;
                std::size_t start = 0;
                while (true) {
                    const auto comma = models_arg.find(',', start);
                    parts.push_back(models_arg.substr(start, comma - start));
                    if (comma == std::string::npos) break;
                    start = comma + 1;
                }
                if (parts.size() != 3)
                    throw dtk::InputError("--models needs three files: gmv,bi,pd");
                paths.overrides["model_gmv"] = parts[0];
                paths.overrides["model_bi"] = parts[1];
                paths.overrides["model_pd"] = parts[2];
            }
            if (!scores_out.empty()) paths.overrides["scores"] = scores_out;
            note("scoring population");
            dtk::stage_score(config, paths);
            return 0;
        }
        if (app.got_subcommand(cmd_causal)) {
            if (!causal_scores.empty()) paths.overrides["scores"] = causal_scores;
            if (!causal_bce.empty()) paths.overrides["bce"] = causal_bce;
            if (opt_causal_cl->count()) config.causal.test.cl = causal_cl;
            note("running causal asymmetry test");
            dtk::stage_causal(config, paths, causal_seed.resolve(config.seed, "causal"));
            return 0;
        }
        if (app.got_subcommand(cmd_spyem)) {
            if (!spy_golden.empty()) paths.overrides["golden_features"] = spy_golden;
            if (!spy_mixed.empty()) paths.overrides["mixed_features"] = spy_mixed;
            if (opt_theta->count()) config.spyem.theta = theta;
            if (opt_max_iter->count()) config.spyem.max_iterations = max_iter;
            if (opt_spy_fraction->count()) config.spyem.spy_fraction = spy_fraction;
            note("running spy-EM");
            dtk::stage_spyem(config, paths, spyem_seed.resolve(config.seed, "spyem"));
            return 0;
        }
        if (app.got_subcommand(cmd_abtest)) {
            if (!population_path.empty()) paths.overrides["labeled_population"] = population_path;
            if (opt_post_gmv->count()) paths.overrides["post_period"] = post_gmv_path;
            if (opt_test_fraction->count()) config.abtest.ab.test_fraction = test_fraction;
            if (opt_ab_cl->count()) config.abtest.ab.cl = ab_cl;
            note("running campaign readout");
            dtk::stage_abtest(config, paths, abtest_seed.resolve(config.seed, "abtest"),
                              opt_post_gmv->count() > 0);
            return 0;
        }
        if (app.got_subcommand("report")) {
            note("rendering report");
            dtk::stage_report(config, paths);
            return 0;
        }
        throw dtk::InputError("no subcommand given");
    } catch (const dtk::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
