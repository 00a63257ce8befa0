#include "dtk/pipeline.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"
#include "dtk/metrics.hpp"
#include "dtk/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace dtk {

using nlohmann::json;

AlphaPair LabelerConfig::alphas(Metric metric) const {
    switch (metric) {
    case Metric::GMV: return gmv;
    case Metric::BI: return bi;
    default: return pd;
    }
}

void LabelerConfig::validate() const {
    for (Metric m : {Metric::GMV, Metric::BI, Metric::PD}) {
        const AlphaPair a = alphas(m);
        if (!(a.fb > 0 && a.ib > 0))
            throw InputError("config: labeler alphas must be positive");
    }
    if (fb_min_active_months < 0 || fb_min_active_months > kHistoryMonths)
        throw InputError("config: labeler.fb_min_active_months must be in 0..12");
}

void FeaturesConfig::validate() const {
    if (catalog.empty())
        throw InputError("config: features.catalog must not be empty");
    if (top_k < 0)
        throw InputError("config: features.top_k must be >= 0");
}

const gbdt::TrainConfig& TrainSection::for_metric(Metric metric) const {
    switch (metric) {
    case Metric::GMV: return gmv;
    case Metric::BI: return bi;
    default: return pd;
    }
}

gbdt::TrainConfig& TrainSection::for_metric(Metric metric) {
    switch (metric) {
    case Metric::GMV: return gmv;
    case Metric::BI: return bi;
    default: return pd;
    }
}

void CausalSection::validate() const {
    if (!(test.cl > 0 && test.cl < 1))
        throw InputError("config: causal.cl must be in (0,1)");
    if (test.n_permutations < 1)
        throw InputError("config: causal.n_permutations must be >= 1");
    if (test.min_sample < 2)
        throw InputError("config: causal.min_sample must be >= 2");
    if (decile_min < 1 || decile_min > 10)
        throw InputError("config: causal.decile_min must be in 1..10");
}

void AbSection::validate() const {
    ab.validate();
    if (!(treatment_multiplier > 0))
        throw InputError("config: abtest.treatment_multiplier must be > 0");
    if (!(post_noise_sd >= 0))
        throw InputError("config: abtest.post_noise_sd must be >= 0");
}

void PipelineConfig::validate() const {
    generator.validate();
    labeler.validate();
    features.validate();
    for (Metric m : {Metric::GMV, Metric::BI, Metric::PD}) train.for_metric(m).validate();
    causal.validate();
    spyem.validate();
    abtest.validate();
    if (out_dir.empty())
        throw InputError("config: out_dir must not be empty");
}

namespace {

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw InputError("config: unknown key " + (section.empty() ? key : section + "." + key));
}

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            unknown_key(section, key);
    }
}

double get_num(const json& obj, const char* key, double fallback) {
    return obj.contains(key) ? obj.at(key).get<double>() : fallback;
}

int get_int(const json& obj, const char* key, int fallback) {
    return obj.contains(key) ? obj.at(key).get<int>() : fallback;
}

YearMonth parse_year_month(const std::string& text) {
    const auto dash = text.find('-');
    if (dash == std::string::npos)
        throw InputError("config: target month must look like YYYY-MM, got " + text);
    try {
        const int year = std::stoi(text.substr(0, dash));
        const int month = std::stoi(text.substr(dash + 1));
        if (month < 1 || month > 12) throw std::out_of_range("month");
        return YearMonth{year, month};
    } catch (const std::exception&) {
        throw InputError("config: target month must look like YYYY-MM, got " + text);
    }
}

std::string year_month_string(YearMonth ym) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", ym.year, ym.month);
    return buf;
}

void apply_generator(const json& obj, GeneratorConfig& g) {
    check_keys(obj, "generator",
               {"n_customers", "fb_fraction", "baseline_log_mean", "baseline_log_sd",
                "fb_purchase_prob", "ib_purchase_prob", "fb_tx_rate", "ib_tx_rate", "tx_noise_sd",
                "item_rate", "noise_sd", "spike_prob", "spike_scale",
                "bce_rate_per_transaction", "p_suffer",
                "p_report", "suffer_effect", "suffer_first_month", "suffer_last_month",
                "drift_fraction", "drift_rate_min", "drift_rate_max", "drift_floor", "target",
                "countries", "country_weights"});
    g.n_customers = get_int(obj, "n_customers", g.n_customers);
    g.fb_fraction = get_num(obj, "fb_fraction", g.fb_fraction);
    g.baseline_log_mean = get_num(obj, "baseline_log_mean", g.baseline_log_mean);
    g.baseline_log_sd = get_num(obj, "baseline_log_sd", g.baseline_log_sd);
    g.fb_purchase_prob = get_num(obj, "fb_purchase_prob", g.fb_purchase_prob);
    g.ib_purchase_prob = get_num(obj, "ib_purchase_prob", g.ib_purchase_prob);
    g.fb_tx_rate = get_num(obj, "fb_tx_rate", g.fb_tx_rate);
    g.ib_tx_rate = get_num(obj, "ib_tx_rate", g.ib_tx_rate);
    g.tx_noise_sd = get_num(obj, "tx_noise_sd", g.tx_noise_sd);
    g.item_rate = get_num(obj, "item_rate", g.item_rate);
    g.noise_sd = get_num(obj, "noise_sd", g.noise_sd);
    g.spike_prob = get_num(obj, "spike_prob", g.spike_prob);
    g.spike_scale = get_num(obj, "spike_scale", g.spike_scale);
    g.bce_rate_per_transaction = get_num(obj, "bce_rate_per_transaction", g.bce_rate_per_transaction);
    g.p_suffer = get_num(obj, "p_suffer", g.p_suffer);
    g.p_report = get_num(obj, "p_report", g.p_report);
    g.suffer_effect = get_num(obj, "suffer_effect", g.suffer_effect);
    g.suffer_first_month = get_int(obj, "suffer_first_month", g.suffer_first_month);
    g.suffer_last_month = get_int(obj, "suffer_last_month", g.suffer_last_month);
    g.drift_fraction = get_num(obj, "drift_fraction", g.drift_fraction);
    g.drift_rate_min = get_num(obj, "drift_rate_min", g.drift_rate_min);
    g.drift_rate_max = get_num(obj, "drift_rate_max", g.drift_rate_max);
    g.drift_floor = get_num(obj, "drift_floor", g.drift_floor);
    if (obj.contains("target")) g.target = parse_year_month(obj.at("target").get<std::string>());
    if (obj.contains("countries")) g.countries = obj.at("countries").get<std::vector<std::string>>();
    if (obj.contains("country_weights"))
        g.country_weights = obj.at("country_weights").get<std::vector<double>>();
}

json generator_to_json(const GeneratorConfig& g) {
    return json{{"n_customers", g.n_customers},
                {"fb_fraction", g.fb_fraction},
                {"baseline_log_mean", g.baseline_log_mean},
                {"baseline_log_sd", g.baseline_log_sd},
                {"fb_purchase_prob", g.fb_purchase_prob},
                {"ib_purchase_prob", g.ib_purchase_prob},
                {"fb_tx_rate", g.fb_tx_rate},
                {"ib_tx_rate", g.ib_tx_rate},
                {"tx_noise_sd", g.tx_noise_sd},
                {"item_rate", g.item_rate},
                {"noise_sd", g.noise_sd},
                {"spike_prob", g.spike_prob},
                {"spike_scale", g.spike_scale},
                {"bce_rate_per_transaction", g.bce_rate_per_transaction},
                {"p_suffer", g.p_suffer},
                {"p_report", g.p_report},
                {"suffer_effect", g.suffer_effect},
                {"suffer_first_month", g.suffer_first_month},
                {"suffer_last_month", g.suffer_last_month},
                {"drift_fraction", g.drift_fraction},
                {"drift_rate_min", g.drift_rate_min},
                {"drift_rate_max", g.drift_rate_max},
                {"drift_floor", g.drift_floor},
                {"target", year_month_string(g.target)},
                {"countries", g.countries},
                {"country_weights", g.country_weights}};
}

void apply_alpha_pair(const json& obj, const std::string& section, AlphaPair& pair) {
    check_keys(obj, section, {"fb", "ib"});
    pair.fb = get_num(obj, "fb", pair.fb);
    pair.ib = get_num(obj, "ib", pair.ib);
}

void apply_labeler(const json& obj, LabelerConfig& l) {
    check_keys(obj, "labeler", {"fb_min_active_months", "alphas"});
    l.fb_min_active_months = get_int(obj, "fb_min_active_months", l.fb_min_active_months);
    if (obj.contains("alphas")) {
        const json& alphas = obj.at("alphas");
        check_keys(alphas, "labeler.alphas", {"gmv", "bi", "pd"});
        if (alphas.contains("gmv")) apply_alpha_pair(alphas.at("gmv"), "labeler.alphas.gmv", l.gmv);
        if (alphas.contains("bi")) apply_alpha_pair(alphas.at("bi"), "labeler.alphas.bi", l.bi);
        if (alphas.contains("pd")) apply_alpha_pair(alphas.at("pd"), "labeler.alphas.pd", l.pd);
    }
}

json labeler_to_json(const LabelerConfig& l) {
    return json{{"fb_min_active_months", l.fb_min_active_months},
                {"alphas",
                 {{"gmv", {{"fb", l.gmv.fb}, {"ib", l.gmv.ib}}},
                  {"bi", {{"fb", l.bi.fb}, {"ib", l.bi.ib}}},
                  {"pd", {{"fb", l.pd.fb}, {"ib", l.pd.ib}}}}}};
}

const std::map<std::string, FeatureFamily>& family_names() {
    static const std::map<std::string, FeatureFamily> names = {
        {"ratio_recent_to_year", FeatureFamily::ratio_recent_to_year},
        {"gap_stat", FeatureFamily::gap_stat},
        {"below_std_flag", FeatureFamily::below_std_flag},
        {"count", FeatureFamily::count},
        {"bce_recency", FeatureFamily::bce_recency},
        {"bce_rate", FeatureFamily::bce_rate},
        {"categorical", FeatureFamily::categorical}};
    return names;
}

std::string family_string(FeatureFamily family) {
    for (const auto& [name, value] : family_names())
        if (value == family) return name;
    return "count";
}

const std::map<std::string, GapStat>& gap_stat_names() {
    static const std::map<std::string, GapStat> names = {
        {"mean", GapStat::mean}, {"median", GapStat::median}, {"std", GapStat::std_dev}};
    return names;
}

std::string gap_stat_string(GapStat stat) {
    for (const auto& [name, value] : gap_stat_names())
        if (value == stat) return name;
    return "mean";
}

const std::map<std::string, CountSource>& count_source_names() {
    static const std::map<std::string, CountSource> names = {
        {"transactions", CountSource::transactions},
        {"items", CountSource::items},
        {"purchase_days", CountSource::purchase_days},
        {"bce_events", CountSource::bce_events}};
    return names;
}

std::string count_source_string(CountSource source) {
    for (const auto& [name, value] : count_source_names())
        if (value == source) return name;
    return "transactions";
}

FeatureSpec spec_from_json(const json& obj) {
    check_keys(obj, "features.catalog[]",
               {"name", "family", "metric", "k_days", "w_months", "q", "stat", "source"});
    FeatureSpec spec;
    spec.name = obj.at("name").get<std::string>();
    const std::string family = obj.at("family").get<std::string>();
    auto it = family_names().find(family);
    if (it == family_names().end())
        throw InputError("config: unknown feature family " + family);
    spec.family = it->second;
    if (obj.contains("metric")) spec.metric = parse_metric(obj.at("metric").get<std::string>());
    spec.k_days = get_int(obj, "k_days", spec.k_days);
    spec.w_months = get_int(obj, "w_months", spec.w_months);
    spec.q = get_num(obj, "q", spec.q);
    if (obj.contains("stat")) {
        auto st = gap_stat_names().find(obj.at("stat").get<std::string>());
        if (st == gap_stat_names().end())
            throw InputError("config: unknown gap stat " + obj.at("stat").get<std::string>());
        spec.stat = st->second;
    }
    if (obj.contains("source")) {
        auto so = count_source_names().find(obj.at("source").get<std::string>());
        if (so == count_source_names().end())
            throw InputError("config: unknown count source " + obj.at("source").get<std::string>());
        spec.source = so->second;
    }
    return spec;
}

json spec_to_json(const FeatureSpec& spec) {
    return json{{"name", spec.name},
                {"family", family_string(spec.family)},
                {"metric", to_string(spec.metric)},
                {"k_days", spec.k_days},
                {"w_months", spec.w_months},
                {"q", spec.q},
                {"stat", gap_stat_string(spec.stat)},
                {"source", count_source_string(spec.source)}};
}

void apply_features(const json& obj, FeaturesConfig& f) {
    check_keys(obj, "features", {"top_k", "catalog"});
    f.top_k = get_int(obj, "top_k", f.top_k);
    if (obj.contains("catalog")) {
        f.catalog.clear();
        for (const json& item : obj.at("catalog")) f.catalog.push_back(spec_from_json(item));
    }
}

void apply_train_config(const json& obj, const std::string& section, gbdt::TrainConfig& t) {
    check_keys(obj, section,
               {"n_trees", "max_depth", "learning_rate", "min_samples_leaf",
                "validation_fraction"});
    t.n_trees = get_int(obj, "n_trees", t.n_trees);
    t.max_depth = get_int(obj, "max_depth", t.max_depth);
    t.learning_rate = get_num(obj, "learning_rate", t.learning_rate);
    t.min_samples_leaf = get_int(obj, "min_samples_leaf", t.min_samples_leaf);
    t.validation_fraction = get_num(obj, "validation_fraction", t.validation_fraction);
}

json train_config_to_json(const gbdt::TrainConfig& t) {
    return json{{"n_trees", t.n_trees},
                {"max_depth", t.max_depth},
                {"learning_rate", t.learning_rate},
                {"min_samples_leaf", t.min_samples_leaf},
                {"validation_fraction", t.validation_fraction}};
}

void apply_causal(const json& obj, CausalSection& c) {
    check_keys(obj, "causal", {"cl", "n_permutations", "min_sample", "decile_min"});
    c.test.cl = get_num(obj, "cl", c.test.cl);
    c.test.n_permutations = get_int(obj, "n_permutations", c.test.n_permutations);
    c.test.min_sample = get_int(obj, "min_sample", c.test.min_sample);
    c.decile_min = get_int(obj, "decile_min", c.decile_min);
}

void apply_spyem(const json& obj, SpyEmConfig& s) {
    check_keys(obj, "spyem",
               {"spy_fraction", "theta", "max_iterations", "holdout_fraction", "cutoff_beta",
                "base"});
    s.spy_fraction = get_num(obj, "spy_fraction", s.spy_fraction);
    s.theta = get_num(obj, "theta", s.theta);
    s.max_iterations = get_int(obj, "max_iterations", s.max_iterations);
    s.holdout_fraction = get_num(obj, "holdout_fraction", s.holdout_fraction);
    s.cutoff_beta = get_num(obj, "cutoff_beta", s.cutoff_beta);
    if (obj.contains("base")) apply_train_config(obj.at("base"), "spyem.base", s.base);
}

void apply_abtest(const json& obj, AbSection& a) {
    check_keys(obj, "abtest",
               {"test_fraction", "stratum_fractions", "cl", "treatment_multiplier",
                "post_noise_sd"});
    a.ab.test_fraction = get_num(obj, "test_fraction", a.ab.test_fraction);
    if (obj.contains("stratum_fractions")) {
        const json& fractions = obj.at("stratum_fractions");
        check_keys(fractions, "abtest.stratum_fractions", {"golden", "silent_sufferer"});
        a.ab.stratum_fractions.clear();
        for (const auto& [key, value] : fractions.items())
            a.ab.stratum_fractions[key] = value.get<double>();
    }
    a.ab.cl = get_num(obj, "cl", a.ab.cl);
    a.treatment_multiplier = get_num(obj, "treatment_multiplier", a.treatment_multiplier);
    a.post_noise_sd = get_num(obj, "post_noise_sd", a.post_noise_sd);
}

} // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("config file not found: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    if (!doc.is_object())
        throw InputError("config " + path.string() + ": top level must be an object");
    check_keys(doc, "",
               {"seed", "out_dir", "generator", "labeler", "features", "train", "causal",
                "spyem", "abtest"});

    PipelineConfig config;
    try {
        if (doc.contains("seed")) config.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("out_dir")) config.out_dir = doc.at("out_dir").get<std::string>();
        if (doc.contains("generator")) apply_generator(doc.at("generator"), config.generator);
        if (doc.contains("labeler")) apply_labeler(doc.at("labeler"), config.labeler);
        if (doc.contains("features")) apply_features(doc.at("features"), config.features);
        if (doc.contains("train")) {
            const json& train = doc.at("train");
            check_keys(train, "train", {"gmv", "bi", "pd"});
            if (train.contains("gmv")) apply_train_config(train.at("gmv"), "train.gmv", config.train.gmv);
            if (train.contains("bi")) apply_train_config(train.at("bi"), "train.bi", config.train.bi);
            if (train.contains("pd")) apply_train_config(train.at("pd"), "train.pd", config.train.pd);
        }
        if (doc.contains("causal")) apply_causal(doc.at("causal"), config.causal);
        if (doc.contains("spyem")) apply_spyem(doc.at("spyem"), config.spyem);
        if (doc.contains("abtest")) apply_abtest(doc.at("abtest"), config.abtest);
    } catch (const json::exception& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    config.validate();
    return config;
}

std::string pipeline_config_to_json(const PipelineConfig& config) {
    json catalog = json::array();
    for (const auto& spec : config.features.catalog) catalog.push_back(spec_to_json(spec));
    json fractions = json::object();
    for (const auto& [name, value] : config.abtest.ab.stratum_fractions) fractions[name] = value;
    json doc{
        {"seed", config.seed},
        {"out_dir", config.out_dir.string()},
        {"generator", generator_to_json(config.generator)},
        {"labeler", labeler_to_json(config.labeler)},
        {"features", {{"top_k", config.features.top_k}, {"catalog", catalog}}},
        {"train",
         {{"gmv", train_config_to_json(config.train.gmv)},
          {"bi", train_config_to_json(config.train.bi)},
          {"pd", train_config_to_json(config.train.pd)}}},
        {"causal",
         {{"cl", config.causal.test.cl},
          {"n_permutations", config.causal.test.n_permutations},
          {"min_sample", config.causal.test.min_sample},
          {"decile_min", config.causal.decile_min}}},
        {"spyem",
         {{"spy_fraction", config.spyem.spy_fraction},
          {"theta", config.spyem.theta},
          {"max_iterations", config.spyem.max_iterations},
          {"holdout_fraction", config.spyem.holdout_fraction},
          {"cutoff_beta", config.spyem.cutoff_beta},
          {"base", train_config_to_json(config.spyem.base)}}},
        {"abtest",
         {{"test_fraction", config.abtest.ab.test_fraction},
          {"stratum_fractions", fractions},
          {"cl", config.abtest.ab.cl},
          {"treatment_multiplier", config.abtest.treatment_multiplier},
          {"post_noise_sd", config.abtest.post_noise_sd}}}};
    return doc.dump(2) + "\n";
}

std::filesystem::path RunPaths::labels(Metric m) const {
    const std::string name = "labels_" + std::string(to_string(m));
    return resolve(name, name + ".csv");
}
std::filesystem::path RunPaths::event_rates(Metric m) const {
    const std::string name = "event_rates_" + std::string(to_string(m));
    return resolve(name, name + ".csv");
}
std::filesystem::path RunPaths::model(Metric m) const {
    const std::string name = "model_" + std::string(to_string(m));
    return resolve(name, name + ".json");
}
std::filesystem::path RunPaths::metrics(Metric m) const {
    const std::string name = "metrics_" + std::string(to_string(m));
    return resolve(name, name + ".csv");
}
std::filesystem::path RunPaths::roc(Metric m) const {
    const std::string name = "roc_" + std::string(to_string(m));
    return resolve(name, name + ".csv");
}
std::filesystem::path RunPaths::pr(Metric m) const {
    const std::string name = "pr_" + std::string(to_string(m));
    return resolve(name, name + ".csv");
}

std::uint64_t stage_seed(std::uint64_t master, const std::string& stage) {
    return derive_seed(master, stage);
}

std::filesystem::path RunPaths::resolve(const std::string& key,
                                        const std::string& fallback) const {
    auto it = overrides.find(key);
    if (it == overrides.end()) return dir / fallback;
    return it->second.is_absolute() ? it->second : dir / it->second;
}

namespace {

void require_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw InputError("missing input file: " + path.string());
}

MonthlyPanel load_panel(const PipelineConfig& config, const RunPaths& paths) {
    require_file(paths.panel());
    return read_panel(paths.panel(), config.generator.window());
}

std::unordered_map<std::string, std::string> country_map(const RunPaths& paths) {
    std::unordered_map<std::string, std::string> countries;
    if (std::filesystem::exists(paths.customers())) {
        for (const auto& [id, country] : read_customers(paths.customers()))
            countries.emplace(id, country);
    }
    return countries;
}

struct ScoresTable {
    std::vector<std::string> ids;
    std::vector<double> p[3];       // gmv, bi, pd
    std::vector<int> deciles[3];
    std::vector<int> ensemble;
};

ScoresTable read_scores(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "p_gmv", "p_bi", "p_pd", "decile_gmv", "decile_bi",
                            "decile_pd", "ensemble_bucket"});
    ScoresTable table;
    CsvRow row;
    while (reader.next(row)) {
        table.ids.push_back(row.fields[0]);
        for (int m = 0; m < 3; ++m) table.p[m].push_back(reader.as_double(row, 1 + m));
        for (int m = 0; m < 3; ++m)
            table.deciles[m].push_back(static_cast<int>(reader.as_int(row, 4 + m)));
        table.ensemble.push_back(static_cast<int>(reader.as_int(row, 7)));
    }
    return table;
}

// Rows of `matrix` having a scoreable label, with their 0/1 targets.
std::pair<std::vector<std::size_t>, std::vector<int>> labeled_rows(
    const FeatureMatrix& matrix, const LabelSummary& summary) {
    std::unordered_map<std::string, const DownwardLabel*> by_id;
    for (const auto& label : summary.labels) by_id.emplace(label.customer_id, &label);
    std::vector<std::size_t> rows;
    std::vector<int> targets;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        auto it = by_id.find(matrix.customer_ids[r]);
        if (it == by_id.end() || !it->second->scoreable) continue;
        rows.push_back(r);
        targets.push_back(it->second->is_downward ? 1 : 0);
    }
    return {rows, targets};
}

} // namespace

void stage_generate(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed) {
    std::filesystem::create_directories(paths.dir);
    GeneratorConfig generator = config.generator;
    generator.seed = seed;
    const GeneratedData data = generate(generator);
    write_transactions(paths.transactions(), data.transactions);
    write_bce_events(paths.bce(), data.bce_events);
    write_ground_truth(paths.ground_truth(), data.ground_truth);
    write_customers(paths.customers(), data.customer_countries);
}

void stage_panel(const PipelineConfig& config, const RunPaths& paths) {
    require_file(paths.transactions());
    const auto transactions = read_transactions(paths.transactions());
    const MonthlyPanel panel = build_monthly_panel(transactions, config.generator.window());
    write_panel(paths.panel(), panel);
    const auto profiles =
        assign_segment(panel, config.labeler.fb_min_active_months, country_map(paths));
    write_profiles(paths.profiles(), profiles);
}

LabelSummary stage_label(const PipelineConfig& config, const RunPaths& paths, Metric metric) {
    require_file(paths.profiles());
    const MonthlyPanel panel = load_panel(config, paths);
    const auto profiles = read_profiles(paths.profiles());
    const AlphaPair alphas = config.labeler.alphas(metric);
    const LabelSummary summary = label_panel(panel, metric, alphas.fb, alphas.ib, profiles);
    write_labels(paths.labels(metric), summary);

    std::unordered_map<std::string, Segment> segment_of;
    for (const auto& profile : profiles) segment_of.emplace(profile.customer_id, profile.segment);
    CsvWriter rates(paths.event_rates(metric),
                    {"metric", "segment", "alpha", "customers", "positives", "event_rate"});
    for (Segment segment : {Segment::FB, Segment::IB}) {
        std::size_t customers = 0;
        std::size_t positives = 0;
        for (const auto& label : summary.labels) {
            auto it = segment_of.find(label.customer_id);
            if (it == segment_of.end() || it->second != segment) continue;
            ++customers;
            if (label.is_downward) ++positives;
        }
        const double rate =
            customers == 0 ? 0 : static_cast<double>(positives) / static_cast<double>(customers);
        rates.write_row({to_string(metric), to_string(segment),
                         format_double(segment == Segment::FB ? alphas.fb : alphas.ib),
                         std::to_string(customers), std::to_string(positives),
                         format_double(rate)});
    }
    rates.write_row({to_string(metric), "all", "", std::to_string(summary.labels.size()),
                     std::to_string(summary.positives), format_double(summary.event_rate)});
    return summary;
}

void stage_featurize(const PipelineConfig& config, const RunPaths& paths) {
    require_file(paths.transactions());
    require_file(paths.bce());
    require_file(paths.profiles());
    const auto transactions = read_transactions(paths.transactions());
    const auto bce = read_bce_events(paths.bce());
    const auto profiles = read_profiles(paths.profiles());
    const MonthlyPanel panel = load_panel(config, paths);
    const FeatureMatrix matrix =
        build_feature_matrix(transactions, bce, profiles, panel, config.features.catalog,
                             config.generator.window().as_of());
    write_feature_matrix(paths.features(), matrix);
}

void stage_train(const PipelineConfig& config, const RunPaths& paths, Metric metric,
                 std::uint64_t seed) {
    require_file(paths.features());
    require_file(paths.labels(metric));
    const FeatureMatrix matrix = read_feature_matrix(paths.features());
    const LabelSummary summary = read_labels(paths.labels(metric));
    const auto [rows, targets] = labeled_rows(matrix, summary);
    if (rows.empty())
        throw InputError("train: no scoreable labeled rows for metric " +
                         std::string(to_string(metric)));
    const FeatureMatrix aligned = matrix.select_rows(rows);

    gbdt::TrainConfig train_config = config.train.for_metric(metric);
    const auto [train_rows, holdout_rows] =
        gbdt::stratified_split(targets, train_config.validation_fraction,
                               derive_seed(seed, "holdout"));
    if (train_rows.empty() || holdout_rows.empty())
        throw InputError("train: validation_fraction leaves an empty split");
    std::vector<int> y_train, y_holdout;
    for (std::size_t r : train_rows) y_train.push_back(targets[r]);
    for (std::size_t r : holdout_rows) y_holdout.push_back(targets[r]);
    FeatureMatrix train_matrix = aligned.select_rows(train_rows);

    if (config.features.top_k > 0 &&
        static_cast<std::size_t>(config.features.top_k) < train_matrix.cols()) {
        gbdt::TrainConfig rough = train_config;
        rough.seed = derive_seed(seed, "rough");
        const auto keep =
            gbdt::select_top_k(train_matrix, y_train, rough, config.features.top_k);
        train_matrix = train_matrix.select_columns(keep);
    }

    gbdt::TrainConfig final_config = train_config;
    final_config.seed = derive_seed(seed, "final");
    const gbdt::Model model = gbdt::train(train_matrix, y_train, final_config);
    gbdt::save_model(paths.model(metric), model);

    const FeatureMatrix holdout_matrix = aligned.select_rows(holdout_rows);
    metrics::ScoredSet scored{gbdt::predict_proba(model, holdout_matrix), y_holdout};
    const double auc = metrics::roc_auc(scored);
    const auto f1 = metrics::max_f_beta(scored, 1.0);
    const auto mpca = metrics::max_min_per_class_accuracy(scored);
    const double loss = metrics::log_loss(scored);
    CsvWriter out(paths.metrics(metric),
                  {"metric", "n_train", "n_holdout", "auc", "max_f1", "f1_threshold",
                   "min_per_class_accuracy", "mpca_threshold", "log_loss"});
    out.write_row({to_string(metric), std::to_string(train_rows.size()),
                   std::to_string(holdout_rows.size()), format_double(auc),
                   format_double(f1.value), format_double(f1.threshold),
                   format_double(mpca.value), format_double(mpca.threshold),
                   format_double(loss)});
}

void stage_score(const PipelineConfig& config, const RunPaths& paths) {
    require_file(paths.features());
    const FeatureMatrix matrix = read_feature_matrix(paths.features());
    const Metric metrics_list[3] = {Metric::GMV, Metric::BI, Metric::PD};

    std::vector<double> p[3];
    std::vector<int> deciles[3];
    for (int m = 0; m < 3; ++m) {
        require_file(paths.model(metrics_list[m]));
        const gbdt::Model model = gbdt::load_model(paths.model(metrics_list[m]));
        p[m] = gbdt::predict_proba(model, matrix);
        deciles[m] = metrics::decile_bucket(p[m], matrix.customer_ids);
    }
    const std::vector<int> ensemble = metrics::ensemble_max(deciles[0], deciles[1], deciles[2]);

    CsvWriter out(paths.scores(), {"customer_id", "p_gmv", "p_bi", "p_pd", "decile_gmv",
                                   "decile_bi", "decile_pd", "ensemble_bucket"});
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        out.write_row({matrix.customer_ids[r], format_double(p[0][r]), format_double(p[1][r]),
                       format_double(p[2][r]), std::to_string(deciles[0][r]),
                       std::to_string(deciles[1][r]), std::to_string(deciles[2][r]),
                       std::to_string(ensemble[r])});
    }

    for (int m = 0; m < 3; ++m) {
        if (!std::filesystem::exists(paths.labels(metrics_list[m]))) continue;
        const LabelSummary summary = read_labels(paths.labels(metrics_list[m]));
        const auto [rows, targets] = labeled_rows(matrix, summary);
        if (rows.empty()) continue;
        metrics::ScoredSet scored;
        scored.labels = targets;
        for (std::size_t r : rows) scored.scores.push_back(p[m][r]);
        CsvWriter roc(paths.roc(metrics_list[m]), {"threshold", "tpr", "fpr"});
        for (const auto& point : metrics::roc_points(scored))
            roc.write_row({format_double(point.threshold), format_double(point.tpr),
                           format_double(point.fpr)});
        CsvWriter pr(paths.pr(metrics_list[m]), {"threshold", "precision", "recall"});
        for (const auto& point : metrics::pr_points(scored))
            pr.write_row({format_double(point.threshold), format_double(point.precision),
                          format_double(point.recall)});
    }
}

void stage_causal(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed) {
    require_file(paths.scores());
    require_file(paths.bce());
    require_file(paths.transactions());
    require_file(paths.profiles());
    require_file(paths.features());
    const ScoresTable scores = read_scores(paths.scores());
    const auto bce = read_bce_events(paths.bce());
    const auto transactions = read_transactions(paths.transactions());
    const auto profiles = read_profiles(paths.profiles());
    const Date as_of = config.generator.window().as_of();

    const causal::GoldenSet golden =
        causal::build_golden_set(scores.ids, scores.ensemble, bce, transactions, as_of,
                                 config.causal.decile_min);
    if (golden.ids.empty())
        std::cerr << "warning: golden set is empty\n";
    {
        json doc{{"decile_min", golden.decile_min},
                 {"rule", golden.rule},
                 {"n_members", golden.ids.size()},
                 {"ids", golden.ids}};
        std::ofstream out(paths.golden_set());
        out << doc.dump(2) << "\n";
    }

    // Feature rows for the EM stage: golden members and everyone else.
    const FeatureMatrix matrix = read_feature_matrix(paths.features());
    std::set<std::string> golden_ids(golden.ids.begin(), golden.ids.end());
    std::vector<std::size_t> golden_rows, mixed_rows;
    for (std::size_t r = 0; r < matrix.rows(); ++r)
        (golden_ids.count(matrix.customer_ids[r]) ? golden_rows : mixed_rows).push_back(r);
    if (golden_rows.size() != golden_ids.size())
        throw InputError("causal: golden member missing from the feature matrix");
    write_feature_matrix(paths.golden_features(), matrix.select_rows(golden_rows));
    write_feature_matrix(paths.mixed_features(), matrix.select_rows(mixed_rows));

    // X = BCE count over the year before as_of, Y = ensemble bucket, over the
    // decile band, separately per segment.
    std::unordered_map<std::string, Segment> segment_of;
    for (const auto& profile : profiles) segment_of.emplace(profile.customer_id, profile.segment);
    std::unordered_map<std::string, double> bce_count;
    const Date year_start = as_of.plus_days(-365);
    for (const auto& event : bce) {
        if (!(event.date < as_of) || event.date < year_start) continue;
        bce_count[event.customer_id] += 1;
    }

    CsvWriter out(paths.causal_report(), {"segment", "direction", "coefficient", "statistic",
                                          "p_value", "pass", "verdict"});
    for (Segment segment : {Segment::FB, Segment::IB}) {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < scores.ids.size(); ++i) {
            if (scores.ensemble[i] < config.causal.decile_min) continue;
            auto it = segment_of.find(scores.ids[i]);
            if (it == segment_of.end() || it->second != segment) continue;
            auto count = bce_count.find(scores.ids[i]);
            x.push_back(count == bce_count.end() ? 0.0 : count->second);
            y.push_back(static_cast<double>(scores.ensemble[i]));
        }
        causal::CausalConfig base = config.causal.test;
        base.seed = derive_seed(seed, to_string(segment));
        causal::CausalConfig forward_config = base;
        forward_config.seed = derive_seed(base.seed, "fwd");
        causal::CausalConfig backward_config = base;
        backward_config.seed = derive_seed(base.seed, "bwd");
        const auto forward = causal::fit_direction(x, y, causal::Direction::XtoY, forward_config);
        const auto backward = causal::fit_direction(x, y, causal::Direction::YtoX, backward_config);
        const auto verdict = causal::asymmetry_verdict(forward, backward);
        for (const auto* result : {&forward, &backward}) {
            out.write_row({to_string(segment), to_string(result->direction),
                           format_double(result->coefficient),
                           format_double(result->independence.statistic),
                           format_double(result->independence.p_value),
                           result->pass() ? "1" : "0", to_string(verdict)});
        }
    }
}

void stage_spyem(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed) {
    require_file(paths.golden_features());
    require_file(paths.mixed_features());
    const FeatureMatrix golden = read_feature_matrix(paths.golden_features());
    const FeatureMatrix mixed = read_feature_matrix(paths.mixed_features());
    SpyEmConfig spyem = config.spyem;
    spyem.seed = seed;
    const auto [population, state] = run_spy_em(golden, mixed, spyem);
    write_labeled_population(paths.labeled_population(), population);
    write_spyem_trace(paths.spyem_trace(), state);
}

void stage_abtest(const PipelineConfig& config, const RunPaths& paths, std::uint64_t seed,
                  bool use_existing_post) {
    require_file(paths.labeled_population());
    const LabeledPopulation population = read_labeled_population(paths.labeled_population());

    AbConfig ab = config.abtest.ab;
    ab.seed = seed;
    const AbAssignment assignment = assign_groups(population, ab);
    for (const auto& warning : assignment.warnings) std::cerr << "warning: " << warning << "\n";
    write_assignment(paths.assignment(), assignment);

    std::vector<PostPeriodRow> post;
    if (use_existing_post) {
        require_file(paths.post_period());
        post = read_post_period(paths.post_period());
    } else {
        require_file(paths.ground_truth());
        const auto truth = read_ground_truth(paths.ground_truth());
        std::vector<std::pair<std::string, bool>> in_test;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            in_test.emplace_back(assignment.customer_ids[i],
                                 assignment.groups[i] == AbGroup::Test);
        post = simulate_post_period(in_test, truth, config.generator,
                                    config.abtest.treatment_multiplier,
                                    config.abtest.post_noise_sd,
                                    derive_seed(seed, "post_period"));
        write_post_period(paths.post_period(), post);
    }

    std::map<std::string, double> post_gmv;
    for (const auto& row : post) post_gmv[row.customer_id] = row.post_gmv;
    const AbReadout readout = campaign_readout(assignment, post_gmv, ab.cl);
    write_abtest_report(paths.abtest_report(), assignment, readout);
}

void stage_report(const PipelineConfig&, const RunPaths& paths) {
    const std::string report = render_report(paths);
    std::ofstream out(paths.report(), std::ios::binary);
    if (!out)
        throw InputError("cannot write " + paths.report().string());
    out << report;
}

void run_pipeline(const PipelineConfig& config) {
    config.validate();
    RunPaths paths{config.out_dir};
    std::filesystem::create_directories(paths.dir);
    {
        std::ofstream out(paths.config_used(), std::ios::binary);
        if (!out)
            throw InputError("cannot write " + paths.config_used().string());
        out << pipeline_config_to_json(config);
    }

    const auto guard = [](const std::string& stage, auto&& body) {
        try {
            body();
        } catch (const InputError& e) {
            throw InputError("stage " + stage + ": " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error("stage " + stage + ": " + e.what());
        }
    };

    guard("generate",
          [&] { stage_generate(config, paths, stage_seed(config.seed, "generate")); });
    guard("panel", [&] { stage_panel(config, paths); });
    guard("label", [&] {
        for (Metric m : {Metric::GMV, Metric::BI, Metric::PD}) stage_label(config, paths, m);
    });
    guard("featurize", [&] { stage_featurize(config, paths); });
    guard("train", [&] {
        const std::uint64_t train_seed = stage_seed(config.seed, "train");
        for (Metric m : {Metric::GMV, Metric::BI, Metric::PD})
            stage_train(config, paths, m, derive_seed(train_seed, to_string(m)));
    });
    guard("score", [&] { stage_score(config, paths); });
    guard("causal", [&] { stage_causal(config, paths, stage_seed(config.seed, "causal")); });
    guard("spyem", [&] { stage_spyem(config, paths, stage_seed(config.seed, "spyem")); });
    guard("abtest", [&] { stage_abtest(config, paths, stage_seed(config.seed, "abtest")); });
    guard("report", [&] { stage_report(config, paths); });
}

} // namespace dtk
