#include "dtk/gbdt.hpp"

#include "dtk/errors.hpp"
#include "dtk/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dtk::gbdt {

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double clipped_log_loss(std::span<const int> labels, std::span<const double> probs,
                        std::span<const int> rows) {
    if (rows.empty()) return 0;
    double total = 0;
    for (int r : rows) {
        const double p = std::clamp(probs[r], 1e-12, 1.0 - 1e-12);
        total += labels[r] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / rows.size();
}

// Per-feature row lists a node works on: non-missing rows in ascending value
// order plus the missing rows. Every row of the node appears in both vectors
// of every feature exactly once combined.
struct NodeLists {
    std::vector<std::vector<int>> sorted;   // per feature
    std::vector<std::vector<int>> missing;  // per feature
};

struct SplitChoice {
    bool found = false;
    double gain = 0;  // improvement over the parent score
    int feature = -1;
    double threshold = 0;
    bool missing_left = true;
};

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& matrix, const std::vector<double>& residuals,
                const std::vector<double>& hessians, const TrainConfig& config,
                std::vector<double>& feature_gain)
        : matrix_(matrix),
          residuals_(residuals),
          hessians_(hessians),
          config_(config),
          feature_gain_(feature_gain) {}

    Tree build(const NodeLists& root) {
        Tree tree;
        grow(tree, root, 0);
        return tree;
    }

private:
    int grow(Tree& tree, const NodeLists& lists, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        const size_t n = lists.sorted[0].size() + lists.missing[0].size();
        double total_r = 0;
        for (int r : lists.sorted[0]) total_r += residuals_[r];
        for (int r : lists.missing[0]) total_r += residuals_[r];

        SplitChoice split;
        if (depth < config_.max_depth && n >= 2 * static_cast<size_t>(config_.min_samples_leaf))
            split = find_split(lists, total_r, n);

        if (!split.found) {
            double total_h = 0;
            for (int r : lists.sorted[0]) total_h += hessians_[r];
            for (int r : lists.missing[0]) total_h += hessians_[r];
            tree.nodes[node_id].value = total_h > 0 ? total_r / total_h : 0.0;
            return node_id;
        }

        feature_gain_[split.feature] += split.gain;

        NodeLists left, right;
        partition(lists, split, left, right);
        tree.nodes[node_id].feature = split.feature;
        tree.nodes[node_id].threshold = split.threshold;
        tree.nodes[node_id].missing_left = split.missing_left;
        const int left_id = grow(tree, left, depth + 1);
        tree.nodes[node_id].left = left_id;
        const int right_id = grow(tree, right, depth + 1);
        tree.nodes[node_id].right = right_id;
        return node_id;
    }

    SplitChoice find_split(const NodeLists& lists, double total_r, size_t n) const {
        SplitChoice best;
        const double parent_score = total_r * total_r / n;
        const size_t min_leaf = static_cast<size_t>(config_.min_samples_leaf);

        for (size_t f = 0; f < matrix_.cols(); ++f) {
            const auto& ids = lists.sorted[f];
            if (ids.empty()) continue;
            const auto& values = matrix_.columns[f];

            double miss_r = 0;
            const size_t miss_n = lists.missing[f].size();
            for (int r : lists.missing[f]) miss_r += residuals_[r];

            double prefix_r = 0;
            for (size_t i = 0; i + 1 < ids.size(); ++i) {
                prefix_r += residuals_[ids[i]];
                if (values[ids[i]] == values[ids[i + 1]]) continue;
                const double threshold = (values[ids[i]] + values[ids[i + 1]]) / 2;
                // The midpoint of two adjacent doubles can round onto one of
                // them; the partition rule is value < threshold, so skip
                // candidates that would not separate the pair.
                if (!(threshold > values[ids[i]] && threshold <= values[ids[i + 1]])) continue;
                const size_t below = i + 1;

                // Ties keep the earlier candidate, so scan order fixes the
                // tie-break: higher gain, then lower feature index, then
                // lower threshold, then missing-left.
                for (int route_left = 1; route_left >= 0; --route_left) {
                    const size_t nl = below + (route_left ? miss_n : 0);
                    const size_t nr = n - nl;
                    if (nl < min_leaf || nr < min_leaf) continue;
                    const double sl = prefix_r + (route_left ? miss_r : 0.0);
                    const double sr = total_r - sl;
                    const double gain = sl * sl / nl + sr * sr / nr - parent_score;
                    if (gain > best.gain && gain > 1e-12) {
                        best.found = true;
                        best.gain = gain;
                        best.feature = static_cast<int>(f);
                        best.threshold = threshold;
                        best.missing_left = route_left == 1;
                    }
                }
            }
        }
        return best;
    }

    void partition(const NodeLists& parent, const SplitChoice& split, NodeLists& left,
                   NodeLists& right) const {
        const auto& values = matrix_.columns[split.feature];
        const auto& mask = matrix_.masks[split.feature];
        auto goes_left = [&](int row) {
            if (mask[row]) return split.missing_left;
            return values[row] < split.threshold;
        };
        const size_t m = matrix_.cols();
        left.sorted.resize(m);
        left.missing.resize(m);
        right.sorted.resize(m);
        right.missing.resize(m);
        for (size_t f = 0; f < m; ++f) {
            for (int row : parent.sorted[f])
                (goes_left(row) ? left.sorted[f] : right.sorted[f]).push_back(row);
            for (int row : parent.missing[f])
                (goes_left(row) ? left.missing[f] : right.missing[f]).push_back(row);
        }
    }

    const FeatureMatrix& matrix_;
    const std::vector<double>& residuals_;
    const std::vector<double>& hessians_;
    const TrainConfig& config_;
    std::vector<double>& feature_gain_;
};

// Stratified split: each class is shuffled with the config seed and the
// first fraction goes to validation.
void split_train_valid(const std::vector<int>& labels, const TrainConfig& config,
                       std::vector<int>& train_rows, std::vector<int>& valid_rows) {
    std::vector<int> by_class[2];
    for (size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i] ? 1 : 0].push_back(static_cast<int>(i));
    auto rng = make_rng(derive_seed(config.seed, "valid_split"));
    for (auto& rows : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        const size_t n_valid =
            static_cast<size_t>(std::llround(config.validation_fraction * rows.size()));
        for (size_t i = 0; i < rows.size(); ++i)
            (i < n_valid ? valid_rows : train_rows).push_back(rows[i]);
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(valid_rows.begin(), valid_rows.end());
}

} // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0 && fraction < 1))
        throw InputError("stratified_split: fraction must be in [0,1)");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i] ? 1 : 0].push_back(i);
    auto rng = make_rng(derive_seed(seed, "valid_split"));
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    for (auto& rows : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        const std::size_t n_holdout =
            static_cast<std::size_t>(std::llround(fraction * rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            (i < n_holdout ? out.second : out.first).push_back(rows[i]);
    }
    std::sort(out.first.begin(), out.first.end());
    std::sort(out.second.begin(), out.second.end());
    return out;
}

void TrainConfig::validate() const {
    if (n_trees < 1) throw InputError("gbdt config: n_trees must be >= 1");
    if (max_depth < 1) throw InputError("gbdt config: max_depth must be >= 1");
    if (!(learning_rate > 0 && learning_rate <= 1))
        throw InputError("gbdt config: learning_rate must be in (0,1]");
    if (min_samples_leaf < 1) throw InputError("gbdt config: min_samples_leaf must be >= 1");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
        throw InputError("gbdt config: validation_fraction must be in [0,1)");
}

double Tree::value_for(const FeatureMatrix& matrix, const std::vector<size_t>& column_map,
                       size_t row) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        const size_t col = column_map[nodes[node].feature];
        const bool left = matrix.masks[col][row]
                              ? nodes[node].missing_left
                              : matrix.columns[col][row] < nodes[node].threshold;
        node = left ? nodes[node].left : nodes[node].right;
    }
    return nodes[node].value;
}

Model train(const FeatureMatrix& matrix, const std::vector<int>& labels,
            const TrainConfig& config) {
    config.validate();
    if (matrix.rows() == 0 || matrix.cols() == 0)
        throw InputError("gbdt: empty feature matrix");
    if (labels.size() != matrix.rows())
        throw InputError("gbdt: label count does not match matrix rows");
    size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw InputError("gbdt: labels must be 0 or 1");
        positives += y;
    }
    if (positives == 0 || positives == labels.size())
        throw InputError("gbdt: training labels contain a single class");

    Model model;
    model.config = config;
    model.learning_rate = config.learning_rate;
    model.feature_names = matrix.feature_names;
    const double base_rate = static_cast<double>(positives) / labels.size();
    model.initial_score = std::log(base_rate / (1.0 - base_rate));

    std::vector<int> train_rows, valid_rows;
    split_train_valid(labels, config, train_rows, valid_rows);
    if (train_rows.empty())
        throw InputError("gbdt: validation_fraction leaves no training rows");

    // Feature order is fixed per train(), so presort once and copy per tree.
    NodeLists root;
    root.sorted.resize(matrix.cols());
    root.missing.resize(matrix.cols());
    for (size_t f = 0; f < matrix.cols(); ++f) {
        for (int row : train_rows)
            (matrix.masks[f][row] ? root.missing[f] : root.sorted[f]).push_back(row);
        const auto& values = matrix.columns[f];
        std::stable_sort(root.sorted[f].begin(), root.sorted[f].end(),
                         [&](int a, int b) { return values[a] < values[b]; });
    }

    const size_t n = matrix.rows();
    std::vector<double> scores(n, model.initial_score);
    std::vector<double> probs(n), residuals(n), hessians(n);
    std::vector<size_t> identity(matrix.cols());
    for (size_t i = 0; i < identity.size(); ++i) identity[i] = i;
    std::vector<double> feature_gain(matrix.cols(), 0.0);

    for (int t = 0; t < config.n_trees; ++t) {
        for (int r : train_rows) {
            probs[r] = sigmoid(scores[r]);
            residuals[r] = labels[r] - probs[r];
            hessians[r] = probs[r] * (1.0 - probs[r]);
        }
        TreeBuilder builder(matrix, residuals, hessians, config, feature_gain);
        model.trees.push_back(builder.build(root));
        const Tree& tree = model.trees.back();
        for (size_t r = 0; r < n; ++r)
            scores[r] += config.learning_rate * tree.value_for(matrix, identity, r);

        for (size_t r = 0; r < n; ++r) probs[r] = sigmoid(scores[r]);
        model.train_loss.push_back(clipped_log_loss(labels, probs, train_rows));
        if (!valid_rows.empty())
            model.valid_loss.push_back(clipped_log_loss(labels, probs, valid_rows));
    }

    const double max_gain = *std::max_element(feature_gain.begin(), feature_gain.end());
    model.importance.assign(matrix.cols(), 0.0);
    if (max_gain > 0)
        for (size_t f = 0; f < matrix.cols(); ++f)
            model.importance[f] = feature_gain[f] / max_gain;
    return model;
}

std::vector<double> predict_proba(const Model& model, const FeatureMatrix& matrix,
                                  int first_n_trees) {
    std::vector<size_t> column_map(model.feature_names.size());
    for (size_t f = 0; f < model.feature_names.size(); ++f)
        column_map[f] = matrix.column_index(model.feature_names[f]);

    size_t n_trees = model.trees.size();
    if (first_n_trees >= 0) n_trees = std::min<size_t>(first_n_trees, n_trees);

    std::vector<double> probs(matrix.rows());
    for (size_t r = 0; r < matrix.rows(); ++r) {
        double score = model.initial_score;
        for (size_t t = 0; t < n_trees; ++t)
            score += model.learning_rate * model.trees[t].value_for(matrix, column_map, r);
        probs[r] = sigmoid(score);
    }
    return probs;
}

std::vector<std::pair<std::string, double>> variable_importance(const Model& model) {
    std::vector<std::pair<std::string, double>> pairs;
    pairs.reserve(model.feature_names.size());
    for (size_t f = 0; f < model.feature_names.size(); ++f)
        pairs.emplace_back(model.feature_names[f], model.importance[f]);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return pairs;
}

std::vector<std::pair<double, double>> loss_curve(const Model& model) {
    if (model.valid_loss.empty())
        throw InputError("model was trained without a validation split");
    std::vector<std::pair<double, double>> curve;
    curve.reserve(model.train_loss.size());
    for (size_t t = 0; t < model.train_loss.size(); ++t)
        curve.emplace_back(model.train_loss[t], model.valid_loss[t]);
    return curve;
}

std::vector<std::string> select_top_k(const FeatureMatrix& matrix, const std::vector<int>& labels,
                                      const TrainConfig& rough_config, int k) {
    if (static_cast<size_t>(k) > matrix.cols())
        throw InputError("select_top_k: only " + std::to_string(matrix.cols()) +
                         " features available, need " + std::to_string(k));
    const Model rough = train(matrix, labels, rough_config);
    auto ranked = variable_importance(rough);
    std::vector<std::string> selected;
    selected.reserve(k);
    for (int i = 0; i < k; ++i) selected.push_back(ranked[i].first);
    return selected;
}

namespace {

using nlohmann::json;

json node_to_json(const Tree& tree, int node_id) {
    const TreeNode& node = tree.nodes[node_id];
    if (node.feature < 0) return json{{"value", node.value}};
    return json{{"feature", node.feature},
                {"threshold", node.threshold},
                {"missing", node.missing_left ? "left" : "right"},
                {"left", node_to_json(tree, node.left)},
                {"right", node_to_json(tree, node.right)}};
}

int node_from_json(const json& j, Tree& tree) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("value")) {
        tree.nodes[node_id].value = j.at("value").get<double>();
        return node_id;
    }
    tree.nodes[node_id].feature = j.at("feature").get<int>();
    tree.nodes[node_id].threshold = j.at("threshold").get<double>();
    tree.nodes[node_id].missing_left = j.at("missing").get<std::string>() == "left";
    const int left = node_from_json(j.at("left"), tree);
    tree.nodes[node_id].left = left;
    const int right = node_from_json(j.at("right"), tree);
    tree.nodes[node_id].right = right;
    return node_id;
}

} // namespace

void save_model(const std::filesystem::path& path, const Model& model) {
    json j;
    j["format"] = "dtk-gbdt";
    j["version"] = 1;
    j["initial_score"] = model.initial_score;
    j["learning_rate"] = model.learning_rate;
    j["features"] = model.feature_names;
    j["importance"] = model.importance;
    j["loss_curve"] = {{"train", model.train_loss}, {"valid", model.valid_loss}};
    j["config"] = {{"n_trees", model.config.n_trees},
                   {"max_depth", model.config.max_depth},
                   {"learning_rate", model.config.learning_rate},
                   {"min_samples_leaf", model.config.min_samples_leaf},
                   {"validation_fraction", model.config.validation_fraction},
                   {"seed", model.config.seed}};
    json trees = json::array();
    for (const auto& tree : model.trees) trees.push_back(node_to_json(tree, 0));
    j["trees"] = std::move(trees);

    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": invalid model JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "dtk-gbdt")
            throw InputError(path.string() + ": not a dtk-gbdt model file");
        if (j.at("version").get<int>() != 1)
            throw InputError(path.string() + ": unsupported model version");
        Model model;
        model.initial_score = j.at("initial_score").get<double>();
        model.learning_rate = j.at("learning_rate").get<double>();
        model.feature_names = j.at("features").get<std::vector<std::string>>();
        model.importance = j.at("importance").get<std::vector<double>>();
        model.train_loss = j.at("loss_curve").at("train").get<std::vector<double>>();
        model.valid_loss = j.at("loss_curve").at("valid").get<std::vector<double>>();
        const auto& c = j.at("config");
        model.config.n_trees = c.at("n_trees").get<int>();
        model.config.max_depth = c.at("max_depth").get<int>();
        model.config.learning_rate = c.at("learning_rate").get<double>();
        model.config.min_samples_leaf = c.at("min_samples_leaf").get<int>();
        model.config.validation_fraction = c.at("validation_fraction").get<double>();
        model.config.seed = c.at("seed").get<std::uint64_t>();
        for (const auto& tree_json : j.at("trees")) {
            Tree tree;
            node_from_json(tree_json, tree);
            model.trees.push_back(std::move(tree));
        }
        for (const auto& tree : model.trees)
            for (const auto& node : tree.nodes)
                if (node.feature >= static_cast<int>(model.feature_names.size()))
                    throw InputError(path.string() + ": split feature out of range");
        return model;
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": invalid model JSON: " + e.what());
    }
}

} // namespace dtk::gbdt
