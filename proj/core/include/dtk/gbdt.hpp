#pragma once

#include "dtk/features.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dtk::gbdt {

// Gradient boosted trees for binary classification with log loss. Trees fit
// the residuals y - p with exact greedy variance-reduction splits; leaves
// take the Newton step sum(r) / sum(p(1-p)). Masked feature values route to
// the side chosen by gain at training time, stored on the node.

struct TrainConfig {
    int n_trees = 150;
    int max_depth = 5;
    double learning_rate = 0.1;
    int min_samples_leaf = 10;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    bool missing_left = true;
    int left = -1;
    int right = -1;
    double value = 0;  // leaf value
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double value_for(const FeatureMatrix& matrix, const std::vector<size_t>& column_map,
                     size_t row) const;
};

struct Model {
    double initial_score = 0;  // F0, log-odds of the base rate
    double learning_rate = 0.1;
    std::vector<std::string> feature_names;
    std::vector<Tree> trees;
    std::vector<double> importance;  // aligned with feature_names, max = 1
    std::vector<double> train_loss;  // per tree
    std::vector<double> valid_loss;  // empty when validation_fraction = 0
    TrainConfig config;
};

// Shuffles each class with the seed and sends the first `fraction` of it to
// the second (holdout) list; both lists come back sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double fraction, std::uint64_t seed);

// Throws InputError on an empty matrix or single-class labels.
Model train(const FeatureMatrix& matrix, const std::vector<int>& labels,
            const TrainConfig& config);

// Probabilities sigma(F0 + lr * sum of leaf values). first_n_trees limits the
// ensemble prefix; -1 means all trees. Matrix columns must cover the model's
// feature names; extra columns are ignored.
std::vector<double> predict_proba(const Model& model, const FeatureMatrix& matrix,
                                  int first_n_trees = -1);

// (name, gain) pairs, gain normalized so the top feature is exactly 1,
// descending with ties broken by name.
std::vector<std::pair<std::string, double>> variable_importance(const Model& model);

// Per-tree (train, validation) log loss. Requires a validation split.
std::vector<std::pair<double, double>> loss_curve(const Model& model);

// Trains a rough model and keeps the k most important features.
std::vector<std::string> select_top_k(const FeatureMatrix& matrix, const std::vector<int>& labels,
                                      const TrainConfig& rough_config, int k = 13);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

} // namespace dtk::gbdt
