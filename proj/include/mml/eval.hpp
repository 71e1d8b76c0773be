#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mml/data.hpp"
#include "mml/model.hpp"

namespace mml {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// Pearson correlation of average ranks. Throws InvalidEval when either
/// side has no rank variance.
double spearman(std::span<const double> x, std::span<const double> y);

struct EvalReport {
    std::string model;
    std::string dataset;
    std::string split;
    std::string metric;  // "accuracy" or "spearman"
    double value = 0.0;
    std::size_t n = 0;
    std::size_t active_heads = 0;
    std::string transform_chain = "identity";
};

enum class Transform { identity, collapse_nli, binarize_stsb };

/// Accepts the CLI spellings identity, collapse-nli, binarize-stsb.
Transform parse_transform(const std::string& text);
std::string to_string(Transform t);

/// Applies a label transform to a dataset (never to a model).
Dataset apply_transform(const Dataset& dataset, Transform t);

struct EvalOptions {
    std::string model_id = "model";
    std::string split = "dev";
    std::string transform_chain = "identity";
    unsigned workers = 1;
};

/// Classification models are scored by accuracy, regression models by
/// Spearman correlation. Class names are matched by name; a 3-class NLI
/// model on an {entailment, not_entailment} target has its neutral and
/// contradiction predictions mapped to not_entailment. Any other mismatch
/// throws InvalidEval.
EvalReport evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options = {});

struct CrossTarget {
    std::string name;
    Transform transform = Transform::identity;
    std::optional<Dataset> train;
    std::optional<Dataset> dev;
};

/// One report per target and available split (train first, then dev).
std::vector<EvalReport> cross_evaluate(const Model& model, const std::string& model_id,
                                       std::span<const CrossTarget> targets, unsigned workers = 1);

/// Mean over held-out targets (dataset != source) of candidate/baseline - 1,
/// for one split. Returns nullopt when no held-out pair exists.
std::optional<double> relative_improvement(std::span<const EvalReport> baseline,
                                           std::span<const EvalReport> candidate,
                                           const std::string& source_dataset,
                                           const std::string& split);

/// One JSON object: model, dataset, split, metric, value, n, active_heads,
/// transform_chain.
std::string to_json_line(const EvalReport& report);

/// Rows are models, columns are targets, each cell "train/dev" in percent.
/// When exactly two models are given, the second row gains the relative
/// improvement over the first.
std::string format_cross_table(const std::vector<std::string>& model_ids,
                               const std::vector<std::string>& sources,
                               const std::vector<std::vector<EvalReport>>& reports,
                               const std::vector<std::string>& targets);

}  // namespace mml
