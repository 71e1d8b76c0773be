#include "mml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "mml/error.hpp"

namespace mml {

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Model class index -> target class index, or nullopt when the spaces differ.
std::optional<std::vector<std::size_t>> class_mapping(const std::vector<std::string>& model_classes,
                                                      const std::vector<std::string>& target_classes) {
    std::vector<std::size_t> map;
    bool by_name = true;
    for (const auto& name : model_classes) {
        auto it = std::find(target_classes.begin(), target_classes.end(), name);
        if (it == target_classes.end()) {
            by_name = false;
            break;
        }
        map.push_back(static_cast<std::size_t>(it - target_classes.begin()));
    }
    if (by_name && model_classes.size() == target_classes.size()) return map;

    if (model_classes.size() == 3 && target_classes == kBinaryNliClasses &&
        std::is_permutation(model_classes.begin(), model_classes.end(), kNliClasses.begin())) {
        map.clear();
        for (const auto& name : model_classes) map.push_back(name == "entailment" ? 0 : 1);
        return map;
    }
    return std::nullopt;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

std::string signed_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f%%", 100.0 * v);
    return buf;
}

}  // namespace

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
    if (predictions.empty()) throw InvalidEval("accuracy: no predictions");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
    if (x.size() < 2) throw InvalidEval("spearman: need at least two points");
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw InvalidEval("spearman: zero rank variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Transform parse_transform(const std::string& text) {
    if (text == "identity") return Transform::identity;
    if (text == "collapse-nli") return Transform::collapse_nli;
    if (text == "binarize-stsb") return Transform::binarize_stsb;
    throw InvalidConfig("unknown transform '" + text +
                        "' (expected identity, collapse-nli or binarize-stsb)");
}

std::string to_string(Transform t) {
    switch (t) {
        case Transform::identity: return "identity";
        case Transform::collapse_nli: return "collapse-nli";
        case Transform::binarize_stsb: return "binarize-stsb";
    }
    return "identity";
}

Dataset apply_transform(const Dataset& dataset, Transform t) {
    switch (t) {
        case Transform::identity: return dataset;
        case Transform::collapse_nli: return collapse_nli_labels(dataset);
        case Transform::binarize_stsb: return binarize_stsb(dataset).dataset;
    }
    return dataset;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options) {
    if (dataset.empty()) throw InvalidEval("evaluate: dataset '" + dataset.name + "' is empty");
    EvalReport report;
    report.model = options.model_id;
    report.dataset = dataset.name;
    report.split = options.split;
    report.n = dataset.size();
    report.active_heads = model.heads.active_count();
    report.transform_chain = options.transform_chain;

    if (model.kind.is_regression() != dataset.kind.is_regression()) {
        throw InvalidEval("evaluate: " + std::string(model.kind.is_regression() ? "regression" : "classification") +
                          " model cannot be scored on " +
                          (dataset.kind.is_regression() ? "regression" : "classification") +
                          " dataset '" + dataset.name + "'; a label transform is missing");
    }

    const std::size_t n = dataset.size();
    if (model.kind.is_regression()) {
        std::vector<double> predicted(n), gold(n);
        parallel_for(n, options.workers, [&](std::size_t i) {
            predicted[i] = model.predict(dataset.examples[i].pair).value;
            gold[i] = dataset.examples[i].label;
        });
        report.metric = "spearman";
        report.value = spearman(predicted, gold);
        return report;
    }

    auto map = class_mapping(model.class_names, dataset.class_names);
    if (!map) {
        throw InvalidEval("evaluate: model classes do not match dataset '" + dataset.name +
                          "'; a label transform is missing");
    }
    std::vector<std::size_t> predicted(n), gold(n);
    parallel_for(n, options.workers, [&](std::size_t i) {
        predicted[i] = (*map)[model.predict(dataset.examples[i].pair).label];
        gold[i] = static_cast<std::size_t>(dataset.examples[i].label);
    });
    report.metric = "accuracy";
    report.value = accuracy(predicted, gold);
    return report;
}

std::vector<EvalReport> cross_evaluate(const Model& model, const std::string& model_id,
                                       std::span<const CrossTarget> targets, unsigned workers) {
    std::vector<EvalReport> reports;
    for (const auto& target : targets) {
        auto run = [&](const std::optional<Dataset>& split, const char* split_name) {
            if (!split) return;
            Dataset transformed = apply_transform(*split, target.transform);
            transformed.name = target.name;
            EvalOptions opts{model_id, split_name, to_string(target.transform), workers};
            try {
                reports.push_back(evaluate(model, transformed, opts));
            } catch (const InvalidEval& e) {
                throw InvalidEval("target '" + target.name + "' (" + split_name + "): " + e.what());
            }
        };
        run(target.train, "train");
        run(target.dev, "dev");
    }
    return reports;
}

std::optional<double> relative_improvement(std::span<const EvalReport> baseline,
                                           std::span<const EvalReport> candidate,
                                           const std::string& source_dataset,
                                           const std::string& split) {
    double ratio_sum = 0.0;
    std::size_t count = 0;
    for (const auto& c : candidate) {
        if (c.split != split || c.dataset == source_dataset) continue;
        auto it = std::find_if(baseline.begin(), baseline.end(), [&](const EvalReport& b) {
            return b.split == split && b.dataset == c.dataset;
        });
        if (it == baseline.end() || it->value == 0.0) continue;
        ratio_sum += c.value / it->value;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return ratio_sum / static_cast<double>(count) - 1.0;
}

std::string to_json_line(const EvalReport& r) {
    nlohmann::ordered_json j = {
        {"model", r.model},   {"dataset", r.dataset}, {"split", r.split},
        {"metric", r.metric}, {"value", r.value},     {"n", r.n},
        {"active_heads", r.active_heads}, {"transform_chain", r.transform_chain},
    };
    return j.dump();
}

std::string format_cross_table(const std::vector<std::string>& model_ids,
                               const std::vector<std::string>& sources,
                               const std::vector<std::vector<EvalReport>>& reports,
                               const std::vector<std::string>& targets) {
    const bool compare = model_ids.size() == 2;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"model"};
    for (const auto& t : targets) head.push_back(t);
    if (compare) head.push_back("avg cross improvement (train/dev)");
    rows.push_back(head);

    for (std::size_t m = 0; m < model_ids.size(); ++m) {
        std::vector<std::string> row{model_ids[m]};
        for (const auto& t : targets) {
            std::string cell;
            for (const char* split : {"train", "dev"}) {
                auto it = std::find_if(reports[m].begin(), reports[m].end(), [&](const EvalReport& r) {
                    return r.dataset == t && r.split == split;
                });
                if (std::string(split) == "dev") cell += "/";
                cell += it == reports[m].end() ? "-" : percent(it->value);
            }
            row.push_back(cell);
        }
        if (compare) {
            if (m == 0) {
                row.push_back("-");
            } else {
                auto tr = relative_improvement(reports[0], reports[1], sources[1], "train");
                auto dv = relative_improvement(reports[0], reports[1], sources[1], "dev");
                row.push_back((tr ? signed_percent(*tr) : std::string("-")) + "/" +
                              (dv ? signed_percent(*dv) : std::string("-")));
            }
        }
        rows.push_back(row);
    }

    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            out += (c ? " | " : "") + rows[r][c] + std::string(width[c] - rows[r][c].size(), ' ');
        }
        out += '\n';
        if (r == 0) {
            for (std::size_t c = 0; c < width.size(); ++c) out += (c ? "-+-" : "") + std::string(width[c], '-');
            out += '\n';
        }
    }
    return out;
}

}  // namespace mml
