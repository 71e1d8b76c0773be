#include "mml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "mml/error.hpp"

namespace mml {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return cols;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string lower(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

DatasetSpec make_spec(std::string name, TaskKind kind, std::vector<std::string> classes, int first,
                      std::optional<int> second, int label, std::optional<int> id, bool header) {
    DatasetSpec s;
    s.name = std::move(name);
    s.kind = kind;
    s.class_names = std::move(classes);
    s.col_first = first;
    s.col_second = second;
    s.col_label = label;
    s.col_id = id;
    s.header = header;
    return s;
}

const std::vector<std::string> kZeroOne{"0", "1"};

}  // namespace

void DatasetSpec::validate() const {
    std::set<int> cols{col_first, col_label};
    std::size_t expected = 2;
    if (col_second) {
        cols.insert(*col_second);
        ++expected;
    }
    if (col_id) {
        cols.insert(*col_id);
        ++expected;
    }
    if (cols.size() != expected) throw InvalidConfig("dataset '" + name + "': column indices must be distinct");
    if (kind.is_regression()) {
        if (!class_names.empty()) throw InvalidConfig("dataset '" + name + "': regression takes no class names");
        if (!(score_min < score_max)) throw InvalidConfig("dataset '" + name + "': empty score range");
    } else {
        if (kind.classes < 2) throw InvalidConfig("dataset '" + name + "': need at least 2 classes");
        if (class_names.size() != kind.classes) {
            throw InvalidConfig("dataset '" + name + "': " + std::to_string(class_names.size()) +
                                " class names for " + std::to_string(kind.classes) + " classes");
        }
    }
}

std::vector<std::string> glue_preset_names() {
    return {"RTE", "MNLI", "QNLI", "SNLI", "MRPC", "QQP", "STS-B", "CoLA", "SST-2"};
}

DatasetSpec glue_preset(const std::string& name) {
    const std::string key = lower(name);
    const auto binary = TaskKind::classification(2);
    const auto three = TaskKind::classification(3);
    if (key == "rte") return make_spec("RTE", binary, kBinaryNliClasses, 1, 2, 3, 0, true);
    if (key == "qnli") return make_spec("QNLI", binary, kBinaryNliClasses, 1, 2, 3, 0, true);
    if (key == "mnli") return make_spec("MNLI", three, kNliClasses, 8, 9, -1, 0, true);
    if (key == "snli") return make_spec("SNLI", three, kNliClasses, 7, 8, -1, 0, true);
    if (key == "mrpc") return make_spec("MRPC", binary, kZeroOne, 3, 4, 0, std::nullopt, true);
    if (key == "qqp") return make_spec("QQP", binary, kZeroOne, 3, 4, 5, 0, true);
    if (key == "sts-b" || key == "stsb") {
        auto s = make_spec("STS-B", TaskKind::regression(), {}, 7, 8, -1, 0, true);
        s.score_min = 0.0;
        s.score_max = 5.0;
        return s;
    }
    if (key == "cola") return make_spec("CoLA", binary, kZeroOne, 3, std::nullopt, 1, std::nullopt, false);
    if (key == "sst-2" || key == "sst2") {
        return make_spec("SST-2", binary, kZeroOne, 0, std::nullopt, 1, std::nullopt, true);
    }
    throw InvalidConfig("unknown dataset preset '" + name + "'");
}

DatasetSpec canonical_spec(const std::string& name, TaskKind kind,
                           std::vector<std::string> class_names) {
    auto s = make_spec(name, kind, std::move(class_names), 1, 2, 3, 0, true);
    if (kind.is_regression()) {
        s.score_min = -1e300;
        s.score_max = 1e300;
    }
    return s;
}

Dataset load_tsv(const std::filesystem::path& path, const DatasetSpec& spec, bool lenient,
                 LoadReport* report) {
    spec.validate();
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open dataset file " + path.string());

    Dataset out;
    out.name = spec.name;
    out.kind = spec.kind;
    out.class_names = spec.class_names;

    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& why) {
        std::string msg = path.string() + ": line " + std::to_string(line_no) + ": " + why;
        if (!lenient) throw FormatError(msg);
        if (report) report->skipped.push_back("line " + std::to_string(line_no) + ": " + why);
    };

    while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1 && spec.header) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        auto resolve = [&](int idx) -> std::optional<std::size_t> {
            long pos = idx < 0 ? static_cast<long>(cols.size()) + idx : idx;
            if (pos < 0 || pos >= static_cast<long>(cols.size())) return std::nullopt;
            return static_cast<std::size_t>(pos);
        };
        auto first = resolve(spec.col_first);
        auto label_col = resolve(spec.col_label);
        std::optional<std::size_t> second = spec.col_second ? resolve(*spec.col_second) : std::nullopt;
        std::optional<std::size_t> id_col = spec.col_id ? resolve(*spec.col_id) : std::nullopt;
        if (!first || !label_col || (spec.col_second && !second) || (spec.col_id && !id_col)) {
            fail("row has " + std::to_string(cols.size()) + " columns, too few for the layout");
            continue;
        }

        Example ex;
        auto label_text = trim(cols[*label_col]);
        if (spec.kind.is_regression()) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), v);
            if (ec != std::errc() || ptr != label_text.data() + label_text.size() || !std::isfinite(v)) {
                fail("bad score '" + std::string(label_text) + "'");
                continue;
            }
            if (v < spec.score_min || v > spec.score_max) {
                fail("score " + std::string(label_text) + " outside [" + format_score(spec.score_min) +
                     ", " + format_score(spec.score_max) + "]");
                continue;
            }
            ex.label = v;
        } else {
            auto it = std::find(spec.class_names.begin(), spec.class_names.end(), label_text);
            if (it == spec.class_names.end()) {
                fail("label '" + std::string(label_text) + "' is not one of the dataset's classes");
                continue;
            }
            ex.label = static_cast<double>(it - spec.class_names.begin());
        }
        ex.pair.first = tokenize(cols[*first]);
        if (second) ex.pair.second = tokenize(cols[*second]);
        ex.id = id_col ? std::string(trim(cols[*id_col])) : std::to_string(line_no);
        out.examples.push_back(std::move(ex));
    }
    return out;
}

void save_tsv(const Dataset& dataset, const std::filesystem::path& path,
              const std::vector<std::string>& dropped) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw InvalidInput("cannot write " + path.string());
    os << "id\tsentence1\tsentence2\tlabel\n";
    for (const auto& ex : dataset.examples) {
        os << ex.id << '\t' << join_tokens(ex.pair.first) << '\t' << join_tokens(ex.pair.second)
           << '\t';
        if (dataset.kind.is_regression()) {
            os << format_score(ex.label);
        } else {
            os << dataset.class_names.at(static_cast<std::size_t>(ex.label));
        }
        os << '\n';
    }
    if (!dropped.empty()) {
        auto side = path;
        side += ".dropped.txt";
        std::ofstream ds(side, std::ios::trunc);
        for (const auto& id : dropped) ds << id << '\n';
    }
}

Dataset collapse_nli_labels(const Dataset& dataset) {
    if (dataset.kind.is_regression() ||
        std::set<std::string>(dataset.class_names.begin(), dataset.class_names.end()) !=
            std::set<std::string>(kNliClasses.begin(), kNliClasses.end()) ||
        dataset.class_names.size() != 3) {
        throw InvalidTransform("collapse-nli needs classes {entailment, neutral, contradiction}; '" +
                               dataset.name + "' has a different label space");
    }
    Dataset out;
    out.name = dataset.name;
    out.kind = TaskKind::classification(2);
    out.class_names = kBinaryNliClasses;
    out.examples = dataset.examples;
    for (auto& ex : out.examples) {
        const auto& cls = dataset.class_names[static_cast<std::size_t>(ex.label)];
        ex.label = cls == "entailment" ? 0.0 : 1.0;
    }
    return out;
}

BinarizeResult binarize_stsb(const Dataset& dataset) {
    if (!dataset.kind.is_regression()) {
        throw InvalidTransform("binarize-stsb needs a regression dataset; '" + dataset.name +
                               "' is a classification dataset");
    }
    constexpr double eps = 1e-9;
    BinarizeResult out;
    out.dataset.name = dataset.name + "*";
    out.dataset.kind = TaskKind::classification(2);
    out.dataset.class_names = kZeroOne;
    for (const auto& ex : dataset.examples) {
        double s = ex.label;
        if (!(s >= 1.0 - eps && s <= 5.0 + eps)) {
            throw InvalidInput("binarize-stsb: example '" + ex.id + "' has score " +
                               format_score(s) + " outside [1, 5]");
        }
        if (s <= 2.0 || s >= 4.0) {
            Example b = ex;
            b.label = s <= 2.0 ? 0.0 : 1.0;
            out.dataset.examples.push_back(std::move(b));
        } else {
            out.dropped.push_back(ex.id);
        }
    }
    return out;
}

SyntheticDataset synth_gaussian(const SynthOptions& o) {
    if (o.classes < 2) throw InvalidConfig("synth_gaussian: need at least 2 classes");
    if (o.n < o.classes) throw InvalidConfig("synth_gaussian: n must be >= classes");
    if (o.informative < 1 || o.informative > o.feature_dims) {
        throw InvalidConfig("synth_gaussian: informative must be in [1, feature_dims]");
    }
    if (!(o.separation >= 0.0) || !(o.noise > 0.0) || o.quantization < 1) {
        throw InvalidConfig("synth_gaussian: bad separation/noise/quantization");
    }

    Rng root(o.seed);
    Rng mean_rng = root.split();
    Rng sample_rng = root.split();
    Rng bayes_rng = root.split();

    // Class means live in the informative subspace at distance `separation`.
    std::vector<std::vector<double>> means(o.classes, std::vector<double>(o.feature_dims, 0.0));
    auto random_unit = [&] {
        std::vector<double> v(o.informative);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& x : v) {
                x = mean_rng.normal();
                norm += x * x;
            }
        } while (norm == 0.0);
        for (double& x : v) x /= std::sqrt(norm);
        return v;
    };
    if (o.classes == 2) {
        auto u = random_unit();
        for (std::size_t f = 0; f < o.informative; ++f) {
            means[0][f] = -o.separation * u[f];
            means[1][f] = o.separation * u[f];
        }
    } else {
        for (auto& mean : means) {
            auto u = random_unit();
            for (std::size_t f = 0; f < o.informative; ++f) mean[f] = o.separation * u[f];
        }
    }

    auto nearest_mean = [&](const std::vector<double>& z) {
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t y = 0; y < o.classes; ++y) {
            double dist = 0.0;
            for (std::size_t f = 0; f < o.feature_dims; ++f) dist += (z[f] - means[y][f]) * (z[f] - means[y][f]);
            if (dist < best_d) {
                best_d = dist;
                best = y;
            }
        }
        return best;
    };

    SyntheticDataset out;
    out.dataset.name = "synthetic";
    out.dataset.kind = TaskKind::classification(o.classes);
    for (std::size_t y = 0; y < o.classes; ++y) out.dataset.class_names.push_back("c" + std::to_string(y));

    std::vector<std::size_t> labels(o.n);
    for (std::size_t i = 0; i < o.n; ++i) labels[i] = i % o.classes;
    sample_rng.shuffle(labels);

    std::vector<double> z(o.feature_dims);
    for (std::size_t i = 0; i < o.n; ++i) {
        Example ex;
        ex.label = static_cast<double>(labels[i]);
        ex.id = "syn" + std::to_string(i);
        for (std::size_t f = 0; f < o.feature_dims; ++f) {
            z[f] = means[labels[i]][f] + o.noise * sample_rng.normal();
            auto copies = static_cast<long>(std::lround(std::abs(z[f]) * o.quantization));
            auto& sentence = f % 2 == 0 ? ex.pair.first : ex.pair.second;
            std::string tok = "f" + std::to_string(f) + (z[f] >= 0.0 ? "p" : "n");
            for (long k = 0; k < copies; ++k) sentence.push_back(tok);
        }
        out.dataset.examples.push_back(std::move(ex));
    }

    std::size_t correct = 0;
    for (std::size_t s = 0; s < o.bayes_samples; ++s) {
        std::size_t y = bayes_rng.uniform_index(o.classes);
        for (std::size_t f = 0; f < o.feature_dims; ++f) z[f] = means[y][f] + o.noise * bayes_rng.normal();
        if (nearest_mean(z) == y) ++correct;
    }
    out.bayes_accuracy = o.bayes_samples ? static_cast<double>(correct) / static_cast<double>(o.bayes_samples) : 0.0;
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double first_fraction,
                                          std::uint64_t seed) {
    if (!(first_fraction >= 0.0 && first_fraction <= 1.0)) {
        throw InvalidInput("split_dataset: fraction must be in [0, 1]");
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    auto cut = static_cast<std::size_t>(std::lround(first_fraction * static_cast<double>(order.size())));
    Dataset a{dataset.name, dataset.kind, dataset.class_names, {}};
    Dataset b{dataset.name, dataset.kind, dataset.class_names, {}};
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < cut ? a : b).examples.push_back(dataset.examples[order[i]]);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace mml
