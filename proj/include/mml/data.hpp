#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mml/encoder.hpp"
#include "mml/multiverse.hpp"

namespace mml {

struct Example {
    SentencePair pair;
    double label = 0.0;  // class index for classification, score for regression
    std::string id;

    friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
    std::string name;
    TaskKind kind;
    std::vector<std::string> class_names;  // empty for regression
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
};

/// Column layout of a TSV file. Negative column indices count from the end
/// of the row (-1 is the last column).
struct DatasetSpec {
    std::string name;
    TaskKind kind;
    std::vector<std::string> class_names;
    double score_min = 0.0;  // regression only
    double score_max = 5.0;
    int col_first = 0;
    std::optional<int> col_second;
    int col_label = 1;
    std::optional<int> col_id;
    bool header = true;

    void validate() const;
};

/// Layouts of the GLUE tasks: RTE, MNLI, QNLI, SNLI, MRPC, QQP, STS-B,
/// CoLA, SST-2. Lookup is case-insensitive; throws InvalidConfig otherwise.
DatasetSpec glue_preset(const std::string& name);
std::vector<std::string> glue_preset_names();

/// The layout save_tsv writes: id, sentence1, sentence2, label with header.
DatasetSpec canonical_spec(const std::string& name, TaskKind kind,
                           std::vector<std::string> class_names);

struct LoadReport {
    std::vector<std::string> skipped;  // "line N: reason"
};

/// Parses a UTF-8 TSV file. Malformed rows are fatal (FormatError naming the
/// line) unless lenient, in which case they are skipped and listed in report.
Dataset load_tsv(const std::filesystem::path& path, const DatasetSpec& spec, bool lenient = false,
                 LoadReport* report = nullptr);

/// Writes the canonical layout. When dropped is non-empty, the ids are also
/// listed one per line in `<path>.dropped.txt`.
void save_tsv(const Dataset& dataset, const std::filesystem::path& path,
              const std::vector<std::string>& dropped = {});

/// {entailment, neutral, contradiction} -> {entailment, not_entailment}.
Dataset collapse_nli_labels(const Dataset& dataset);

inline const std::vector<std::string> kNliClasses{"entailment", "neutral", "contradiction"};
inline const std::vector<std::string> kBinaryNliClasses{"entailment", "not_entailment"};

struct BinarizeResult {
    Dataset dataset;
    std::vector<std::string> dropped;  // ids of examples with scores in (2, 4)
};

/// Scores in [1, 2] -> class 0, [4, 5] -> class 1, (2, 4) dropped.
BinarizeResult binarize_stsb(const Dataset& dataset);

struct SynthOptions {
    std::size_t n = 1000;
    std::size_t feature_dims = 16;
    std::size_t informative = 16;  // leading dimensions whose class means differ
    std::size_t classes = 2;
    double separation = 1.0;       // distance of each class mean from the origin
    double noise = 1.0;            // per-dimension standard deviation
    int quantization = 2;          // tokens emitted per unit of |value|
    std::uint64_t seed = 1;
    std::size_t bayes_samples = 20000;
};

struct SyntheticDataset {
    Dataset dataset;
    double bayes_accuracy = 0.0;  // Monte Carlo estimate in the latent space
};

/// Class-conditional isotropic Gaussians rendered as token strings: dimension
/// f with value z contributes round(|z| * quantization) copies of the token
/// "f<f>p" or "f<f>n". Even dimensions go to the first sentence, odd ones to
/// the second.
SyntheticDataset synth_gaussian(const SynthOptions& options);

/// Deterministic split of a dataset into two parts by a seeded shuffle.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double first_fraction,
                                          std::uint64_t seed);

}  // namespace mml
