#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mml/data.hpp"
#include "mml/encoder.hpp"
#include "mml/error.hpp"
#include "mml/eval.hpp"
#include "mml/trainer.hpp"

namespace mml::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kRuntimeError = 2 };

inline constexpr int kManifestVersion = 1;

/// Config problem tied to one `section.key` field.
class ConfigError : public InvalidConfig {
public:
    ConfigError(std::string field, const std::string& message)
        : InvalidConfig(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct ExperimentConfig {
    std::string run_name = "run";
    std::filesystem::path out_dir = "runs/run";
    TrainerConfig trainer;
    EncoderDims encoder;
    DatasetSpec data;
    std::string preset;  // empty when the layout is given field by field
    std::filesystem::path train_path;
    std::optional<std::filesystem::path> dev_path;
    bool lenient = false;

    /// Every resolved value as strings, section -> key -> value. Feeding this
    /// back through parse_config_tree reproduces the same config.
    nlohmann::ordered_json echo() const;
};

/// INI text ("key = value" under [run], [data], [encoder], [trainer]).
/// Relative paths resolve against base_dir. Unknown sections or keys are
/// rejected.
ExperimentConfig parse_config_ini(const std::string& text, const std::filesystem::path& base_dir);

/// Either an INI config or a run manifest written by `train`.
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::ordered_json make_manifest(const ExperimentConfig& config);

struct TrainArgs {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    bool force = false;
    unsigned workers = 1;
};

struct EvalArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path dataset;
    std::optional<std::string> preset;
    std::string transform = "identity";
    std::optional<std::filesystem::path> out;
    std::string split = "dev";
    bool force = false;
    unsigned workers = 1;
};

struct CrossEvalArgs {
    std::vector<std::filesystem::path> checkpoints;  // one model, or baseline then candidate
    std::filesystem::path targets;
    std::filesystem::path out;
    bool force = false;
    unsigned workers = 1;
};

struct TraceArgs {
    std::filesystem::path run_dir;
    std::optional<std::filesystem::path> out;
    bool force = false;
};

/// Target list: one target per line, tab-separated
///   name  preset  transform  train_path  dev_path
/// with "-" for an absent split and '#' starting a comment line.
std::vector<CrossTarget> load_targets(const std::filesystem::path& path);

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_cross_eval(const CrossEvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_trace(const TraceArgs& args, std::ostream& out, std::ostream& err);

}  // namespace mml::cli
