#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mml/encoder.hpp"
#include "mml/multiverse.hpp"

namespace mml {

/// Encoder, head bank and the label space they were trained on.
struct Model {
    HashedMlpEncoder encoder;
    HeadBank heads;
    TaskKind kind;
    std::vector<std::string> class_names;  // empty for regression
    std::string dataset_name;

    Prediction predict(const SentencePair& pair) const;

    friend bool operator==(const Model& a, const Model& b) {
        return a.encoder.params() == b.encoder.params() && a.heads == b.heads &&
               a.kind == b.kind && a.class_names == b.class_names &&
               a.dataset_name == b.dataset_name;
    }
};

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'L', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: magic, u32 version, u64 header length, a JSON header
/// (dimensions, mask, label space, config echo), then every parameter as a
/// little-endian IEEE double (encoder flat buffer, then head bank flat
/// buffer).
void save_checkpoint(const Model& model, const nlohmann::json& config_echo,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
    Model model;
    nlohmann::json config_echo;
};

/// Throws FormatError on bad magic or an unsupported version.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mml
