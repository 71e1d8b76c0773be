#include "mml/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mml/error.hpp"

namespace mml {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(const std::string& in, std::size_t& pos, int bytes) {
    if (pos + static_cast<std::size_t>(bytes) > in.size()) {
        throw FormatError("checkpoint truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    pos += static_cast<std::size_t>(bytes);
    return v;
}

void put_doubles(std::string& out, std::span<const double> values) {
    for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void get_doubles(const std::string& in, std::size_t& pos, std::span<double> values) {
    for (double& v : values) v = std::bit_cast<double>(get_uint(in, pos, 8));
}

}  // namespace

Prediction Model::predict(const SentencePair& pair) const {
    return aggregate_inference(heads, encode(encoder.params(), pair), kind);
}

void save_checkpoint(const Model& model, const nlohmann::json& config_echo,
                     const std::filesystem::path& path) {
    const auto& dims = model.encoder.params().dims();
    nlohmann::json header = {
        {"format", "mml-checkpoint"},
        {"version", kCheckpointVersion},
        {"task", model.kind.is_regression() ? "regression" : "classification"},
        {"classes", model.kind.classes},
        {"class_names", model.class_names},
        {"dataset", model.dataset_name},
        {"encoder",
         {{"feature_dim", dims.feature_dim},
          {"hidden_dims", dims.hidden_dims},
          {"output_dim", dims.output_dim},
          {"parameter_count", model.encoder.params().flat().size()}}},
        {"heads",
         {{"d", model.heads.d()},
          {"c", model.heads.c()},
          {"m", model.heads.m()},
          {"active", model.heads.mask()},
          {"parameter_count", model.heads.flat().size()}}},
        {"config", config_echo},
    };
    const std::string header_text = header.dump();

    std::string blob(kCheckpointMagic, sizeof kCheckpointMagic);
    put_u32(blob, kCheckpointVersion);
    put_u64(blob, header_text.size());
    blob += header_text;
    put_doubles(blob, model.encoder.params().flat());
    put_doubles(blob, model.heads.flat());

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInput("cannot write checkpoint " + path.string());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!os) throw InvalidInput("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open checkpoint " + path.string());
    std::string blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    if (blob.size() < sizeof kCheckpointMagic ||
        std::memcmp(blob.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw FormatError(path.string() + " is not a checkpoint (bad magic)");
    }
    std::size_t pos = sizeof kCheckpointMagic;
    auto version = static_cast<std::uint32_t>(get_uint(blob, pos, 4));
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint format version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) +
                          ")");
    }
    auto header_len = get_uint(blob, pos, 8);
    if (pos + header_len > blob.size()) throw FormatError("checkpoint truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    pos += header_len;

    LoadedCheckpoint out;
    try {
        EncoderDims dims;
        dims.feature_dim = header.at("encoder").at("feature_dim").get<std::size_t>();
        dims.hidden_dims = header.at("encoder").at("hidden_dims").get<std::vector<std::size_t>>();
        dims.output_dim = header.at("encoder").at("output_dim").get<std::size_t>();
        EncoderParams params(dims);

        const auto& h = header.at("heads");
        HeadBank bank(h.at("d").get<std::size_t>(), h.at("c").get<std::size_t>(),
                      h.at("m").get<std::size_t>());
        auto mask = h.at("active").get<std::vector<int>>();
        if (mask.size() != bank.m()) throw FormatError("checkpoint mask length mismatch");
        for (std::size_t j = 0; j < mask.size(); ++j) bank.set_active(j, mask[j] != 0);

        if (header.at("encoder").at("parameter_count").get<std::size_t>() != params.flat().size() ||
            h.at("parameter_count").get<std::size_t>() != bank.flat().size()) {
            throw FormatError("checkpoint parameter counts do not match its dimensions");
        }
        get_doubles(blob, pos, params.flat());
        get_doubles(blob, pos, bank.flat());
        if (pos != blob.size()) throw FormatError("checkpoint has trailing bytes");

        out.model.encoder = HashedMlpEncoder(std::move(params));
        out.model.heads = std::move(bank);
        out.model.kind = header.at("task").get<std::string>() == "regression"
                             ? TaskKind::regression()
                             : TaskKind::classification(header.at("classes").get<std::size_t>());
        out.model.class_names = header.at("class_names").get<std::vector<std::string>>();
        out.model.dataset_name = header.at("dataset").get<std::string>();
        out.config_echo = header.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    return out;
}

}  // namespace mml
