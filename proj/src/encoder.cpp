#include "mml/encoder.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "mml/error.hpp"

namespace mml {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t kSaltFirst = 0x51a7f1e5;
constexpr std::uint64_t kSaltSecond = 0x5ec0d2a1;
constexpr std::uint64_t kSaltCross = 0xc7055a17;

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t hash_gram(std::uint64_t salt, std::string_view a, std::string_view b = {}) {
    std::uint64_t h = kFnvOffset ^ (salt * kFnvPrime);
    h = fnv1a(h, a);
    if (!b.empty()) {
        h = fnv1a(h, "\x1f");
        h = fnv1a(h, b);
    }
    // Final avalanche so low bits are usable for small feature_dim.
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

void add_sentence(std::map<std::uint32_t, double>& acc, const std::vector<std::string>& tokens,
                  std::uint64_t salt, std::size_t dim) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        acc[static_cast<std::uint32_t>(hash_gram(salt, tokens[i]) % dim)] += 1.0;
        if (i + 1 < tokens.size()) {
            acc[static_cast<std::uint32_t>(hash_gram(salt + 1, tokens[i], tokens[i + 1]) % dim)] +=
                1.0;
        }
    }
}

void check_cache(const EncoderParams& params, const EncoderCache& cache) {
    if (cache.activations.size() != params.layer_count() ||
        cache.input.dim != params.dims().feature_dim) {
        throw ShapeError("encoder cache does not match parameters");
    }
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        if (cache.activations[l].size() != params.out_dim(l)) {
            throw ShapeError("encoder cache layer " + std::to_string(l) + " has wrong width");
        }
    }
}

}  // namespace

SentencePair SentencePair::from_text(std::string_view first, std::string_view second) {
    return SentencePair{tokenize(first), tokenize(second)};
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (char raw : text) {
        auto ch = static_cast<unsigned char>(raw);
        if (std::isspace(ch)) {
            flush();
        } else if (ch < 0x80 && std::ispunct(ch)) {
            flush();
            tokens.emplace_back(1, raw);
        } else {
            current.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : raw);
        }
    }
    flush();
    return tokens;
}

std::vector<double> SparseVector::to_dense() const {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
    return out;
}

SparseVector featurize(const SentencePair& pair, std::size_t feature_dim) {
    if (feature_dim < 1) throw InvalidInput("featurize: feature_dim must be >= 1");
    std::map<std::uint32_t, double> acc;
    add_sentence(acc, pair.first, kSaltFirst, feature_dim);
    add_sentence(acc, pair.second, kSaltSecond, feature_dim);

    std::set<std::string_view> first_words(pair.first.begin(), pair.first.end());
    std::set<std::string_view> shared;
    for (const auto& tok : pair.second) {
        if (first_words.count(tok)) shared.insert(tok);
    }
    for (std::string_view tok : shared) {
        acc[static_cast<std::uint32_t>(hash_gram(kSaltCross, tok) % feature_dim)] += 1.0;
    }

    SparseVector out;
    out.dim = feature_dim;
    double norm_sq = 0.0;
    for (const auto& [idx, v] : acc) {
        out.indices.push_back(idx);
        out.values.push_back(v);
        norm_sq += v * v;
    }
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (double& v : out.values) v *= inv;
    }
    return out;
}

EncoderParams::EncoderParams(EncoderDims dims) : dims_(std::move(dims)) {
    if (dims_.feature_dim < 1 || dims_.output_dim < 1) {
        throw InvalidConfig("encoder dimensions must be >= 1");
    }
    std::size_t prev = dims_.feature_dim;
    std::size_t offset = 0;
    auto add_layer = [&](std::size_t out) {
        if (out < 1) throw InvalidConfig("encoder hidden width must be >= 1");
        in_dims_.push_back(prev);
        out_dims_.push_back(out);
        offsets_.push_back(offset);
        offset += prev * out + out;
        prev = out;
    };
    for (std::size_t h : dims_.hidden_dims) add_layer(h);
    add_layer(dims_.output_dim);
    flat_.assign(offset, 0.0);
}

std::span<double> EncoderParams::weight(std::size_t l) {
    return std::span<double>(flat_).subspan(offsets_[l], in_dims_[l] * out_dims_[l]);
}
std::span<const double> EncoderParams::weight(std::size_t l) const {
    return std::span<const double>(flat_).subspan(offsets_[l], in_dims_[l] * out_dims_[l]);
}
std::span<double> EncoderParams::bias(std::size_t l) {
    return std::span<double>(flat_).subspan(offsets_[l] + in_dims_[l] * out_dims_[l],
                                            out_dims_[l]);
}
std::span<const double> EncoderParams::bias(std::size_t l) const {
    return std::span<const double>(flat_).subspan(offsets_[l] + in_dims_[l] * out_dims_[l],
                                                  out_dims_[l]);
}

EncoderParams init_encoder(const EncoderDims& dims, Rng& rng) {
    EncoderParams params(dims);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        double scale = l == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(params.in_dim(l)));
        for (double& w : params.weight(l)) w = scale * rng.normal();
    }
    return params;
}

CodingVector encode(const EncoderParams& params, const SparseVector& features,
                    EncoderCache* cache) {
    if (features.dim != params.dims().feature_dim) {
        throw ShapeError("encode: features have dim " + std::to_string(features.dim) +
                         ", encoder expects " + std::to_string(params.dims().feature_dim));
    }
    const std::size_t layers = params.layer_count();
    std::vector<std::vector<double>> acts(layers);

    {
        const std::size_t in = params.in_dim(0);
        const std::size_t out = params.out_dim(0);
        auto w = params.weight(0);
        auto b = params.bias(0);
        std::vector<double> h(b.begin(), b.end());
        for (std::size_t o = 0; o < out; ++o) {
            const double* row = w.data() + o * in;
            for (std::size_t k = 0; k < features.nnz(); ++k) {
                h[o] += row[features.indices[k]] * features.values[k];
            }
        }
        if (layers > 1) {
            for (double& v : h) v = std::tanh(v);
        }
        acts[0] = std::move(h);
    }
    for (std::size_t l = 1; l < layers; ++l) {
        const std::size_t in = params.in_dim(l);
        const std::size_t out = params.out_dim(l);
        if (acts[l - 1].size() != in) throw ShapeError("encode: layer width mismatch");
        auto w = params.weight(l);
        auto b = params.bias(l);
        std::vector<double> h(out);
        for (std::size_t o = 0; o < out; ++o) {
            h[o] = b[o] + dot(w.subspan(o * in, in), acts[l - 1]);
        }
        if (l + 1 < layers) {
            for (double& v : h) v = std::tanh(v);
        }
        acts[l] = std::move(h);
    }

    CodingVector coding = acts.back();
    if (cache) {
        cache->input = features;
        cache->activations = std::move(acts);
    }
    return coding;
}

CodingVector encode(const EncoderParams& params, const SentencePair& pair, EncoderCache* cache) {
    return encode(params, featurize(pair, params.dims().feature_dim), cache);
}

void encode_backward(const EncoderParams& params, const EncoderCache& cache,
                     std::span<const double> grad_coding, std::span<double> grad_params,
                     std::vector<double>* grad_input) {
    check_cache(params, cache);
    if (grad_coding.size() != params.dims().output_dim) {
        throw ShapeError("encode_backward: upstream gradient has wrong length");
    }
    if (grad_params.size() != params.flat().size()) {
        throw ShapeError("encode_backward: gradient buffer has wrong length");
    }

    // delta holds the gradient with respect to the current layer's pre-activation.
    std::vector<double> delta(grad_coding.begin(), grad_coding.end());
    for (std::size_t l = params.layer_count(); l-- > 0;) {
        const std::size_t in = params.in_dim(l);
        const std::size_t out = params.out_dim(l);
        auto w = params.weight(l);
        double* gw = grad_params.data() + params.offset(l);
        double* gb = gw + in * out;

        if (l == 0) {
            const auto& x = cache.input;
            for (std::size_t o = 0; o < out; ++o) {
                double d = delta[o];
                for (std::size_t k = 0; k < x.nnz(); ++k) {
                    gw[o * in + x.indices[k]] += d * x.values[k];
                }
                gb[o] += d;
            }
            if (grad_input) {
                grad_input->assign(in, 0.0);
                for (std::size_t o = 0; o < out; ++o) {
                    for (std::size_t i = 0; i < in; ++i) (*grad_input)[i] += w[o * in + i] * delta[o];
                }
            }
            break;
        }

        const auto& x = cache.activations[l - 1];
        std::vector<double> prev(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double d = delta[o];
            for (std::size_t i = 0; i < in; ++i) {
                gw[o * in + i] += d * x[i];
                prev[i] += w[o * in + i] * d;
            }
            gb[o] += d;
        }
        // x = tanh(pre) so d/dpre = 1 - x^2.
        for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - x[i] * x[i];
        delta = std::move(prev);
    }
}

}  // namespace mml
