#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mml/numerics.hpp"

namespace mml {

/// Two token sequences; `second` is empty for single-sentence tasks.
struct SentencePair {
    std::vector<std::string> first;
    std::vector<std::string> second;

    static SentencePair from_text(std::string_view first, std::string_view second = {});

    friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

/// Lowercases ASCII, splits on whitespace, and emits each ASCII punctuation
/// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

struct SparseVector {
    std::size_t dim = 0;
    std::vector<std::uint32_t> indices;  // strictly increasing
    std::vector<double> values;

    std::size_t nnz() const { return indices.size(); }
    std::vector<double> to_dense() const;
};

/// Hashed bag of unigrams and bigrams. Each sentence has its own salt, and a
/// third salt marks unigrams shared by both sentences. L2-normalized unless
/// empty.
SparseVector featurize(const SentencePair& pair, std::size_t feature_dim);

using CodingVector = std::vector<double>;

struct EncoderDims {
    std::size_t feature_dim = 4096;
    std::vector<std::size_t> hidden_dims{128};
    std::size_t output_dim = 64;

    friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// Feed-forward encoder parameters held in one flat buffer. Layer l has an
/// out x in row-major weight block followed by its bias.
class EncoderParams {
public:
    EncoderParams() = default;
    explicit EncoderParams(EncoderDims dims);  // zero-filled

    const EncoderDims& dims() const { return dims_; }
    std::size_t layer_count() const { return in_dims_.size(); }
    std::size_t in_dim(std::size_t layer) const { return in_dims_[layer]; }
    std::size_t out_dim(std::size_t layer) const { return out_dims_[layer]; }

    std::span<double> weight(std::size_t layer);
    std::span<const double> weight(std::size_t layer) const;
    std::span<double> bias(std::size_t layer);
    std::span<const double> bias(std::size_t layer) const;

    std::span<double> flat() { return flat_; }
    std::span<const double> flat() const { return flat_; }

    /// Offset of a layer's weight block inside flat(); bias follows it.
    std::size_t offset(std::size_t layer) const { return offsets_[layer]; }

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

private:
    EncoderDims dims_;
    std::vector<std::size_t> in_dims_;
    std::vector<std::size_t> out_dims_;
    std::vector<std::size_t> offsets_;
    std::vector<double> flat_;
};

/// Gaussian weights scaled by 1/sqrt(fan_in) (fan_in of the hashed layer is
/// taken as 1 since its input is unit norm); zero biases.
EncoderParams init_encoder(const EncoderDims& dims, Rng& rng);

struct EncoderCache {
    SparseVector input;
    /// activations[l] is the output of layer l (tanh applied on hidden layers).
    std::vector<std::vector<double>> activations;
};

CodingVector encode(const EncoderParams& params, const SparseVector& features,
                    EncoderCache* cache = nullptr);
CodingVector encode(const EncoderParams& params, const SentencePair& pair,
                    EncoderCache* cache = nullptr);

/// Reverse-mode pass. Parameter gradients are accumulated into grad_params
/// (laid out like params.flat()). When grad_input is non-null it receives
/// the dense gradient with respect to the hashed features.
void encode_backward(const EncoderParams& params, const EncoderCache& cache,
                     std::span<const double> grad_coding, std::span<double> grad_params,
                     std::vector<double>* grad_input = nullptr);

/// What the trainer needs from a backbone. A pretrained model can implement
/// this without changes to the training loop.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual std::size_t output_dim() const = 0;
    virtual std::span<double> parameters() = 0;
    virtual std::span<const double> parameters() const = 0;
    virtual CodingVector forward(const SentencePair& pair, EncoderCache& cache) const = 0;
    virtual void backward(const EncoderCache& cache, std::span<const double> grad_coding,
                          std::span<double> grad_params) const = 0;
};

/// Reference backbone: hashed n-gram features into a tanh MLP.
class HashedMlpEncoder final : public Encoder {
public:
    HashedMlpEncoder() = default;
    explicit HashedMlpEncoder(EncoderParams params) : params_(std::move(params)) {}

    const EncoderParams& params() const { return params_; }
    EncoderParams& params() { return params_; }

    std::size_t output_dim() const override { return params_.dims().output_dim; }
    std::span<double> parameters() override { return params_.flat(); }
    std::span<const double> parameters() const override { return params_.flat(); }
    CodingVector forward(const SentencePair& pair, EncoderCache& cache) const override {
        return encode(params_, pair, &cache);
    }
    void backward(const EncoderCache& cache, std::span<const double> grad_coding,
                  std::span<double> grad_params) const override {
        encode_backward(params_, cache, grad_coding, grad_params);
    }

private:
    EncoderParams params_;
};

}  // namespace mml
