#pragma once

// Reference pieces shared by the trainer tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mml/data.hpp"
#include "mml/encoder.hpp"
#include "mml/multiverse.hpp"
#include "mml/numerics.hpp"

namespace reference {

/// Plain single-head softmax classifier on top of the encoder, trained with
/// Adam. Written without the head bank, the loss module or the trainer.
struct SingleHeadRun {
    mml::EncoderParams encoder;
    std::vector<double> head;  // d x c weights (row-major), then c biases
};

inline SingleHeadRun single_head_trainer(const mml::Dataset& data, const mml::EncoderDims& dims,
                                         std::size_t classes, double alpha, std::size_t batch_size,
                                         std::size_t epochs, std::uint64_t seed,
                                         const std::function<void(const SingleHeadRun&)>& after_step = {}) {
    mml::Rng root(seed);
    mml::Rng init_rng = root.split();
    mml::Rng shuffle_rng = root.split();

    SingleHeadRun run;
    run.encoder = mml::init_encoder(dims, init_rng);
    const std::size_t d = dims.output_dim;
    const std::size_t c = classes;
    run.head.assign(d * c + c, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t p = 0; p < d * c; ++p) run.head[p] = scale * init_rng.normal();

    mml::AdamState enc_state(run.encoder.flat().size());
    mml::AdamState head_state(run.head.size());

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, order.size());
            const double t = static_cast<double>(stop - start);
            std::vector<double> g_head(run.head.size(), 0.0);
            std::vector<double> g_enc(run.encoder.flat().size(), 0.0);
            std::vector<mml::EncoderCache> caches(stop - start);
            std::vector<std::vector<double>> g_codes;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& ex = data.examples[order[i]];
                auto x = mml::encode(run.encoder, ex.pair, &caches[i - start]);
                std::vector<double> z(c);
                for (std::size_t k = 0; k < c; ++k) {
                    double s = run.head[d * c + k];
                    for (std::size_t r = 0; r < d; ++r) s += x[r] * run.head[r * c + k];
                    z[k] = s;
                }
                auto p = mml::softmax(z);
                std::vector<double> dz(c);
                for (std::size_t k = 0; k < c; ++k) {
                    dz[k] = p[k] - (k == static_cast<std::size_t>(ex.label) ? 1.0 : 0.0);
                    dz[k] /= t;
                }
                std::vector<double> g_code(d, 0.0);
                for (std::size_t r = 0; r < d; ++r) {
                    for (std::size_t k = 0; k < c; ++k) {
                        g_head[r * c + k] += x[r] * dz[k];
                        g_code[r] += run.head[r * c + k] * dz[k];
                    }
                }
                for (std::size_t k = 0; k < c; ++k) g_head[d * c + k] += dz[k];
                g_codes.push_back(std::move(g_code));
            }
            for (std::size_t i = 0; i < caches.size(); ++i) {
                mml::encode_backward(run.encoder, caches[i], g_codes[i], g_enc);
            }
            mml::adam_update(run.encoder.flat(), g_enc, enc_state, alpha);
            mml::adam_update(run.head, g_head, head_state, alpha);
            if (after_step) after_step(run);
        }
    }
    return run;
}

/// Gradient of the total objective with respect to encoder parameters for a
/// batch, assembled from the loss module and the encoder backward pass.
inline std::vector<double> encoder_gradient(const mml::EncoderParams& enc, const mml::HeadBank& bank,
                                            const std::vector<const mml::Example*>& batch,
                                            mml::TaskKind kind, double lambda,
                                            std::vector<double>* head_grads = nullptr) {
    std::vector<mml::CodingVector> codes;
    std::vector<mml::EncoderCache> caches(batch.size());
    std::vector<double> labels;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        codes.push_back(mml::encode(enc, batch[n]->pair, &caches[n]));
        labels.push_back(batch[n]->label);
    }
    auto lg = mml::total_loss(bank, codes, labels, kind, lambda);
    std::vector<double> grad(enc.flat().size(), 0.0);
    for (std::size_t n = 0; n < batch.size(); ++n) mml::encode_backward(enc, caches[n], lg.coding_grads[n], grad);
    if (head_grads) *head_grads = lg.head_grads;
    return grad;
}

inline double objective(const mml::EncoderParams& enc, const mml::HeadBank& bank,
                        const std::vector<const mml::Example*>& batch, mml::TaskKind kind, double lambda) {
    std::vector<mml::CodingVector> codes;
    std::vector<double> labels;
    for (const auto* ex : batch) {
        codes.push_back(mml::encode(enc, ex->pair));
        labels.push_back(ex->label);
    }
    return mml::total_loss(bank, codes, labels, kind, lambda).total;
}

}  // namespace reference
