#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mml/encoder.hpp"
#include "mml/error.hpp"
#include "oracles.hpp"

using namespace mml;

namespace {

EncoderDims small_dims(std::size_t feature_dim = 64, std::vector<std::size_t> hidden = {8}, std::size_t out = 6) {
    EncoderDims d;
    d.feature_dim = feature_dim;
    d.hidden_dims = std::move(hidden);
    d.output_dim = out;
    return d;
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits punctuation") {
    auto t = tokenize("The cat, sat.  On\tTHE mat!");
    std::vector<std::string> expect{"the", "cat", ",", "sat", ".", "on", "the", "mat", "!"};
    CHECK(t == expect);
    CHECK(tokenize("   ").empty());
}

TEST_CASE("featurize is deterministic and unit norm") {
    auto pair = SentencePair::from_text("a man is playing a guitar", "a person plays music");
    auto a = featurize(pair, 512);
    auto b = featurize(pair, 512);
    CHECK(a.indices == b.indices);
    CHECK(a.values == b.values);
    double sq = 0.0;
    for (double v : a.values) sq += v * v;
    CHECK(std::abs(sq - 1.0) < 1e-12);
    for (std::size_t i = 1; i < a.indices.size(); ++i) CHECK(a.indices[i - 1] < a.indices[i]);
}

TEST_CASE("featurize of an empty pair is the zero vector") {
    auto f = featurize(SentencePair{}, 128);
    CHECK(f.nnz() == 0);
    CHECK(f.dim == 128);
}

TEST_CASE("featurize distinguishes sentence order") {
    auto ab = featurize(SentencePair::from_text("dogs bark loudly", "cats meow"), 4096);
    auto ba = featurize(SentencePair::from_text("cats meow", "dogs bark loudly"), 4096);
    CHECK(ab.to_dense() != ba.to_dense());
}

TEST_CASE("init gives zero biases and the documented scale") {
    Rng rng(3);
    auto dims = small_dims(256, {200}, 100);
    auto p = init_encoder(dims, rng);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        for (double b : p.bias(l)) CHECK(b == 0.0);
    }
    // Second layer: N(0, 1/200), 20000 samples.
    double sq = 0.0;
    for (double w : p.weight(1)) sq += w * w;
    CHECK(sq / static_cast<double>(p.weight(1).size()) == doctest::Approx(1.0 / 200.0).epsilon(0.05));
}

TEST_CASE("encoding the zero input yields the output layer's response to zero") {
    Rng rng(5);
    auto dims = small_dims(32, {4}, 3);
    auto p = init_encoder(dims, rng);
    for (double& b : p.bias(0)) b = 0.3;
    for (double& b : p.bias(1)) b = -0.2;
    SparseVector zero;
    zero.dim = 32;
    auto y = encode(p, zero);
    for (std::size_t o = 0; o < 3; ++o) {
        double expect = -0.2;
        for (std::size_t i = 0; i < 4; ++i) expect += p.weight(1)[o * 4 + i] * std::tanh(0.3);
        CHECK(std::abs(y[o] - expect) < 1e-14);
    }
}

TEST_CASE("a single affine layer selects a weight column plus bias") {
    EncoderDims dims = small_dims(10, {}, 3);
    Rng rng(9);
    auto p = init_encoder(dims, rng);
    for (std::size_t o = 0; o < 3; ++o) p.bias(0)[o] = 0.1 * static_cast<double>(o + 1);
    SparseVector e;
    e.dim = 10;
    e.indices = {7};
    e.values = {1.0};
    auto y = encode(p, e);
    for (std::size_t o = 0; o < 3; ++o) CHECK(y[o] == doctest::Approx(p.weight(0)[o * 10 + 7] + p.bias(0)[o]).epsilon(1e-15));
}

TEST_CASE("forward matches a straight-line re-implementation") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> hidden;
        std::size_t layers = rng.uniform_index(3);
        for (std::size_t l = 0; l < layers; ++l) hidden.push_back(2 + rng.uniform_index(10));
        auto dims = small_dims(16 + rng.uniform_index(100), hidden, 1 + rng.uniform_index(8));
        auto p = init_encoder(dims, rng);
        for (double& v : p.flat()) v += 0.05 * rng.normal();  // non-zero biases
        auto pair = SentencePair::from_text("the quick brown fox " + std::to_string(trial), "jumps over the dog");
        auto x = featurize(pair, dims.feature_dim);
        auto y = encode(p, pair);
        auto ref = oracle::straight_line_encode(p, x.to_dense());
        REQUIRE(y.size() == ref.size());
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);
    }
}

TEST_CASE("backward matches finite differences on parameters and input") {
    Rng rng(77);
    for (int trial = 0; trial < 6; ++trial) {
        auto dims = small_dims(24, trial % 2 ? std::vector<std::size_t>{5, 4} : std::vector<std::size_t>{6}, 3);
        auto p = init_encoder(dims, rng);
        for (double& v : p.flat()) v += 0.1 * rng.normal();
        auto x = featurize(SentencePair::from_text("alpha beta gamma delta", "beta epsilon"), dims.feature_dim);
        std::vector<double> upstream(dims.output_dim);
        for (double& u : upstream) u = rng.normal();
        auto objective = [&] {
            auto y = encode(p, x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
            return s;
        };
        EncoderCache cache;
        encode(p, x, &cache);
        std::vector<double> grad(p.flat().size(), 0.0);
        std::vector<double> grad_in;
        encode_backward(p, cache, upstream, grad, &grad_in);
        auto flat = p.flat();
        for (std::size_t k = 0; k < flat.size(); ++k) {
            double fd = oracle::central_difference(flat, k, 1e-5, objective);
            CHECK(oracle::relative_error(grad[k], fd) <= 1e-4);
        }
        // Input gradient via a dense copy of the features.
        std::vector<double> dense = x.to_dense();
        auto dense_objective = [&] {
            auto y = oracle::straight_line_encode(p, dense);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
            return s;
        };
        REQUIRE(grad_in.size() == dense.size());
        for (std::size_t k = 0; k < dense.size(); ++k) {
            double fd = oracle::central_difference(dense, k, 1e-5, dense_objective);
            CHECK(oracle::relative_error(grad_in[k], fd) <= 1e-4);
        }
    }
}

TEST_CASE("single linear layer weight gradient is the outer product") {
    auto dims = small_dims(12, {}, 4);
    Rng rng(2);
    auto p = init_encoder(dims, rng);
    auto x = featurize(SentencePair::from_text("one two three"), 12);
    EncoderCache cache;
    encode(p, x, &cache);
    std::vector<double> g{0.5, -1.0, 2.0, 0.25};
    std::vector<double> grad(p.flat().size(), 0.0);
    encode_backward(p, cache, g, grad);
    auto dense = x.to_dense();
    for (std::size_t o = 0; o < 4; ++o) {
        for (std::size_t i = 0; i < 12; ++i) CHECK(grad[p.offset(0) + o * 12 + i] == doctest::Approx(g[o] * dense[i]));
        CHECK(grad[p.offset(0) + 4 * 12 + o] == doctest::Approx(g[o]));
    }
}

TEST_CASE("backward rejects a mismatched cache") {
    Rng rng(1);
    auto p = init_encoder(small_dims(), rng);
    EncoderCache cache;
    std::vector<double> grad(p.flat().size(), 0.0);
    CHECK_THROWS_AS(encode_backward(p, cache, std::vector<double>(6, 1.0), grad), ShapeError);
}

TEST_CASE("hashed encoder satisfies the backbone interface") {
    Rng rng(4);
    HashedMlpEncoder enc(init_encoder(small_dims(), rng));
    Encoder& base = enc;
    EncoderCache cache;
    auto y = base.forward(SentencePair::from_text("hello world"), cache);
    CHECK(y.size() == base.output_dim());
    std::vector<double> grad(base.parameters().size(), 0.0);
    base.backward(cache, std::vector<double>(y.size(), 1.0), grad);
    double norm = 0.0;
    for (double v : grad) norm += v * v;
    CHECK(norm > 0.0);
}
