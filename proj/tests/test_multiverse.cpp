#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mml/error.hpp"
#include "mml/multiverse.hpp"
#include "oracles.hpp"

using namespace mml;

namespace {

std::vector<CodingVector> random_batch(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<CodingVector> batch(n, CodingVector(d));
    for (auto& x : batch) {
        for (double& v : x) v = rng.normal();
    }
    return batch;
}

void randomize(HeadBank& bank, Rng& rng) {
    for (double& v : bank.flat()) v = 0.5 * rng.normal();
}

}  // namespace

TEST_CASE("init follows the documented layout") {
    Rng rng(1), again(1);
    auto bank = init_head_bank(64, 2, 64, rng);
    CHECK(bank.active_count() == 64);
    CHECK(std::all_of(bank.mask().begin(), bank.mask().end(), [](auto b) { return b == 1; }));
    for (std::size_t j = 0; j < bank.m(); ++j) {
        for (double b : bank.bias(j)) CHECK(b == 0.0);
    }
    CHECK(bank == init_head_bank(64, 2, 64, again));
    CHECK(multiverse_loss(bank) > 0.0);
    CHECK_THROWS_AS(HeadBank(0, 2, 3), InvalidConfig);
    CHECK_THROWS_AS(HeadBank(2, 2, 0), InvalidConfig);
}

TEST_CASE("forward at the origin returns the biases") {
    Rng rng(2);
    HeadBank bank = init_head_bank(4, 3, 5, rng);
    for (double& b : bank.bias(2)) b = 0.7;
    auto logits = forward_heads(bank, std::vector<double>(4, 0.0));
    for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t k = 0; k < 3; ++k) CHECK(logits(j, k) == bank.bias(j)[k]);
    }
    CHECK_THROWS_AS(forward_heads(bank, std::vector<double>(3, 0.0)), ShapeError);
}

TEST_CASE("forward with an identity head and a basis vector") {
    HeadBank bank(3, 3, 2);
    for (std::size_t i = 0; i < 3; ++i) bank.weight(0, i, i) = 1.0;
    auto logits = forward_heads(bank, std::vector<double>{0.0, 1.0, 0.0});
    CHECK(logits(0, 0) == 0.0);
    CHECK(logits(0, 1) == 1.0);
    CHECK(logits(0, 2) == 0.0);
}

TEST_CASE("forward matches an independent matrix product") {
    Rng rng(3);
    HeadBank bank(7, 3, 4);
    randomize(bank, rng);
    auto x = random_batch(1, 7, rng)[0];
    auto logits = forward_heads(bank, x);
    for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k < 3; ++k) {
            long double s = bank.bias(j)[k];
            for (std::size_t i = 0; i < 7; ++i) s += static_cast<long double>(x[i]) * bank.weight(j, i, k);
            CHECK(std::abs(logits(j, k) - static_cast<double>(s)) < 1e-12);
        }
    }
}

TEST_CASE("task loss examples") {
    HeadBank bank(2, 2, 1);
    Matrix logits(1, 2, 0.0);
    auto loss = task_loss(bank, logits, 0.0, TaskKind::classification(2));
    CHECK(loss.heads.per_head[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(loss.total == doctest::Approx(0.693147).epsilon(1e-6));

    HeadBank reg(2, 1, 1);
    Matrix out(1, 1, 0.3);
    CHECK(task_loss(reg, out, 0.5, TaskKind::regression()).total == doctest::Approx(0.04).epsilon(1e-12));

    CHECK_THROWS_AS(task_loss(bank, logits, 2.0, TaskKind::classification(2)), InvalidLabel);
    CHECK_THROWS_AS(task_loss(bank, logits, -1.0, TaskKind::classification(2)), InvalidLabel);
    CHECK_THROWS_AS(task_loss(bank, logits, 0.5, TaskKind::classification(2)), InvalidLabel);
}

TEST_CASE("masked heads contribute nothing to the task loss") {
    Rng rng(4);
    HeadBank bank(3, 2, 3);
    Matrix logits(3, 2);
    for (auto& v : logits.data()) v = 10.0 * rng.normal();
    auto full = task_loss(bank, logits, 1.0, TaskKind::classification(2));
    bank.set_active(1, false);
    auto masked = task_loss(bank, logits, 1.0, TaskKind::classification(2));
    CHECK(masked.heads.per_head[1] == 0.0);
    CHECK(masked.total == doctest::Approx(full.total - full.heads.per_head[1]).epsilon(1e-14));
}

TEST_CASE("multiverse loss hand cases") {
    HeadBank orth(2, 1, 2);
    orth.weight(0, 0, 0) = 1.0;
    orth.weight(1, 1, 0) = 1.0;
    CHECK(multiverse_loss(orth) == 0.0);

    HeadBank same(2, 1, 2);
    same.weight(0, 0, 0) = 1.0;
    same.weight(1, 0, 0) = 1.0;
    CHECK(multiverse_loss(same) == 1.0);
    same.bias(0)[0] = 5.0;
    CHECK(multiverse_loss(same) == 1.0);
}

TEST_CASE("multiverse loss equals the brute-force double loop") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        HeadBank bank(2 + rng.uniform_index(6), 2, 3);
        randomize(bank, rng);
        if (trial % 3 == 0) bank.set_active(rng.uniform_index(3), false);
        CHECK(std::abs(multiverse_loss(bank) - oracle::brute_force_multiverse(bank)) <= 1e-12);
    }
}

TEST_CASE("deactivating a head never increases the multiverse loss") {
    Rng rng(6);
    HeadBank bank(5, 3, 6);
    randomize(bank, rng);
    double prev = multiverse_loss(bank);
    for (std::size_t j = 0; j < 6; ++j) {
        bank.set_active(j, false);
        double now = multiverse_loss(bank);
        CHECK(now <= prev);
        CHECK(now >= 0.0);
        prev = now;
    }
    CHECK(prev == 0.0);
}

TEST_CASE("total loss with lambda zero is the task loss") {
    Rng rng(7);
    HeadBank bank(4, 2, 3);
    randomize(bank, rng);
    auto batch = random_batch(3, 4, rng);
    std::vector<double> labels{0, 1, 1};
    auto g = total_loss(bank, batch, labels, TaskKind::classification(2), 0.0);
    CHECK(g.total == g.task);
    double manual = 0.0;
    for (std::size_t n = 0; n < 3; ++n) {
        manual += task_loss(bank, forward_heads(bank, batch[n]), labels[n], TaskKind::classification(2)).total;
    }
    CHECK(g.task == doctest::Approx(manual / 3.0).epsilon(1e-14));
}

TEST_CASE("single active head has no multiverse term") {
    Rng rng(8);
    HeadBank bank(4, 2, 3);
    randomize(bank, rng);
    bank.set_active(0, false);
    bank.set_active(2, false);
    auto batch = random_batch(2, 4, rng);
    auto g = total_loss(bank, batch, std::vector<double>{1, 0}, TaskKind::classification(2), 0.005);
    CHECK(g.multiverse == 0.0);
    for (std::size_t j : {0u, 2u}) {
        for (std::size_t p = 0; p < bank.head_size(); ++p) CHECK(g.head_grads[j * bank.head_size() + p] == 0.0);
    }
}

TEST_CASE("total loss gradients match finite differences") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const bool regression = trial % 4 == 3;
        const std::size_t c = regression ? 1 : 2 + rng.uniform_index(2);
        const std::size_t d = 3 + rng.uniform_index(5);
        const std::size_t m = 2 + rng.uniform_index(4);
        TaskKind kind = regression ? TaskKind::regression() : TaskKind::classification(c);
        HeadBank bank(d, c, m);
        randomize(bank, rng);
        if (m > 2) bank.set_active(rng.uniform_index(m), false);
        auto batch = random_batch(1 + rng.uniform_index(4), d, rng);
        std::vector<double> labels;
        for (std::size_t n = 0; n < batch.size(); ++n) {
            labels.push_back(regression ? rng.normal() : static_cast<double>(rng.uniform_index(c)));
        }
        const double lambda = 0.005;
        auto g = total_loss(bank, batch, labels, kind, lambda);
        auto objective = [&] { return total_loss(bank, batch, labels, kind, lambda).total; };
        auto flat = bank.flat();
        for (std::size_t p = 0; p < flat.size(); ++p) {
            const std::size_t j = p / bank.head_size();
            double fd = oracle::central_difference(flat, p, 1e-5, objective);
            if (!bank.active(j)) {
                CHECK(g.head_grads[p] == 0.0);
                CHECK(std::abs(fd) <= 1e-9);
            } else {
                CHECK(oracle::relative_error(g.head_grads[p], fd) <= 1e-4);
            }
        }
        for (std::size_t n = 0; n < batch.size(); ++n) {
            for (std::size_t i = 0; i < d; ++i) {
                double fd = oracle::central_difference(batch[n], i, 1e-5, objective);
                CHECK(oracle::relative_error(g.coding_grads[n][i], fd) <= 1e-4);
            }
        }
    }
}

TEST_CASE("total loss validates its inputs") {
    HeadBank bank(2, 2, 2);
    std::vector<CodingVector> batch{{1.0, 0.0}};
    CHECK_THROWS_AS(total_loss(bank, {}, {}, TaskKind::classification(2), 0.0), InvalidInput);
    CHECK_THROWS_AS(total_loss(bank, batch, std::vector<double>{0, 1}, TaskKind::classification(2), 0.0), ShapeError);
    CHECK_THROWS_AS(total_loss(bank, batch, std::vector<double>{0}, TaskKind::classification(2), -1.0), InvalidInput);
    CHECK_THROWS_AS(total_loss(bank, batch, std::vector<double>{0}, TaskKind::classification(3), 0.0), ShapeError);
}

TEST_CASE("orthogonality tables") {
    HeadBank orth(3, 2, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        orth.weight(j, j, 0) = 1.0;
        orth.weight(j, j, 1) = -2.0;
    }
    for (const auto& t : orthogonality_tables(orth)) {
        for (double v : t.data()) CHECK(v == 0.0);
    }

    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        HeadBank bank(4, 3, 5);
        randomize(bank, rng);
        bank.set_active(rng.uniform_index(5), false);
        auto tables = orthogonality_tables(bank);
        REQUIRE(tables.size() == 3);
        double upper = 0.0;
        auto active = bank.active_indices();
        for (const auto& t : tables) {
            for (std::size_t r = 0; r < 5; ++r) CHECK(t(r, r) == 0.0);
            for (std::size_t a = 0; a < active.size(); ++a) {
                for (std::size_t b = a + 1; b < active.size(); ++b) upper += t(active[a], active[b]);
            }
        }
        CHECK(std::abs(upper - multiverse_loss(bank)) <= 1e-12);
        double count = 3.0 * static_cast<double>(active.size() * (active.size() - 1) / 2);
        CHECK(mean_off_diagonal(tables, active) == doctest::Approx(upper / count).epsilon(1e-14));
    }
}

TEST_CASE("orthogonality tables export one csv per class") {
    Rng rng(11);
    auto bank = init_head_bank(3, 2, 4, rng);
    auto dir = std::filesystem::temp_directory_path() / "mml_test_orth";
    std::filesystem::remove_all(dir);
    write_orthogonality_csv(orthogonality_tables(bank), dir);
    for (int k = 0; k < 2; ++k) {
        std::ifstream is(dir / ("orthogonality_class" + std::to_string(k) + ".csv"));
        REQUIRE(is.good());
        std::string line;
        int rows = 0;
        while (std::getline(is, line)) {
            ++rows;
            CHECK(std::count(line.begin(), line.end(), ',') == 3);
        }
        CHECK(rows == 4);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("aggregation examples") {
    HeadBank bank(2, 2, 2);
    bank.bias(0)[0] = 2.0;
    bank.bias(1)[1] = 2.0;
    auto p = aggregate_inference(bank, std::vector<double>{0.3, -0.1}, TaskKind::classification(2));
    CHECK(p.logits[0] == doctest::Approx(1.0));
    CHECK(p.logits[1] == doctest::Approx(1.0));
    CHECK(p.probabilities[0] == doctest::Approx(0.5));

    bank.set_active(1, false);
    auto single = aggregate_inference(bank, std::vector<double>{0.3, -0.1}, TaskKind::classification(2));
    auto own = softmax(forward_heads(bank, std::vector<double>{0.3, -0.1}).row(0));
    CHECK(single.probabilities == own);

    bank.set_active(0, false);
    CHECK_THROWS_AS(aggregate_inference(bank, std::vector<double>{0.3, -0.1}, TaskKind::classification(2)),
                    NoActiveHeads);
}

TEST_CASE("identical heads aggregate to a single head") {
    Rng rng(12);
    HeadBank one(5, 3, 1);
    randomize(one, rng);
    HeadBank many(5, 3, 4);
    for (std::size_t j = 0; j < 4; ++j) std::copy(one.head_params(0).begin(), one.head_params(0).end(), many.head_params(j).begin());
    auto x = random_batch(1, 5, rng)[0];
    auto a = aggregate_inference(one, x, TaskKind::classification(3));
    auto b = aggregate_inference(many, x, TaskKind::classification(3));
    CHECK(a.label == b.label);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(a.probabilities[k] - b.probabilities[k]) < 1e-12);
}

TEST_CASE("aggregation is invariant to permuting active heads") {
    Rng rng(13);
    HeadBank bank(4, 2, 5);
    randomize(bank, rng);
    bank.set_active(3, false);
    std::vector<std::size_t> perm{4, 2, 0, 3, 1};
    HeadBank shuffled(4, 2, 5);
    for (std::size_t j = 0; j < 5; ++j) {
        auto src = bank.head_params(perm[j]);
        std::copy(src.begin(), src.end(), shuffled.head_params(j).begin());
        shuffled.set_active(j, bank.active(perm[j]));
    }
    auto x = random_batch(1, 4, rng)[0];
    auto a = aggregate_inference(bank, x, TaskKind::classification(2));
    auto b = aggregate_inference(shuffled, x, TaskKind::classification(2));
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(a.logits[k] - b.logits[k]) < 1e-12);

    HeadBank reg(4, 1, 2);
    randomize(reg, rng);
    auto r = aggregate_inference(reg, x, TaskKind::regression());
    auto logits = forward_heads(reg, x);
    CHECK(r.value == doctest::Approx((logits(0, 0) + logits(1, 0)) / 2.0));
}
