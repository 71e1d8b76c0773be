#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mml/encoder.hpp"
#include "mml/numerics.hpp"

namespace mml {

struct TaskKind {
    enum class Type { classification, regression };

    Type type = Type::classification;
    std::size_t classes = 2;

    static TaskKind classification(std::size_t classes) { return {Type::classification, classes}; }
    static TaskKind regression() { return {Type::regression, 1}; }

    bool is_regression() const { return type == Type::regression; }
    /// Logit width of one head: c for classification, 1 for regression.
    std::size_t output_width() const { return is_regression() ? 1 : classes; }

    friend bool operator==(const TaskKind&, const TaskKind&) = default;
};

/// m parallel linear heads over a d-dimensional coding vector, plus the
/// activity mask. Each head is stored contiguously as its d x c weight
/// matrix (row-major, column k holds the class-k weights) followed by its
/// c biases, so a head can be optimized as one parameter block.
class HeadBank {
public:
    HeadBank() = default;
    HeadBank(std::size_t d, std::size_t c, std::size_t m);  // zero weights, all active

    std::size_t d() const { return d_; }
    std::size_t c() const { return c_; }
    std::size_t m() const { return m_; }
    std::size_t head_size() const { return d_ * c_ + c_; }

    std::span<double> head_params(std::size_t j);
    std::span<const double> head_params(std::size_t j) const;
    std::span<double> weights(std::size_t j) { return head_params(j).first(d_ * c_); }
    std::span<const double> weights(std::size_t j) const { return head_params(j).first(d_ * c_); }
    std::span<double> bias(std::size_t j) { return head_params(j).last(c_); }
    std::span<const double> bias(std::size_t j) const { return head_params(j).last(c_); }

    /// Entry (row i, class k) of head j's weight matrix.
    double& weight(std::size_t j, std::size_t i, std::size_t k) {
        return flat_[j * head_size() + i * c_ + k];
    }
    double weight(std::size_t j, std::size_t i, std::size_t k) const {
        return flat_[j * head_size() + i * c_ + k];
    }

    bool active(std::size_t j) const { return mask_[j] != 0; }
    void set_active(std::size_t j, bool on) { mask_[j] = on ? 1 : 0; }
    std::size_t active_count() const;
    std::vector<std::size_t> active_indices() const;
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    std::span<double> flat() { return flat_; }
    std::span<const double> flat() const { return flat_; }

    friend bool operator==(const HeadBank&, const HeadBank&) = default;

private:
    std::size_t d_ = 0;
    std::size_t c_ = 0;
    std::size_t m_ = 0;
    std::vector<double> flat_;
    std::vector<std::uint8_t> mask_;
};

/// Weights i.i.d. N(0, 1/d), zero biases, every head active.
HeadBank init_head_bank(std::size_t d, std::size_t c, std::size_t m, Rng& rng);

/// Row j holds head j's logits d^T F^j + b_j, for inactive heads too.
Matrix forward_heads(const HeadBank& bank, std::span<const double> coding);

struct HeadLosses {
    std::vector<double> per_head;  // 0 for inactive heads
};

struct TaskLoss {
    double total = 0.0;
    HeadLosses heads;
};

/// Per-head loss for one example: negative log-likelihood for
/// classification (label is the class index), squared error for regression.
TaskLoss task_loss(const HeadBank& bank, const Matrix& logits, double label, TaskKind kind);

/// Sum over classes k and active head pairs r < s of |<f_r^(k), f_s^(k)>|.
double multiverse_loss(const HeadBank& bank);

struct LossGradients {
    double total = 0.0;
    double task = 0.0;
    double multiverse = 0.0;
    HeadLosses heads;  // batch means
    /// Laid out like bank.flat(). Inactive heads receive zeros.
    std::vector<double> head_grads;
    /// One gradient per coding vector of the batch.
    std::vector<std::vector<double>> coding_grads;
};

/// task (averaged over the batch) + lambda * multiverse, with gradients.
LossGradients total_loss(const HeadBank& bank, std::span<const CodingVector> batch,
                         std::span<const double> labels, TaskKind kind, double lambda);

/// One m x m table per class: |<f_r^(k), f_s^(k)>| off the diagonal, 0 on it.
std::vector<Matrix> orthogonality_tables(const HeadBank& bank);

/// Mean strict-upper-triangle entry over the given heads, averaged across
/// tables. Returns 0 when fewer than two heads are given.
double mean_off_diagonal(const std::vector<Matrix>& tables, std::span<const std::size_t> heads);

/// Writes `<prefix>_class<k>.csv` per table into dir.
void write_orthogonality_csv(const std::vector<Matrix>& tables, const std::filesystem::path& dir,
                             const std::string& prefix = "orthogonality");

struct Prediction {
    std::vector<double> logits;         // averaged over active heads
    std::vector<double> probabilities;  // classification only
    std::size_t label = 0;              // classification only
    double value = 0.0;                 // regression only
};

/// Averages the active heads' logits, then applies softmax for
/// classification. Throws NoActiveHeads when the mask is all zero.
Prediction aggregate_inference(const HeadBank& bank, std::span<const double> coding,
                               TaskKind kind);

}  // namespace mml
