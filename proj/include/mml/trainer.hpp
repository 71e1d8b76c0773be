#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mml/data.hpp"
#include "mml/model.hpp"
#include "mml/multiverse.hpp"
#include "mml/numerics.hpp"

namespace mml {

/// Defaults: K = 1000, gamma = 0.99,
/// threshold = 5, alpha = 2e-5, lambda = 0.005, batch size 32.
struct TrainerConfig {
    std::size_t K = 1000;          // steps between prune checks
    double gamma = 0.99;           // EMA momentum
    std::size_t threshold = 5;     // minimum active heads for a prune check
    double alpha = 2e-5;           // Adam learning rate
    double lambda = 0.005;         // multiverse loss weight
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    TaskKind kind = TaskKind::classification(2);
    std::size_t m = 0;             // number of heads; 0 means one per coding dimension
    bool prune_enabled = true;

    void validate() const;
};

struct EmaTracker {
    std::vector<double> a;

    EmaTracker() = default;
    explicit EmaTracker(std::size_t m) : a(m, 0.0) {}
};

/// a_j <- gamma * a_j + (1 - gamma) * loss_j for active heads; inactive
/// entries stay frozen.
void ema_update(EmaTracker& tracker, const HeadLosses& losses, const HeadBank& bank, double gamma);

struct PruneRecord {
    std::size_t step = 0;
    std::size_t n_clusters = 0;
    double bandwidth = 0.0;
    std::vector<std::size_t> survivors;
    std::vector<std::size_t> eliminated;
    /// EMA of every head that was active when the check ran, keyed by head.
    std::vector<std::pair<std::size_t, double>> ema;
};

/// No-op (nullopt) when fewer than `threshold` heads are active. Otherwise
/// clusters the active EMAs and, if at least two clusters are found,
/// deactivates every active head outside the lowest-centroid cluster. A
/// record is returned whenever clustering ran.
std::optional<PruneRecord> prune_heads(const EmaTracker& tracker, HeadBank& bank,
                                       std::size_t threshold, std::size_t step);

struct StepRecord {
    std::size_t step = 0;
    double total_loss = 0.0;
    double task_loss = 0.0;
    double mv_loss = 0.0;
    std::size_t active_heads = 0;
};

struct TrainTrace {
    std::vector<StepRecord> steps;
    std::vector<PruneRecord> prunes;  // only checks that found >= 2 clusters
    std::vector<std::pair<std::size_t, double>> dev_metrics;  // (step, metric) per epoch
};

struct OptimizerState {
    AdamState encoder;
    std::vector<AdamState> heads;

    static OptimizerState for_model(const Encoder& encoder, const HeadBank& bank);
};

/// One minibatch update. Loss and gradients are computed on the current
/// parameters, the tracker is fed each head's own batch loss, and Adam
/// updates the encoder and the active heads only.
StepRecord train_step(Encoder& encoder, HeadBank& bank, std::span<const Example* const> batch,
                      const TrainerConfig& config, OptimizerState& optimizer,
                      EmaTracker& tracker, std::size_t step);

/// Fresh model: encoder from init_encoder, then heads from init_head_bank,
/// both drawing from `rng` in that order.
Model init_model(const EncoderDims& dims, const TrainerConfig& config,
                 std::vector<std::string> class_names, std::string dataset_name, Rng& rng);

/// Higher is better.
using DevMetric = std::function<double(const Model&)>;

/// Called after every step, once any pruning for that step has happened.
using StepObserver = std::function<void(const Model&, const StepRecord&)>;

struct TrainResult {
    Model model;               // final parameters
    std::optional<Model> best; // best dev-metric snapshot when a dev metric was given
    double best_metric = 0.0;
    std::size_t best_step = 0;
    TrainTrace trace;
};

/// Seed handling: Rng(seed) is split once for model initialisation and once
/// for the per-epoch shuffles. Runs epochs * ceil(n / batch_size) steps and
/// checks for pruning after every step divisible by K (steps count from 1).
TrainResult train(const TrainerConfig& config, const EncoderDims& dims, const Dataset& dataset,
                  const DevMetric& dev_metric = {}, const StepObserver& observer = {});

inline constexpr int kTraceFormatVersion = 1;

/// step,total_loss,task_loss,mv_loss,active_heads
void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path);
/// step,n_clusters,survivors,eliminated (head lists are ';'-separated)
void write_prune_csv(const TrainTrace& trace, const std::filesystem::path& path);
/// step,head,ema,status with status in {survivor, eliminated}
void write_prune_ema_csv(const TrainTrace& trace, const std::filesystem::path& path);

std::vector<StepRecord> read_trace_csv(const std::filesystem::path& path);
std::vector<PruneRecord> read_prune_csv(const std::filesystem::path& path);

}  // namespace mml
