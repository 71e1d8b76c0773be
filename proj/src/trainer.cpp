#include "mml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mml/error.hpp"
#include "mml/meanshift.hpp"

namespace mml {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_indices(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(xs[i]);
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::size_t parse_size(const std::string& s, const std::filesystem::path& path, std::size_t line) {
    try {
        std::size_t used = 0;
        auto v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": line " + std::to_string(line) + ": bad integer '" + s + "'");
    }
}

double parse_real(const std::string& s, const std::filesystem::path& path, std::size_t line) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw InvalidInput("cannot write " + path.string());
    return os;
}

}  // namespace

void TrainerConfig::validate() const {
    if (K < 1) throw InvalidConfig("trainer: K must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidConfig("trainer: gamma must be in (0, 1)");
    if (threshold < 1) throw InvalidConfig("trainer: threshold must be >= 1");
    if (!(alpha > 0.0)) throw InvalidConfig("trainer: alpha must be > 0");
    if (!(lambda >= 0.0)) throw InvalidConfig("trainer: lambda must be >= 0");
    if (batch_size < 1) throw InvalidConfig("trainer: batch_size must be >= 1");
    if (!kind.is_regression() && kind.classes < 2) throw InvalidConfig("trainer: classification needs >= 2 classes");
}

void ema_update(EmaTracker& tracker, const HeadLosses& losses, const HeadBank& bank, double gamma) {
    if (tracker.a.size() != bank.m() || losses.per_head.size() != bank.m()) {
        throw ShapeError("ema_update: tracker, losses and bank disagree on head count");
    }
    for (std::size_t j = 0; j < bank.m(); ++j) {
        if (!bank.active(j)) continue;
        tracker.a[j] = gamma * tracker.a[j] + (1.0 - gamma) * losses.per_head[j];
    }
}

std::optional<PruneRecord> prune_heads(const EmaTracker& tracker, HeadBank& bank,
                                       std::size_t threshold, std::size_t step) {
    if (tracker.a.size() != bank.m()) throw ShapeError("prune_heads: tracker size mismatch");
    const auto active = bank.active_indices();
    if (active.size() < threshold) return std::nullopt;

    std::vector<double> values;
    values.reserve(active.size());
    for (std::size_t j : active) values.push_back(tracker.a[j]);

    const double bandwidth = estimate_bandwidth(values);
    const ClusterResult clusters = mean_shift_1d(values, bandwidth);

    PruneRecord rec;
    rec.step = step;
    rec.n_clusters = clusters.cluster_count();
    rec.bandwidth = bandwidth;
    for (std::size_t i = 0; i < active.size(); ++i) rec.ema.emplace_back(active[i], values[i]);

    if (clusters.cluster_count() < 2) {
        rec.survivors = active;
        return rec;
    }
    rec.survivors = min_centroid_members(clusters, active);
    for (std::size_t j : active) {
        if (!std::binary_search(rec.survivors.begin(), rec.survivors.end(), j)) {
            rec.eliminated.push_back(j);
            bank.set_active(j, false);
        }
    }
    return rec;
}

OptimizerState OptimizerState::for_model(const Encoder& encoder, const HeadBank& bank) {
    OptimizerState s;
    s.encoder = AdamState(encoder.parameters().size());
    s.heads.assign(bank.m(), AdamState(bank.head_size()));
    return s;
}

StepRecord train_step(Encoder& encoder, HeadBank& bank, std::span<const Example* const> batch,
                      const TrainerConfig& config, OptimizerState& optimizer,
                      EmaTracker& tracker, std::size_t step) {
    if (batch.empty()) throw InvalidInput("train_step: empty batch");
    if (optimizer.heads.size() != bank.m()) throw ShapeError("train_step: optimizer/bank mismatch");

    std::vector<CodingVector> codings(batch.size());
    std::vector<EncoderCache> caches(batch.size());
    std::vector<double> labels(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) {
        codings[n] = encoder.forward(batch[n]->pair, caches[n]);
        labels[n] = batch[n]->label;
    }

    LossGradients lg = total_loss(bank, codings, labels, config.kind, config.lambda);

    std::vector<double> encoder_grad(encoder.parameters().size(), 0.0);
    for (std::size_t n = 0; n < batch.size(); ++n) {
        encoder.backward(caches[n], lg.coding_grads[n], encoder_grad);
    }

    ema_update(tracker, lg.heads, bank, config.gamma);

    adam_update(encoder.parameters(), encoder_grad, optimizer.encoder, config.alpha);
    const std::span<const double> head_grads(lg.head_grads);
    for (std::size_t j = 0; j < bank.m(); ++j) {
        if (!bank.active(j)) continue;
        adam_update(bank.head_params(j), head_grads.subspan(j * bank.head_size(), bank.head_size()),
                    optimizer.heads[j], config.alpha);
    }

    return StepRecord{step, lg.total, lg.task, lg.multiverse, bank.active_count()};
}

Model init_model(const EncoderDims& dims, const TrainerConfig& config,
                 std::vector<std::string> class_names, std::string dataset_name, Rng& rng) {
    Model model;
    model.encoder = HashedMlpEncoder(init_encoder(dims, rng));
    const std::size_t m = config.m ? config.m : dims.output_dim;
    model.heads = init_head_bank(dims.output_dim, config.kind.output_width(), m, rng);
    model.kind = config.kind;
    model.class_names = std::move(class_names);
    model.dataset_name = std::move(dataset_name);
    return model;
}

TrainResult train(const TrainerConfig& config, const EncoderDims& dims, const Dataset& dataset,
                  const DevMetric& dev_metric, const StepObserver& observer) {
    config.validate();
    if (dataset.empty()) throw InvalidInput("train: dataset '" + dataset.name + "' is empty");
    if (!(dataset.kind == config.kind)) {
        throw InvalidConfig("train: dataset task kind does not match the trainer's");
    }
    for (const auto& ex : dataset.examples) {
        bool ok = dataset.kind.is_regression()
                      ? std::isfinite(ex.label)
                      : ex.label >= 0.0 && ex.label < static_cast<double>(dataset.kind.classes) &&
                            ex.label == std::floor(ex.label);
        if (!ok) throw InvalidLabel("train: example '" + ex.id + "' has an invalid label");
    }

    Rng root(config.seed);
    Rng init_rng = root.split();
    Rng shuffle_rng = root.split();

    TrainResult result;
    result.model = init_model(dims, config, dataset.class_names, dataset.name, init_rng);
    Model& model = result.model;
    OptimizerState optimizer = OptimizerState::for_model(model.encoder, model.heads);
    EmaTracker tracker(model.heads.m());

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const Example*> batch;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(start + config.batch_size, order.size());
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&dataset.examples[order[i]]);

            ++step;
            result.trace.steps.push_back(
                train_step(model.encoder, model.heads, batch, config, optimizer, tracker, step));

            if (config.prune_enabled && step % config.K == 0) {
                auto rec = prune_heads(tracker, model.heads, config.threshold, step);
                if (rec && !rec->eliminated.empty()) {
                    result.trace.steps.back().active_heads = model.heads.active_count();
                    result.trace.prunes.push_back(std::move(*rec));
                }
            }
            if (observer) observer(model, result.trace.steps.back());
        }
        if (dev_metric) {
            double metric = dev_metric(model);
            result.trace.dev_metrics.emplace_back(step, metric);
            if (!result.best || metric > result.best_metric) {
                result.best = model;
                result.best_metric = metric;
                result.best_step = step;
            }
        }
    }
    return result;
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "step,total_loss,task_loss,mv_loss,active_heads\n";
    for (const auto& r : trace.steps) {
        os << r.step << ',' << fmt_double(r.total_loss) << ',' << fmt_double(r.task_loss) << ','
           << fmt_double(r.mv_loss) << ',' << r.active_heads << '\n';
    }
}

void write_prune_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "step,n_clusters,survivors,eliminated\n";
    for (const auto& p : trace.prunes) {
        os << p.step << ',' << p.n_clusters << ',' << join_indices(p.survivors) << ','
           << join_indices(p.eliminated) << '\n';
    }
}

void write_prune_ema_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "step,head,ema,status\n";
    for (const auto& p : trace.prunes) {
        for (const auto& [head, ema] : p.ema) {
            bool survived = std::binary_search(p.survivors.begin(), p.survivors.end(), head);
            os << p.step << ',' << head << ',' << fmt_double(ema) << ','
               << (survived ? "survivor" : "eliminated") << '\n';
        }
    }
}

std::vector<StepRecord> read_trace_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("missing trace file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<StepRecord> out;
    while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != "step,total_loss,task_loss,mv_loss,active_heads") {
                throw FormatError(path.string() + ": unexpected header");
            }
            continue;
        }
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 5) throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected 5 fields");
        out.push_back(StepRecord{parse_size(f[0], path, line_no), parse_real(f[1], path, line_no),
                                 parse_real(f[2], path, line_no), parse_real(f[3], path, line_no),
                                 parse_size(f[4], path, line_no)});
    }
    return out;
}

std::vector<PruneRecord> read_prune_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("missing prune event file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<PruneRecord> out;
    auto parse_list = [&](const std::string& s) {
        std::vector<std::size_t> xs;
        if (s.empty()) return xs;
        for (const auto& part : split(s, ';')) xs.push_back(parse_size(part, path, line_no));
        return xs;
    };
    while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != "step,n_clusters,survivors,eliminated") {
                throw FormatError(path.string() + ": unexpected header");
            }
            continue;
        }
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 4) throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected 4 fields");
        PruneRecord rec;
        rec.step = parse_size(f[0], path, line_no);
        rec.n_clusters = parse_size(f[1], path, line_no);
        rec.survivors = parse_list(f[2]);
        rec.eliminated = parse_list(f[3]);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace mml
