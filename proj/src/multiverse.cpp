#include "mml/multiverse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mml/error.hpp"

namespace mml {

namespace {

void check_label(double label, TaskKind kind) {
    if (kind.is_regression()) {
        if (!std::isfinite(label)) throw InvalidLabel("regression target is not finite");
        return;
    }
    if (!(label >= 0.0) || label >= static_cast<double>(kind.classes) ||
        label != std::floor(label)) {
        throw InvalidLabel("class label " + std::to_string(label) + " outside [0, " +
                           std::to_string(kind.classes) + ")");
    }
}

void check_kind(const HeadBank& bank, TaskKind kind) {
    if (bank.c() != kind.output_width()) {
        throw ShapeError("head bank has " + std::to_string(bank.c()) +
                         " outputs, task expects " + std::to_string(kind.output_width()));
    }
}

double log_sum_exp(std::span<const double> z) {
    double peak = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - peak);
    return peak + std::log(s);
}

// Loss of one head on one example, with d(loss)/d(logits) written to dz.
double head_loss(std::span<const double> z, double label, TaskKind kind, std::span<double> dz) {
    if (kind.is_regression()) {
        double diff = z[0] - label;
        dz[0] = 2.0 * diff;
        return diff * diff;
    }
    auto y = static_cast<std::size_t>(label);
    auto p = softmax(z);
    for (std::size_t k = 0; k < z.size(); ++k) dz[k] = p[k] - (k == y ? 1.0 : 0.0);
    return log_sum_exp(z) - z[y];
}

}  // namespace

HeadBank::HeadBank(std::size_t d, std::size_t c, std::size_t m)
    : d_(d), c_(c), m_(m), flat_(m * (d * c + c), 0.0), mask_(m, 1) {
    if (d < 1 || c < 1 || m < 1) throw InvalidConfig("head bank needs d, c, m >= 1");
}

std::span<double> HeadBank::head_params(std::size_t j) {
    return std::span<double>(flat_).subspan(j * head_size(), head_size());
}

std::span<const double> HeadBank::head_params(std::size_t j) const {
    return std::span<const double>(flat_).subspan(j * head_size(), head_size());
}

std::size_t HeadBank::active_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1));
}

std::vector<std::size_t> HeadBank::active_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < m_; ++j) {
        if (mask_[j]) out.push_back(j);
    }
    return out;
}

HeadBank init_head_bank(std::size_t d, std::size_t c, std::size_t m, Rng& rng) {
    HeadBank bank(d, c, m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t j = 0; j < m; ++j) {
        for (double& w : bank.weights(j)) w = scale * rng.normal();
    }
    return bank;
}

Matrix forward_heads(const HeadBank& bank, std::span<const double> coding) {
    if (coding.size() != bank.d()) {
        throw ShapeError("forward_heads: coding vector has " + std::to_string(coding.size()) +
                         " entries, bank expects " + std::to_string(bank.d()));
    }
    const std::size_t d = bank.d();
    const std::size_t c = bank.c();
    Matrix logits(bank.m(), c);
    for (std::size_t j = 0; j < bank.m(); ++j) {
        auto w = bank.weights(j);
        auto b = bank.bias(j);
        for (std::size_t k = 0; k < c; ++k) {
            double s = b[k];
            for (std::size_t i = 0; i < d; ++i) s += coding[i] * w[i * c + k];
            logits(j, k) = s;
        }
    }
    return logits;
}

TaskLoss task_loss(const HeadBank& bank, const Matrix& logits, double label, TaskKind kind) {
    check_kind(bank, kind);
    if (logits.rows() != bank.m() || logits.cols() != bank.c()) {
        throw ShapeError("task_loss: logits shape does not match the head bank");
    }
    check_label(label, kind);
    TaskLoss out;
    out.heads.per_head.assign(bank.m(), 0.0);
    std::vector<double> dz(bank.c());
    for (std::size_t j = 0; j < bank.m(); ++j) {
        if (!bank.active(j)) continue;
        double loss = head_loss(logits.row(j), label, kind, dz);
        out.heads.per_head[j] = loss;
        out.total += loss;
    }
    return out;
}

double multiverse_loss(const HeadBank& bank) {
    const auto active = bank.active_indices();
    const std::size_t c = bank.c();
    double loss = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < bank.d(); ++i) {
                    s += bank.weight(active[a], i, k) * bank.weight(active[b], i, k);
                }
                loss += std::abs(s);
            }
        }
    }
    return loss;
}

LossGradients total_loss(const HeadBank& bank, std::span<const CodingVector> batch,
                         std::span<const double> labels, TaskKind kind, double lambda) {
    if (batch.empty()) throw InvalidInput("total_loss: empty batch");
    if (batch.size() != labels.size()) throw ShapeError("total_loss: batch/label count mismatch");
    if (!(lambda >= 0.0)) throw InvalidInput("total_loss: lambda must be >= 0");
    check_kind(bank, kind);

    const std::size_t d = bank.d();
    const std::size_t c = bank.c();
    const std::size_t m = bank.m();
    const auto batch_size = static_cast<double>(batch.size());

    LossGradients out;
    out.head_grads.assign(bank.flat().size(), 0.0);
    out.coding_grads.assign(batch.size(), std::vector<double>(d, 0.0));
    std::vector<double> loss_sum(m, 0.0);
    std::vector<double> dz(c);

    for (std::size_t n = 0; n < batch.size(); ++n) {
        check_label(labels[n], kind);
        const auto& coding = batch[n];
        Matrix logits = forward_heads(bank, coding);
        auto& g_coding = out.coding_grads[n];
        for (std::size_t j = 0; j < m; ++j) {
            if (!bank.active(j)) continue;
            loss_sum[j] += head_loss(logits.row(j), labels[n], kind, dz);
            for (double& v : dz) v /= batch_size;

            auto w = bank.weights(j);
            double* gw = out.head_grads.data() + j * bank.head_size();
            double* gb = gw + d * c;
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t k = 0; k < c; ++k) {
                    gw[i * c + k] += coding[i] * dz[k];
                    g_coding[i] += w[i * c + k] * dz[k];
                }
            }
            for (std::size_t k = 0; k < c; ++k) gb[k] += dz[k];
        }
    }

    out.heads.per_head.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        if (!bank.active(j)) continue;
        out.heads.per_head[j] = loss_sum[j] / batch_size;
        out.task += out.heads.per_head[j];
    }

    // Multiverse term: d|s|/df_r = sign(s) f_s, with sign(0) = 0.
    const auto active = bank.active_indices();
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const std::size_t r = active[a];
                const std::size_t s = active[b];
                double prod = 0.0;
                for (std::size_t i = 0; i < d; ++i) prod += bank.weight(r, i, k) * bank.weight(s, i, k);
                out.multiverse += std::abs(prod);
                if (lambda == 0.0 || prod == 0.0) continue;
                const double coeff = lambda * (prod > 0.0 ? 1.0 : -1.0);
                double* gr = out.head_grads.data() + r * bank.head_size();
                double* gs = out.head_grads.data() + s * bank.head_size();
                for (std::size_t i = 0; i < d; ++i) {
                    gr[i * c + k] += coeff * bank.weight(s, i, k);
                    gs[i * c + k] += coeff * bank.weight(r, i, k);
                }
            }
        }
    }

    out.total = out.task + lambda * out.multiverse;
    return out;
}

std::vector<Matrix> orthogonality_tables(const HeadBank& bank) {
    const std::size_t m = bank.m();
    std::vector<Matrix> tables;
    tables.reserve(bank.c());
    for (std::size_t k = 0; k < bank.c(); ++k) {
        Matrix t(m, m, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t s = r + 1; s < m; ++s) {
                double prod = 0.0;
                for (std::size_t i = 0; i < bank.d(); ++i) prod += bank.weight(r, i, k) * bank.weight(s, i, k);
                t(r, s) = std::abs(prod);
                t(s, r) = t(r, s);
            }
        }
        tables.push_back(std::move(t));
    }
    return tables;
}

double mean_off_diagonal(const std::vector<Matrix>& tables, std::span<const std::size_t> heads) {
    if (heads.size() < 2 || tables.empty()) return 0.0;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& t : tables) {
        for (std::size_t a = 0; a < heads.size(); ++a) {
            for (std::size_t b = a + 1; b < heads.size(); ++b) {
                sum += t(heads[a], heads[b]);
                ++count;
            }
        }
    }
    return sum / static_cast<double>(count);
}

void write_orthogonality_csv(const std::vector<Matrix>& tables, const std::filesystem::path& dir,
                             const std::string& prefix) {
    std::filesystem::create_directories(dir);
    char buf[32];
    for (std::size_t k = 0; k < tables.size(); ++k) {
        auto path = dir / (prefix + "_class" + std::to_string(k) + ".csv");
        std::ofstream os(path);
        if (!os) throw InvalidInput("cannot write " + path.string());
        const auto& t = tables[k];
        for (std::size_t r = 0; r < t.rows(); ++r) {
            for (std::size_t s = 0; s < t.cols(); ++s) {
                std::snprintf(buf, sizeof buf, "%.17g", t(r, s));
                os << (s ? "," : "") << buf;
            }
            os << '\n';
        }
    }
}

Prediction aggregate_inference(const HeadBank& bank, std::span<const double> coding,
                               TaskKind kind) {
    check_kind(bank, kind);
    const auto active = bank.active_indices();
    if (active.empty()) throw NoActiveHeads("aggregate_inference: every head is inactive");
    Matrix logits = forward_heads(bank, coding);

    Prediction out;
    out.logits.assign(bank.c(), 0.0);
    for (std::size_t j : active) {
        for (std::size_t k = 0; k < bank.c(); ++k) out.logits[k] += logits(j, k);
    }
    for (double& v : out.logits) v /= static_cast<double>(active.size());

    if (kind.is_regression()) {
        out.value = out.logits[0];
    } else {
        out.probabilities = softmax(out.logits);
        out.label = argmax(out.probabilities);
    }
    return out;
}

}  // namespace mml
