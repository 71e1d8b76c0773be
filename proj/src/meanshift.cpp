#include "mml/meanshift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mml/error.hpp"

namespace mml {

namespace {

// Linear-interpolated quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double estimate_bandwidth(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("estimate_bandwidth: no values");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const double floor_value = std::max(1e-6 * (sorted.back() - sorted.front()), 1e-12);
    if (sorted.size() < 2) return floor_value;

    double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / n);
    double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    double bw = 1.06 * spread * std::pow(n, -0.2);
    return std::max(bw, floor_value);
}

ClusterResult mean_shift_1d(std::span<const double> values, double bandwidth) {
    if (values.empty()) throw InvalidInput("mean_shift_1d: no values");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw InvalidInput("mean_shift_1d: bandwidth must be positive");
    }
    // Kernel sums run over sorted data so results do not depend on input order.
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);

    auto converge = [&](double x) {
        for (int it = 0; it < kMeanShiftMaxIterations; ++it) {
            double num = 0.0;
            double den = 0.0;
            for (double v : sorted) {
                double w = std::exp(-(x - v) * (x - v) * inv_two_h2);
                num += w * v;
                den += w;
            }
            if (den == 0.0) break;
            double next = num / den;
            double moved = std::abs(next - x);
            x = next;
            if (moved < kMeanShiftTolerance) break;
        }
        return x;
    };

    std::vector<double> modes(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) modes[i] = converge(values[i]);

    // Single-linkage merge over sorted modes with gap tolerance bandwidth/2.
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return modes[a] < modes[b] || (modes[a] == modes[b] && a < b);
    });
    const double merge_tol = bandwidth / 2.0;

    ClusterResult result;
    result.bandwidth_used = bandwidth;
    result.assignment.assign(values.size(), 0);
    std::vector<std::vector<double>> members;
    for (std::size_t idx = 0; idx < order.size(); ++idx) {
        std::size_t i = order[idx];
        if (idx == 0 || modes[i] - modes[order[idx - 1]] > merge_tol) members.emplace_back();
        members.back().push_back(modes[i]);
        result.assignment[i] = members.size() - 1;
    }
    for (auto& group : members) {
        // Sort so the centroid is independent of how ties were ordered.
        std::sort(group.begin(), group.end());
        double sum = std::accumulate(group.begin(), group.end(), 0.0);
        result.centroids.push_back(sum / static_cast<double>(group.size()));
    }
    return result;
}

std::vector<std::size_t> min_centroid_members(const ClusterResult& result,
                                              std::span<const std::size_t> original_indices) {
    if (original_indices.size() != result.assignment.size()) {
        throw ShapeError("min_centroid_members: index list does not match the clustering");
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < result.assignment.size(); ++i) {
        if (result.assignment[i] == 0) out.push_back(original_indices[i]);
    }
    return out;
}

}  // namespace mml
