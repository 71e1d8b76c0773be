#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mml {

struct ClusterResult {
    std::vector<double> centroids;        // strictly increasing
    std::vector<std::size_t> assignment;  // per input, index into centroids
    double bandwidth_used = 0.0;
    std::string kernel = "gaussian";

    std::size_t cluster_count() const { return centroids.size(); }
};

/// Silverman's rule 1.06 * min(sd, IQR/1.34) * n^(-1/5), floored at
/// 1e-6 * (max - min) and at 1e-12.
double estimate_bandwidth(std::span<const double> values);

inline constexpr int kMeanShiftMaxIterations = 500;
inline constexpr double kMeanShiftTolerance = 1e-8;

/// Gaussian-kernel mean shift on the line. Every input is shifted to a
/// density mode; modes closer than bandwidth/2 are merged.
ClusterResult mean_shift_1d(std::span<const double> values, double bandwidth);

/// original_indices[i] for every input i in the lowest-centroid cluster.
std::vector<std::size_t> min_centroid_members(const ClusterResult& result,
                                              std::span<const std::size_t> original_indices);

}  // namespace mml
