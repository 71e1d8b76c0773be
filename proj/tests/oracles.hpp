#pragma once

// Test-only reference computations. Nothing here calls the code paths it is
// used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mml/encoder.hpp"
#include "mml/multiverse.hpp"
#include "mml/numerics.hpp"

namespace oracle {

/// Central difference of f around params[k] with step h.
inline double central_difference(std::span<double> params, std::size_t k, double h,
                                 const std::function<double()>& f) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = f();
    params[k] = saved - h;
    const double down = f();
    params[k] = saved;
    return (up - down) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

/// Double loop over every class and head pair using the explicit
/// (head, row, class) indexing, independent of the bank's span helpers.
inline double brute_force_multiverse(const mml::HeadBank& bank) {
    double total = 0.0;
    for (std::size_t k = 0; k < bank.c(); ++k) {
        for (std::size_t r = 0; r < bank.m(); ++r) {
            for (std::size_t s = 0; s < bank.m(); ++s) {
                if (s <= r) continue;
                long double dotp = 0.0L;
                for (std::size_t i = 0; i < bank.d(); ++i) {
                    dotp += static_cast<long double>(bank.weight(r, i, k)) * bank.weight(s, i, k);
                }
                double beta = (bank.active(r) ? 1.0 : 0.0) * (bank.active(s) ? 1.0 : 0.0);
                total += std::abs(static_cast<double>(dotp)) * beta;
            }
        }
    }
    return total;
}

/// Forward pass of the reference encoder written from its definition with a
/// dense input vector and explicit loops.
inline std::vector<double> straight_line_encode(const mml::EncoderParams& p,
                                                const std::vector<double>& dense_input) {
    std::vector<double> x = dense_input;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const std::size_t in = p.in_dim(l);
        const std::size_t out = p.out_dim(l);
        std::vector<double> y(out);
        for (std::size_t o = 0; o < out; ++o) {
            long double s = p.bias(l)[o];
            for (std::size_t i = 0; i < in; ++i) s += static_cast<long double>(p.weight(l)[o * in + i]) * x[i];
            y[o] = static_cast<double>(s);
            if (l + 1 < p.layer_count()) y[o] = std::tanh(y[o]);
        }
        x = std::move(y);
    }
    return x;
}

struct GridClusters {
    std::vector<double> modes;                 // increasing
    std::vector<std::size_t> assignment;       // per input
};

/// Finds the modes of the Gaussian kernel density on a fine grid and assigns
/// each input to the mode reached by hill-climbing on the grid.
inline GridClusters grid_density_modes(std::span<const double> values, double bandwidth,
                                       std::size_t grid_points = 20001) {
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it - 3.0 * bandwidth;
    const double hi = *hi_it + 3.0 * bandwidth;
    const double step = (hi - lo) / static_cast<double>(grid_points - 1);
    std::vector<double> density(grid_points, 0.0);
    for (std::size_t g = 0; g < grid_points; ++g) {
        double x = lo + step * static_cast<double>(g);
        for (double v : values) density[g] += std::exp(-(x - v) * (x - v) / (2.0 * bandwidth * bandwidth));
    }
    auto climb = [&](std::size_t g) {
        while (true) {
            std::size_t best = g;
            if (g > 0 && density[g - 1] > density[best]) best = g - 1;
            if (g + 1 < grid_points && density[g + 1] > density[best]) best = g + 1;
            if (best == g) return g;
            g = best;
        }
    };
    std::vector<std::size_t> peaks;
    std::vector<std::size_t> peak_of(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto g = static_cast<std::size_t>(std::lround((values[i] - lo) / step));
        peak_of[i] = climb(std::min(g, grid_points - 1));
        if (std::find(peaks.begin(), peaks.end(), peak_of[i]) == peaks.end()) peaks.push_back(peak_of[i]);
    }
    std::sort(peaks.begin(), peaks.end());
    GridClusters out;
    for (auto p : peaks) out.modes.push_back(lo + step * static_cast<double>(p));
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.assignment.push_back(static_cast<std::size_t>(
            std::find(peaks.begin(), peaks.end(), peak_of[i]) - peaks.begin()));
    }
    return out;
}

}  // namespace oracle
