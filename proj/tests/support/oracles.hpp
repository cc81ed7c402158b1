#pragma once

// Independent reference computations shared by the unit tests, the
// acceptance binary and the fixture pinning tool.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "viewsynth/core.hpp"
#include "viewsynth/optimizer.hpp"
#include "viewsynth/sampler.hpp"

namespace viewsynth::testing {

/// Mean of the first or last 10% of a series.
inline double decile_mean(const std::vector<double>& xs, bool first) {
    const std::size_t n = std::max<std::size_t>(1, xs.size() / 10);
    const auto begin = first ? xs.begin() : xs.end() - static_cast<std::ptrdiff_t>(n);
    return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

/// ||a - b|| / ||b||
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

inline std::vector<double> to_vector(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

/// Central differences of f over every coordinate of `x`.
template <class F>
std::vector<double> central_differences(std::vector<double> x, F&& f, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// View distance with azimuth wraparound, written out independently of the library.
inline double oracle_view_distance(const ViewSpec& a, const ViewSpec& b) {
    const double de = a.elevation_deg - b.elevation_deg;
    double da = std::fmod(std::abs(a.azimuth_deg - b.azimuth_deg), 360.0);
    if (da > 180.0) da = 360.0 - da;
    return std::hypot(de, da);
}

/// Exhaustive nearest neighbour; ties keep the earliest entry.
inline ViewSpec brute_force_nearest(const ViewSpec& q, const std::vector<ViewSpec>& grid) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (oracle_view_distance(q, grid[i]) < oracle_view_distance(q, grid[best])) best = i;
    }
    return grid[best];
}

/// Classifier-free-guided DDIM with no MI term, written out step by step.
inline Image unguided_reference(const DiffusionBackbone& bb, const OptimizationState& state, const PromptSpec& prompts,
                                const PipelineConfig& cfg, std::uint64_t seed) {
    const Embedding cond = bb.encode_text(prompts.target_text);
    const Embedding uncond = bb.encode_text("");
    Rng rng(seed);
    Latent x = bb.zero_latent(cfg.image_size);
    for (Eigen::Index j = 0; j < x.values.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.values.rows(); ++i) x.values(i, j) = rng.normal();
    }
    const std::vector<int> ts = sampling_timesteps(bb.max_timestep(), cfg.sampler_steps);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double ab = bb.alpha_bar(ts[k]);
        const double ab_prev = k + 1 < ts.size() ? bb.alpha_bar(ts[k + 1]) : 1.0;
        const Eigen::MatrixXd eu = bb.predict_noise(x, ts[k], uncond, &state.adapters).values;
        const Eigen::MatrixXd ec = bb.predict_noise(x, ts[k], cond, &state.adapters).values;
        const Eigen::MatrixXd eps = eu + cfg.cfg_scale * (ec - eu);
        const Eigen::MatrixXd x0 = (x.values - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        x.values = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
    }
    return clamp01(bb.decode_latent(x));
}

/// Adapters with every parameter drawn from N(0, 0.3^2), so that gradient
/// checks exercise both factors.
inline AdapterSet random_adapters(const DiffusionBackbone& bb, std::uint64_t seed, int rank = 2) {
    Rng rng(seed);
    AdapterSet a = bb.init_adapters(rank, rng);
    std::vector<double> flat = a.flatten();
    for (double& v : flat) v = 0.3 * rng.normal();
    a.assign(flat);
    return a;
}

}  // namespace viewsynth::testing
