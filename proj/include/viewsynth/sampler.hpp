#pragma once

#include <vector>

#include "viewsynth/backbone.hpp"
#include "viewsynth/caption.hpp"
#include "viewsynth/config.hpp"
#include "viewsynth/mutual_information.hpp"
#include "viewsynth/optimizer.hpp"

namespace viewsynth {

struct MiGuidanceSpec {
    double weight = 0.5;
    int bins = 32;
    double kernel_bandwidth = 0.02;
    double start_frac = 0.1;
    double end_frac = 0.9;

    void validate() const;
    /// Guidance is active at step `index` of `total` when
    /// start_frac <= index / total < end_frac.
    bool active_at(int index, int total) const;
};

MiGuidanceSpec mi_spec_from_config(const PipelineConfig& cfg);

/// Evenly spaced descending timesteps in [1, T], first = T.
std::vector<int> sampling_timesteps(int max_timestep, int steps);

/// Everything one guided sampling run needs, with the fine-tuned adapters,
/// both conditionings, and the luma of the input image precomputed.
struct GuidanceContext {
    const DiffusionBackbone* backbone = nullptr;
    const AdapterSet* adapters = nullptr;
    Embedding cond;
    Embedding uncond;
    double cfg_scale = 7.5;
    MiGuidanceSpec mi;
    Image input_gray;
    std::vector<int> timesteps;
};

/// `input_image` is resized to match the decoded latent when needed.
GuidanceContext make_guidance_context(const DiffusionBackbone& backbone, const OptimizationState& state,
                                      const PromptSpec& prompts, const Image& input_image, double cfg_scale,
                                      const MiGuidanceSpec& mi, CfgNegative negative, int sampler_steps,
                                      int image_size);

/// eps_u + scale * (eps_c - eps_u)
Latent cfg_noise(const GuidanceContext& ctx, const Latent& x_t, int t);

/// MI(luma(decode(x0_hat(x_t))), luma(input)) where x0_hat is the clean
/// estimate implied by the guided noise prediction.
double mi_guidance_objective(const GuidanceContext& ctx, const Latent& x_t, int t);

/// Gradient of mi_guidance_objective w.r.t. x_t, through the decoder and
/// both branches of the guided denoiser.
Latent mi_guidance_gradient(const GuidanceContext& ctx, const Latent& x_t, int t);

/// One deterministic DDIM step from timesteps[index] to the next timestep
/// (or to the clean sample after the last one). When MI guidance is active
/// weight * P * grad is added to the score -eps / sqrt(1 - abar) before the
/// update, where P is the number of latent positions. MI is an average over
/// pixels, so its per-position gradient shrinks like 1 / P; the factor keeps
/// a given weight equally strong at every resolution. Throws NonFiniteValue.
Latent guided_step(const GuidanceContext& ctx, const Latent& x_t, int index);

/// Full sampling loop from Gaussian noise; returns the decoded, clamped
/// image_size x image_size image.
GenerationResult generate(const DiffusionBackbone& backbone, const OptimizationState& state, const PromptSpec& prompts,
                          const Image& input_image, const PipelineConfig& cfg, Rng& rng);

}  // namespace viewsynth
