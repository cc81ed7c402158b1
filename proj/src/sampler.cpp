#include "viewsynth/sampler.hpp"

#include <chrono>
#include <cmath>

#include "viewsynth/errors.hpp"

namespace viewsynth {

void MiGuidanceSpec::validate() const {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidField("mi_weight", "must be >= 0");
    if (bins < 2) throw InvalidField("mi_bins", "must be >= 2");
    if (!(kernel_bandwidth > 0.0)) throw InvalidField("mi_bandwidth", "must be > 0");
    if (!(start_frac >= 0.0 && end_frac <= 1.0 && start_frac < end_frac)) {
        throw InvalidField("mi_start_frac", "need 0 <= start < end <= 1");
    }
}

bool MiGuidanceSpec::active_at(int index, int total) const {
    const double progress = static_cast<double>(index) / total;
    return progress >= start_frac && progress < end_frac;
}

MiGuidanceSpec mi_spec_from_config(const PipelineConfig& cfg) {
    return MiGuidanceSpec{cfg.mi_weight, cfg.mi_bins, cfg.mi_bandwidth, cfg.mi_start_frac, cfg.mi_end_frac};
}

std::vector<int> sampling_timesteps(int max_timestep, int steps) {
    if (steps < 1) throw InvalidField("sampler_steps", "must be >= 1");
    if (steps > max_timestep) throw InvalidField("sampler_steps", "must not exceed the backbone's timestep count");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        ts.push_back(max_timestep - static_cast<int>((static_cast<long long>(k) * max_timestep) / steps));
    }
    return ts;
}

GuidanceContext make_guidance_context(const DiffusionBackbone& backbone, const OptimizationState& state,
                                      const PromptSpec& prompts, const Image& input_image, double cfg_scale,
                                      const MiGuidanceSpec& mi, CfgNegative negative, int sampler_steps,
                                      int image_size) {
    mi.validate();
    GuidanceContext ctx;
    ctx.backbone = &backbone;
    ctx.adapters = &state.adapters;
    ctx.cond = backbone.encode_text(prompts.target_text);
    ctx.uncond = backbone.encode_text(negative == CfgNegative::source ? prompts.source_text : std::string());
    ctx.cfg_scale = cfg_scale;
    ctx.mi = mi;
    const Image sized = input_image.height() == image_size && input_image.width() == image_size
                            ? input_image
                            : resize_bicubic(input_image, image_size, image_size);
    ctx.input_gray = to_grayscale(sized);
    ctx.timesteps = sampling_timesteps(backbone.max_timestep(), sampler_steps);
    return ctx;
}

Latent cfg_noise(const GuidanceContext& ctx, const Latent& x_t, int t) {
    const Latent eps_u = ctx.backbone->predict_noise(x_t, t, ctx.uncond, ctx.adapters);
    const Latent eps_c = ctx.backbone->predict_noise(x_t, t, ctx.cond, ctx.adapters);
    Latent eps = eps_u;
    eps.values = eps_u.values + ctx.cfg_scale * (eps_c.values - eps_u.values);
    return eps;
}

namespace {

Latent clean_estimate(const Latent& x_t, const Latent& eps, double ab) {
    Latent x0 = x_t;
    x0.values = (x_t.values - std::sqrt(1.0 - ab) * eps.values) / std::sqrt(ab);
    return x0;
}

}  // namespace

double mi_guidance_objective(const GuidanceContext& ctx, const Latent& x_t, int t) {
    const double ab = ctx.backbone->alpha_bar(t);
    const Latent x0 = clean_estimate(x_t, cfg_noise(ctx, x_t, t), ab);
    const Image gray = to_grayscale(ctx.backbone->decode_latent(x0));
    return mutual_information(gray, ctx.input_gray, {ctx.mi.bins, ctx.mi.kernel_bandwidth});
}

Latent mi_guidance_gradient(const GuidanceContext& ctx, const Latent& x_t, int t) {
    const DiffusionBackbone& bb = *ctx.backbone;
    const double ab = bb.alpha_bar(t);
    const Latent x0 = clean_estimate(x_t, cfg_noise(ctx, x_t, t), ab);
    const Image decoded = bb.decode_latent(x0);
    const auto mi = mutual_information_grad(to_grayscale(decoded), ctx.input_gray, {ctx.mi.bins, ctx.mi.kernel_bandwidth});

    Image d_image(decoded.height(), decoded.width(), decoded.channels());
    constexpr double kLuma[3] = {0.299, 0.587, 0.114};
    for (int y = 0; y < decoded.height(); ++y) {
        for (int x = 0; x < decoded.width(); ++x) {
            for (int c = 0; c < 3; ++c) d_image.at(y, x, c) = kLuma[c] * mi.d_a.at(y, x, 0);
        }
    }
    const Latent g_x0 = bb.decode_vjp(x0, d_image);

    // x0 = (x - sqrt(1 - ab) * eps(x)) / sqrt(ab)
    Latent g_eps = g_x0;
    g_eps.values *= -std::sqrt(1.0 - ab) / std::sqrt(ab);
    const NoiseVjp vjp_u = bb.predict_noise_vjp(x_t, t, ctx.uncond, ctx.adapters, g_eps, wrt_latent);
    const NoiseVjp vjp_c = bb.predict_noise_vjp(x_t, t, ctx.cond, ctx.adapters, g_eps, wrt_latent);
    Latent g = x_t;
    g.values = g_x0.values / std::sqrt(ab) + (1.0 - ctx.cfg_scale) * vjp_u.d_latent.values +
               ctx.cfg_scale * vjp_c.d_latent.values;
    return g;
}

Latent guided_step(const GuidanceContext& ctx, const Latent& x_t, int index) {
    const int total = static_cast<int>(ctx.timesteps.size());
    if (index < 0 || index >= total) throw InvalidField("step", "index outside the sampling schedule");
    const int t = ctx.timesteps[static_cast<std::size_t>(index)];
    const double ab = ctx.backbone->alpha_bar(t);
    const double ab_prev = index + 1 < total ? ctx.backbone->alpha_bar(ctx.timesteps[static_cast<std::size_t>(index) + 1]) : 1.0;

    Latent eps = cfg_noise(ctx, x_t, t);
    if (ctx.mi.weight > 0.0 && ctx.mi.active_at(index, total)) {
        // score = -eps / sqrt(1 - ab); score += w * P * grad  <=>  eps -= sqrt(1 - ab) * w * P * grad
        const Latent grad = mi_guidance_gradient(ctx, x_t, t);
        const double positions = static_cast<double>(x_t.values.rows());
        eps.values -= std::sqrt(1.0 - ab) * ctx.mi.weight * positions * grad.values;
    }
    const Latent x0 = clean_estimate(x_t, eps, ab);
    Latent next = x_t;
    next.values = std::sqrt(ab_prev) * x0.values + std::sqrt(1.0 - ab_prev) * eps.values;
    if (!next.values.allFinite()) {
        throw NonFiniteValue("non-finite latent at sampling step " + std::to_string(index) + " (t=" + std::to_string(t) + ")");
    }
    return next;
}

GenerationResult generate(const DiffusionBackbone& backbone, const OptimizationState& state, const PromptSpec& prompts,
                          const Image& input_image, const PipelineConfig& cfg, Rng& rng) {
    const auto start = std::chrono::steady_clock::now();
    const GuidanceContext ctx =
        make_guidance_context(backbone, state, prompts, input_image, cfg.cfg_scale, mi_spec_from_config(cfg),
                              cfg.cfg_negative, cfg.sampler_steps, cfg.image_size);
    Latent x = backbone.zero_latent(cfg.image_size);
    for (Eigen::Index j = 0; j < x.values.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.values.rows(); ++i) x.values(i, j) = rng.normal();
    }
    for (int i = 0; i < static_cast<int>(ctx.timesteps.size()); ++i) {
        try {
            x = guided_step(ctx, x, i);
        } catch (const NonFiniteValue&) {
            throw;
        } catch (const Error& e) {
            throw Error("sampling step " + std::to_string(i) + ": " + e.what());
        }
    }
    GenerationResult result;
    result.image = clamp01(backbone.decode_latent(x));
    if (result.image.height() != cfg.image_size || result.image.width() != cfg.image_size) {
        throw ShapeMismatch("decoded image does not match image_size");
    }
    result.view = prompts.view;
    result.target_prompt = prompts.target_text;
    result.timings["sampling"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace viewsynth
