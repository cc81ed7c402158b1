#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "viewsynth/backbone.hpp"
#include "viewsynth/config.hpp"
#include "viewsynth/core.hpp"

namespace viewsynth {

struct PhaseLog {
    std::string phase;
    std::vector<double> losses;
};

/// Phase labels, in schedule order.
inline constexpr const char* kPhaseEmbedInput = "embed_input";
inline constexpr const char* kPhaseLoraInput = "lora_input";
inline constexpr const char* kPhaseEmbedView = "embed_view";
inline constexpr const char* kPhaseLoraView = "lora_view";

struct OptimizationState {
    Embedding e_optim;
    AdapterSet adapters;
    std::vector<PhaseLog> phase_log;
};

/// One Monte-Carlo draw of the denoising objective: a timestep uniform on
/// {1..T} and standard-normal noise shaped like the latent.
struct NoiseDraw {
    int t = 1;
    Latent eps;
};

NoiseDraw draw_noise(const DiffusionBackbone& backbone, const Latent& like, Rng& rng);

struct LossGradient {
    double loss = 0.0;
    Embedding d_embedding;
    AdapterSet d_adapters;
};

/// Mean squared error between f(x_t, t, e) and eps for a fixed draw, with
/// x_t formed from the clean latent by the backbone's noising rule.
double denoise_loss_at(const DiffusionBackbone& backbone, const Embedding& e, const AdapterSet* adapters,
                       const Latent& x0, const NoiseDraw& draw);

/// Same loss plus its gradient with respect to the requested targets
/// (wrt_embedding and/or wrt_adapters).
LossGradient denoise_loss_grad(const DiffusionBackbone& backbone, const Embedding& e, const AdapterSet* adapters,
                               const Latent& x0, const NoiseDraw& draw, unsigned targets);

/// Draws (t, eps) from `rng` and evaluates the loss on `target_image`.
/// Throws NonFiniteValue when the loss is NaN or infinite.
double denoise_loss(const DiffusionBackbone& backbone, const OptimizationState& state, const Image& target_image,
                    Rng& rng);

struct StepOptions {
    int steps = 1;
    double lr = 1e-3;
    OptimizerKind kind = OptimizerKind::adam;
    std::string phase = "phase";
};

/// Gradient steps on the embedding only; adapters and backbone frozen.
/// Appends a PhaseLog to `log` when given.
Embedding optimize_embedding(const DiffusionBackbone& backbone, const Embedding& init_e, const AdapterSet& adapters,
                             const Image& target_image, const StepOptions& options, Rng& rng,
                             std::vector<PhaseLog>* log = nullptr);

/// Gradient steps on the adapters only, conditioning fixed at state.e_optim.
/// Verifies that no base-weight checksum changes (FrozenWeightViolation).
OptimizationState finetune_adapters(const DiffusionBackbone& backbone, OptimizationState state,
                                    const Image& target_image, const StepOptions& options, Rng& rng);

/// The four phases: embedding then adapters on the input image, then the
/// same two on the guidance view, each warm-started from the previous phase.
/// Both images must already be at cfg.image_size.
OptimizationState run_schedule(const DiffusionBackbone& backbone, const Scene& scene, const Image& guidance_image,
                               const PipelineConfig& cfg, Rng& rng);

/// Mean denoising loss over `samples` draws from a fixed seed, so that two
/// states can be compared on common random numbers.
double reconstruction_error(const DiffusionBackbone& backbone, const Embedding& e, const AdapterSet& adapters,
                            const Image& image, std::uint64_t seed, int samples = 64);

/// Phase log flattened as `step,phase,loss` lines (step is 0-based per phase).
std::string loss_curve_csv(const OptimizationState& state);

/// Single JSON archive: embedding, adapters, phase log and base checksums.
void save_checkpoint(const OptimizationState& state, const DiffusionBackbone& backbone,
                     const std::filesystem::path& path);
OptimizationState load_checkpoint(const std::filesystem::path& path);

/// Adaptive-moment update on a flat parameter vector.
class Adam {
public:
    explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
    void step(std::span<double> params, std::span<const double> grad, double lr);

private:
    double beta1_, beta2_, epsilon_;
    long step_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace viewsynth
