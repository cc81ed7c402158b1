#pragma once

#include <cstdint>

#include "viewsynth/backbone.hpp"

namespace viewsynth {

struct ToyBackboneOptions {
    std::uint64_t weight_seed = 20240601;
    int tokens = 8;
    int embed_dim = 8;
    int key_dim = 4;
    int value_dim = 4;
    int downsample = 8;
    int max_timestep = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;
};

/// A CPU diffusion model small enough to differentiate by hand and check
/// against finite differences, with the same moving parts as a latent
/// text-to-image UNet: a text encoder producing a token sequence, a latent
/// codec, and a cross-attention block whose q/k/v/out projections carry the
/// adapters.
///
/// Each latent position queries the text tokens with its own value, a fixed
/// positional code and a timestep code; the attended values are projected to
/// a velocity estimate v (target sqrt(abar) eps - sqrt(1 - abar) x0), and the
/// noise prediction is sqrt(1 - abar) x_t + sqrt(abar) v. The per-element
/// loss weight therefore stays below 1 at every timestep.
///
/// The codec is 8x8 average pooling mapped to [-1, 1] (encode) and
/// nearest-neighbour upsampling (decode), so encode(decode(z)) == z.
class ToyBackbone final : public DiffusionBackbone {
public:
    explicit ToyBackbone(ToyBackboneOptions options = {});

    std::string name() const override { return "toy-cross-attention-v1"; }
    int max_timestep() const override { return options_.max_timestep; }
    double alpha_bar(int t) const override;

    Embedding encode_text(std::string_view text) const override;
    Latent encode_image(const Image& image) const override;
    Image decode_latent(const Latent& latent) const override;
    Latent decode_vjp(const Latent& latent, const Image& d_image) const override;
    Latent zero_latent(int image_size) const override;

    Latent predict_noise(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters) const override;
    NoiseVjp predict_noise_vjp(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters,
                               const Latent& d_eps, unsigned targets) const override;

    AdapterSet init_adapters(int rank, Rng& rng) const override;
    std::vector<ParameterBlock> base_parameters() const override;

    std::size_t base_parameter_count() const;
    const ToyBackboneOptions& options() const noexcept { return options_; }

    static constexpr int kChannels = 3;

private:
    struct Projections {
        Eigen::MatrixXd q, k, v, out;
    };
    struct Forward;

    Projections effective(const AdapterSet* adapters) const;
    Eigen::MatrixXd query_inputs(const Latent& x_t, int t) const;
    void check(const Latent& x_t, int t, const Embedding& e) const;
    Forward forward(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters) const;

    ToyBackboneOptions options_;
    std::vector<double> alpha_bar_;
    Eigen::MatrixXd w_q_, w_k_, w_v_, w_out_;
    Eigen::VectorXd b_out_;
    Eigen::MatrixXd text_bias_;
};

}  // namespace viewsynth
