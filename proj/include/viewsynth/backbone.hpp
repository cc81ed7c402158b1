#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "viewsynth/image.hpp"
#include "viewsynth/rng.hpp"

namespace viewsynth {

/// Latent tensor: one row per spatial position (row-major over height x width),
/// one column per channel.
struct Latent {
    int height = 0;
    int width = 0;
    Eigen::MatrixXd values;

    int channels() const { return static_cast<int>(values.cols()); }
    bool same_shape(const Latent& o) const {
        return height == o.height && width == o.width && values.rows() == o.values.rows() && values.cols() == o.values.cols();
    }
};

/// Conditioning sequence: tokens x embedding dim.
using Embedding = Eigen::MatrixXd;

/// Low-rank update of one linear projection: W_eff = W + scale * up * down.
struct LoraAdapter {
    std::string target;
    Eigen::MatrixXd down;  // rank x in
    Eigen::MatrixXd up;    // out x rank
};

struct AdapterSet {
    double scale = 1.0;
    std::vector<LoraAdapter> layers;

    std::size_t parameter_count() const;
    /// down then up for each layer, in order.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    /// Same layout with every parameter zeroed (gradient accumulator).
    AdapterSet zeros_like() const;
};

struct ParameterBlock {
    std::string name;
    std::span<const double> values;
};

enum GradientTarget : unsigned {
    wrt_latent = 1u << 0,
    wrt_embedding = 1u << 1,
    wrt_adapters = 1u << 2,
};

/// Vector-Jacobian product of the noise prediction.
struct NoiseVjp {
    Latent d_latent;
    Embedding d_embedding;
    AdapterSet d_adapters;
};

/// The frozen text-to-image diffusion model f(x_t, t, e; theta) together with
/// its text encoder and image codec. Implementations are immutable after
/// construction; adapters are passed explicitly so the base weights can never
/// be written through this interface.
class DiffusionBackbone {
public:
    virtual ~DiffusionBackbone() = default;

    virtual std::string name() const = 0;
    virtual int max_timestep() const = 0;
    /// Cumulative signal fraction at timestep t in [1, T].
    virtual double alpha_bar(int t) const = 0;

    virtual Embedding encode_text(std::string_view text) const = 0;
    virtual Latent encode_image(const Image& image) const = 0;
    virtual Image decode_latent(const Latent& latent) const = 0;
    /// Gradient w.r.t. the latent of <d_image, decode_latent(latent)>.
    virtual Latent decode_vjp(const Latent& latent, const Image& d_image) const = 0;
    /// Latent grid for a square image of the given side.
    virtual Latent zero_latent(int image_size) const = 0;

    /// Noise prediction; `adapters` may be null for the pretrained model.
    virtual Latent predict_noise(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters) const = 0;
    virtual NoiseVjp predict_noise_vjp(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters,
                                       const Latent& d_eps, unsigned targets) const = 0;

    /// Adapters on every cross-attention projection: down small-normal, up zero.
    virtual AdapterSet init_adapters(int rank, Rng& rng) const = 0;
    virtual std::vector<ParameterBlock> base_parameters() const = 0;

    /// x_t = sqrt(abar) x0 + sqrt(1 - abar) eps.
    Latent add_noise(const Latent& x0, const Latent& eps, int t) const;
};

using BackboneFactory = std::function<std::unique_ptr<DiffusionBackbone>()>;

/// SHA-256 per base parameter block, in block order.
std::vector<std::string> base_checksums(const DiffusionBackbone& backbone);

}  // namespace viewsynth
