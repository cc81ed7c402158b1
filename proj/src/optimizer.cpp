#include "viewsynth/optimizer.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "viewsynth/errors.hpp"

namespace viewsynth {

using nlohmann::json;

NoiseDraw draw_noise(const DiffusionBackbone& backbone, const Latent& like, Rng& rng) {
    NoiseDraw d;
    d.t = rng.uniform_int(1, backbone.max_timestep());
    d.eps = like;
    for (Eigen::Index j = 0; j < d.eps.values.cols(); ++j) {
        for (Eigen::Index i = 0; i < d.eps.values.rows(); ++i) d.eps.values(i, j) = rng.normal();
    }
    return d;
}

double denoise_loss_at(const DiffusionBackbone& backbone, const Embedding& e, const AdapterSet* adapters,
                       const Latent& x0, const NoiseDraw& draw) {
    const Latent x_t = backbone.add_noise(x0, draw.eps, draw.t);
    const Latent pred = backbone.predict_noise(x_t, draw.t, e, adapters);
    return (pred.values - draw.eps.values).squaredNorm() / static_cast<double>(pred.values.size());
}

LossGradient denoise_loss_grad(const DiffusionBackbone& backbone, const Embedding& e, const AdapterSet* adapters,
                               const Latent& x0, const NoiseDraw& draw, unsigned targets) {
    const Latent x_t = backbone.add_noise(x0, draw.eps, draw.t);
    const Latent pred = backbone.predict_noise(x_t, draw.t, e, adapters);
    const double n = static_cast<double>(pred.values.size());
    Latent residual = pred;
    residual.values = pred.values - draw.eps.values;

    LossGradient out;
    out.loss = residual.values.squaredNorm() / n;
    Latent upstream = residual;
    upstream.values *= 2.0 / n;
    NoiseVjp vjp = backbone.predict_noise_vjp(x_t, draw.t, e, adapters, upstream, targets & (wrt_embedding | wrt_adapters));
    out.d_embedding = std::move(vjp.d_embedding);
    out.d_adapters = std::move(vjp.d_adapters);
    return out;
}

namespace {

void require_finite(double loss, const std::string& phase, int step) {
    if (!std::isfinite(loss)) {
        throw NonFiniteValue("non-finite loss in phase '" + phase + "' at step " + std::to_string(step));
    }
}

void apply_step(OptimizerKind kind, Adam& adam, std::span<double> params, std::span<const double> grad, double lr) {
    if (kind == OptimizerKind::adam) {
        adam.step(params, grad, lr);
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
    }
}

}  // namespace

double denoise_loss(const DiffusionBackbone& backbone, const OptimizationState& state, const Image& target_image,
                    Rng& rng) {
    const Latent x0 = backbone.encode_image(target_image);
    const NoiseDraw draw = draw_noise(backbone, x0, rng);
    const double loss = denoise_loss_at(backbone, state.e_optim, &state.adapters, x0, draw);
    require_finite(loss, "denoise_loss", 0);
    return loss;
}

Adam::Adam(std::size_t size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeMismatch("Adam: parameter size changed");
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
    }
}

Embedding optimize_embedding(const DiffusionBackbone& backbone, const Embedding& init_e, const AdapterSet& adapters,
                             const Image& target_image, const StepOptions& options, Rng& rng,
                             std::vector<PhaseLog>* log) {
    if (options.steps < 1) throw InvalidField("steps", "must be >= 1");
    const Latent x0 = backbone.encode_image(target_image);
    Embedding e = init_e;
    Adam adam(static_cast<std::size_t>(e.size()));
    PhaseLog phase{options.phase, {}};
    phase.losses.reserve(static_cast<std::size_t>(options.steps));
    for (int step = 0; step < options.steps; ++step) {
        const NoiseDraw draw = draw_noise(backbone, x0, rng);
        const LossGradient lg = denoise_loss_grad(backbone, e, &adapters, x0, draw, wrt_embedding);
        require_finite(lg.loss, options.phase, step);
        if (lg.d_embedding.rows() != e.rows() || lg.d_embedding.cols() != e.cols()) {
            throw ShapeMismatch("embedding gradient shape does not match the embedding");
        }
        phase.losses.push_back(lg.loss);
        apply_step(options.kind, adam, std::span(e.data(), static_cast<std::size_t>(e.size())),
                   std::span(lg.d_embedding.data(), static_cast<std::size_t>(lg.d_embedding.size())), options.lr);
    }
    if (log != nullptr) log->push_back(std::move(phase));
    return e;
}

OptimizationState finetune_adapters(const DiffusionBackbone& backbone, OptimizationState state,
                                    const Image& target_image, const StepOptions& options, Rng& rng) {
    if (options.steps < 1) throw InvalidField("steps", "must be >= 1");
    const auto checksums_before = base_checksums(backbone);
    const Latent x0 = backbone.encode_image(target_image);
    std::vector<double> params = state.adapters.flatten();
    Adam adam(params.size());
    PhaseLog phase{options.phase, {}};
    phase.losses.reserve(static_cast<std::size_t>(options.steps));
    for (int step = 0; step < options.steps; ++step) {
        const NoiseDraw draw = draw_noise(backbone, x0, rng);
        const LossGradient lg = denoise_loss_grad(backbone, state.e_optim, &state.adapters, x0, draw, wrt_adapters);
        require_finite(lg.loss, options.phase, step);
        phase.losses.push_back(lg.loss);
        const std::vector<double> grad = lg.d_adapters.flatten();
        apply_step(options.kind, adam, params, grad, options.lr);
        state.adapters.assign(params);
    }
    if (base_checksums(backbone) != checksums_before) {
        throw FrozenWeightViolation("base weights changed during phase '" + options.phase + "'");
    }
    state.phase_log.push_back(std::move(phase));
    return state;
}

OptimizationState run_schedule(const DiffusionBackbone& backbone, const Scene& scene, const Image& guidance_image,
                               const PipelineConfig& cfg, Rng& rng) {
    const auto tagged = [](const char* phase, auto&& fn) {
        try {
            return fn();
        } catch (const NonFiniteValue&) {
            throw;
        } catch (const FrozenWeightViolation&) {
            throw;
        } catch (const ShapeMismatch& e) {
            throw ShapeMismatch(std::string("[") + phase + "] " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("[") + phase + "] " + e.what());
        } catch (const Error& e) {
            throw Error(std::string("[") + phase + "] " + e.what());
        }
    };
    if (scene.image.height() != cfg.image_size || scene.image.width() != cfg.image_size ||
        guidance_image.height() != cfg.image_size || guidance_image.width() != cfg.image_size) {
        throw ShapeMismatch("run_schedule: input and guidance images must be resized to image_size first");
    }

    OptimizationState state;
    const Embedding source_e = backbone.encode_text(scene.caption);
    state.adapters = backbone.init_adapters(cfg.lora_rank, rng);

    const StepOptions embed_input{cfg.embed_opt_steps_input, cfg.embed_lr, cfg.optimizer, kPhaseEmbedInput};
    state.e_optim = tagged(kPhaseEmbedInput, [&] {
        return optimize_embedding(backbone, source_e, state.adapters, scene.image, embed_input, rng, &state.phase_log);
    });

    const StepOptions lora_input{cfg.lora_steps_input, cfg.lora_lr, cfg.optimizer, kPhaseLoraInput};
    state = tagged(kPhaseLoraInput, [&] { return finetune_adapters(backbone, state, scene.image, lora_input, rng); });

    const StepOptions embed_view{cfg.embed_opt_steps_view, cfg.embed_lr, cfg.optimizer, kPhaseEmbedView};
    const Embedding view_start = cfg.cold_start_view_embedding ? source_e : state.e_optim;
    state.e_optim = tagged(kPhaseEmbedView, [&] {
        return optimize_embedding(backbone, view_start, state.adapters, guidance_image, embed_view, rng, &state.phase_log);
    });

    if (cfg.reset_view_adapters) state.adapters = backbone.init_adapters(cfg.lora_rank, rng);
    const StepOptions lora_view{cfg.lora_steps_view, cfg.lora_lr, cfg.optimizer, kPhaseLoraView};
    state = tagged(kPhaseLoraView, [&] { return finetune_adapters(backbone, state, guidance_image, lora_view, rng); });
    return state;
}

double reconstruction_error(const DiffusionBackbone& backbone, const Embedding& e, const AdapterSet& adapters,
                            const Image& image, std::uint64_t seed, int samples) {
    const Latent x0 = backbone.encode_image(image);
    Rng rng = seeded_rng(seed, "reconstruction");
    double total = 0.0;
    for (int i = 0; i < samples; ++i) {
        total += denoise_loss_at(backbone, e, &adapters, x0, draw_noise(backbone, x0, rng));
    }
    return total / samples;
}

std::string loss_curve_csv(const OptimizationState& state) {
    std::ostringstream out;
    out << "step,phase,loss\n";
    for (const auto& phase : state.phase_log) {
        for (std::size_t i = 0; i < phase.losses.size(); ++i) {
            out << i << ',' << phase.phase << ',' << format_double(phase.losses[i]) << '\n';
        }
    }
    return out.str();
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()},
                {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IoError("checkpoint matrix has the wrong size");
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace

void save_checkpoint(const OptimizationState& state, const DiffusionBackbone& backbone,
                     const std::filesystem::path& path) {
    json layers = json::array();
    for (const auto& l : state.adapters.layers) {
        layers.push_back({{"target", l.target}, {"down", matrix_to_json(l.down)}, {"up", matrix_to_json(l.up)}});
    }
    json phases = json::array();
    for (const auto& p : state.phase_log) phases.push_back({{"phase", p.phase}, {"losses", p.losses}});
    const json doc{{"format", "viewsynth-state/1"},
                   {"backbone", backbone.name()},
                   {"base_checksums", base_checksums(backbone)},
                   {"e_optim", matrix_to_json(state.e_optim)},
                   {"adapters", {{"scale", state.adapters.scale}, {"layers", layers}}},
                   {"phase_log", phases}};
    write_file_atomic(path, doc.dump(1) + "\n");
}

OptimizationState load_checkpoint(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    if (doc.value("format", "") != "viewsynth-state/1") throw IoError("unrecognized checkpoint format: " + path.string());
    OptimizationState state;
    state.e_optim = matrix_from_json(doc.at("e_optim"));
    state.adapters.scale = doc.at("adapters").at("scale").get<double>();
    for (const auto& l : doc.at("adapters").at("layers")) {
        state.adapters.layers.push_back(
            {l.at("target").get<std::string>(), matrix_from_json(l.at("down")), matrix_from_json(l.at("up"))});
    }
    for (const auto& p : doc.at("phase_log")) {
        state.phase_log.push_back({p.at("phase").get<std::string>(), p.at("losses").get<std::vector<double>>()});
    }
    return state;
}

}  // namespace viewsynth
