#include "viewsynth/toy_backbone.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

#include "viewsynth/errors.hpp"

namespace viewsynth {

namespace {

constexpr int kPositionFeatures = 4;
constexpr int kTimeFeatures = 2;

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    }
    return m;
}

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

const Eigen::MatrixXd* find_layer(const AdapterSet* adapters, const std::string& target, const Eigen::MatrixXd** up) {
    if (adapters == nullptr) return nullptr;
    for (const auto& l : adapters->layers) {
        if (l.target == target) {
            *up = &l.up;
            return &l.down;
        }
    }
    return nullptr;
}

}  // namespace

struct ToyBackbone::Forward {
    Projections w;
    Eigen::MatrixXd u;      // N x query_in
    Eigen::MatrixXd q;      // N x key_dim
    Eigen::MatrixXd k;      // L x key_dim
    Eigen::MatrixXd v;      // L x value_dim
    Eigen::MatrixXd attn;   // N x L
    Eigen::MatrixXd o;      // N x value_dim
    Eigen::MatrixXd head;   // N x 3, velocity estimate
    double sqrt_ab = 1.0;
    double sqrt_one_minus_ab = 0.0;
};

ToyBackbone::ToyBackbone(ToyBackboneOptions options) : options_(options) {
    if (options_.tokens < 1 || options_.embed_dim < 1 || options_.key_dim < 1 || options_.value_dim < 1 ||
        options_.downsample < 1 || options_.max_timestep < 2) {
        throw InvalidField("toy_backbone", "all sizes must be positive and max_timestep >= 2");
    }
    const int T = options_.max_timestep;
    alpha_bar_.assign(static_cast<std::size_t>(T) + 1, 1.0);
    const double s0 = std::sqrt(options_.beta_start);
    const double s1 = std::sqrt(options_.beta_end);
    double running = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double s = s0 + (s1 - s0) * (t - 1) / (T - 1);
        running *= 1.0 - s * s;
        alpha_bar_[static_cast<std::size_t>(t)] = running;
    }

    Rng rng = seeded_rng(options_.weight_seed, "toy-backbone-weights");
    const int query_in = kChannels + kPositionFeatures + kTimeFeatures;
    w_q_ = random_matrix(rng, options_.key_dim, query_in, 2.0 / std::sqrt(query_in));
    w_k_ = random_matrix(rng, options_.key_dim, options_.embed_dim, 2.0 / std::sqrt(options_.embed_dim));
    w_v_ = random_matrix(rng, options_.value_dim, options_.embed_dim, 1.0 / std::sqrt(options_.embed_dim));
    w_out_ = random_matrix(rng, kChannels, options_.value_dim, 1.0 / std::sqrt(options_.value_dim));
    b_out_ = Eigen::VectorXd::Zero(kChannels);
    text_bias_ = random_matrix(rng, options_.tokens, options_.embed_dim, 0.5);
}

double ToyBackbone::alpha_bar(int t) const {
    if (t < 1 || t > options_.max_timestep) throw InvalidField("timestep", "must lie in [1, T]");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

Embedding ToyBackbone::encode_text(std::string_view text) const {
    Embedding e = text_bias_;
    const auto words = words_of(text);
    if (words.empty()) return e;
    const double norm = 1.0 / std::sqrt(static_cast<double>(words.size()));
    for (const auto& w : words) {
        Rng rng = seeded_rng(options_.weight_seed, "token:" + w);
        e += norm * random_matrix(rng, options_.tokens, options_.embed_dim, 0.25);
    }
    return e;
}

Latent ToyBackbone::zero_latent(int image_size) const {
    if (image_size % options_.downsample != 0) {
        throw ShapeMismatch("image size must be a multiple of " + std::to_string(options_.downsample));
    }
    const int side = image_size / options_.downsample;
    return Latent{side, side, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(side) * side, kChannels)};
}

Latent ToyBackbone::encode_image(const Image& image) const {
    const int f = options_.downsample;
    if (image.channels() != kChannels || image.height() % f != 0 || image.width() % f != 0) {
        throw ShapeMismatch("toy codec needs an RGB image with sides divisible by " + std::to_string(f));
    }
    const int h = image.height() / f;
    const int w = image.width() / f;
    Latent z{h, w, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h) * w, kChannels)};
    const double inv = 1.0 / (f * f);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Eigen::Index n = static_cast<Eigen::Index>(y / f) * w + x / f;
            for (int c = 0; c < kChannels; ++c) z.values(n, c) += image.at(y, x, c) * inv;
        }
    }
    z.values = 2.0 * z.values.array() - 1.0;
    return z;
}

Image ToyBackbone::decode_latent(const Latent& latent) const {
    const int f = options_.downsample;
    if (latent.channels() != kChannels) throw ShapeMismatch("toy latent must have 3 channels");
    Image image(latent.height * f, latent.width * f, kChannels);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Eigen::Index n = static_cast<Eigen::Index>(y / f) * latent.width + x / f;
            for (int c = 0; c < kChannels; ++c) image.at(y, x, c) = 0.5 * (latent.values(n, c) + 1.0);
        }
    }
    return image;
}

Latent ToyBackbone::decode_vjp(const Latent& latent, const Image& d_image) const {
    const int f = options_.downsample;
    if (d_image.height() != latent.height * f || d_image.width() != latent.width * f || d_image.channels() != kChannels) {
        throw ShapeMismatch("decode_vjp: upstream gradient does not match the decoded shape");
    }
    Latent g{latent.height, latent.width, Eigen::MatrixXd::Zero(latent.values.rows(), kChannels)};
    for (int y = 0; y < d_image.height(); ++y) {
        for (int x = 0; x < d_image.width(); ++x) {
            const Eigen::Index n = static_cast<Eigen::Index>(y / f) * latent.width + x / f;
            for (int c = 0; c < kChannels; ++c) g.values(n, c) += 0.5 * d_image.at(y, x, c);
        }
    }
    return g;
}

ToyBackbone::Projections ToyBackbone::effective(const AdapterSet* adapters) const {
    Projections p{w_q_, w_k_, w_v_, w_out_};
    const std::pair<const char*, Eigen::MatrixXd*> targets[] = {
        {"attn.to_q", &p.q}, {"attn.to_k", &p.k}, {"attn.to_v", &p.v}, {"attn.to_out", &p.out}};
    for (const auto& [name, w] : targets) {
        const Eigen::MatrixXd* up = nullptr;
        const Eigen::MatrixXd* down = find_layer(adapters, name, &up);
        if (down == nullptr) continue;
        if (up->rows() != w->rows() || down->cols() != w->cols() || up->cols() != down->rows()) {
            throw ShapeMismatch(std::string("adapter shape mismatch on ") + name);
        }
        *w += adapters->scale * ((*up) * (*down));
    }
    return p;
}

Eigen::MatrixXd ToyBackbone::query_inputs(const Latent& x_t, int t) const {
    const Eigen::Index n = x_t.values.rows();
    Eigen::MatrixXd u(n, kChannels + kPositionFeatures + kTimeFeatures);
    u.leftCols(kChannels) = x_t.values;
    const double tau = 0.5 * std::numbers::pi * t / options_.max_timestep;
    for (int y = 0; y < x_t.height; ++y) {
        const double py = std::numbers::pi * (y + 0.5) / x_t.height;
        for (int x = 0; x < x_t.width; ++x) {
            const double px = std::numbers::pi * (x + 0.5) / x_t.width;
            const Eigen::Index row = static_cast<Eigen::Index>(y) * x_t.width + x;
            u(row, 3) = std::sin(px);
            u(row, 4) = std::cos(px);
            u(row, 5) = std::sin(py);
            u(row, 6) = std::cos(py);
            u(row, 7) = std::cos(tau);
            u(row, 8) = std::sin(tau);
        }
    }
    return u;
}

void ToyBackbone::check(const Latent& x_t, int t, const Embedding& e) const {
    if (x_t.channels() != kChannels || x_t.values.rows() != static_cast<Eigen::Index>(x_t.height) * x_t.width) {
        throw ShapeMismatch("latent shape does not match the toy backbone");
    }
    if (e.rows() != options_.tokens || e.cols() != options_.embed_dim) {
        throw ShapeMismatch("embedding must be " + std::to_string(options_.tokens) + "x" + std::to_string(options_.embed_dim));
    }
    if (t < 1 || t > options_.max_timestep) throw InvalidField("timestep", "must lie in [1, T]");
}

ToyBackbone::Forward ToyBackbone::forward(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters) const {
    check(x_t, t, e);
    Forward f;
    f.w = effective(adapters);
    f.u = query_inputs(x_t, t);
    f.q = f.u * f.w.q.transpose();
    f.k = e * f.w.k.transpose();
    f.v = e * f.w.v.transpose();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(options_.key_dim));
    f.attn = (f.q * f.k.transpose()) * inv_sqrt_dk;
    for (Eigen::Index i = 0; i < f.attn.rows(); ++i) {
        const double m = f.attn.row(i).maxCoeff();
        f.attn.row(i) = (f.attn.row(i).array() - m).exp();
        f.attn.row(i) /= f.attn.row(i).sum();
    }
    f.o = f.attn * f.v;
    f.head = (f.o * f.w.out.transpose()).rowwise() + b_out_.transpose();
    const double ab = alpha_bar(t);
    f.sqrt_ab = std::sqrt(ab);
    f.sqrt_one_minus_ab = std::sqrt(1.0 - ab);
    return f;
}

Latent ToyBackbone::predict_noise(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters) const {
    const Forward f = forward(x_t, t, e, adapters);
    Latent eps = x_t;
    eps.values = f.sqrt_one_minus_ab * x_t.values + f.sqrt_ab * f.head;
    return eps;
}

NoiseVjp ToyBackbone::predict_noise_vjp(const Latent& x_t, int t, const Embedding& e, const AdapterSet* adapters,
                                        const Latent& d_eps, unsigned targets) const {
    if (!x_t.same_shape(d_eps)) throw ShapeMismatch("upstream gradient does not match the latent shape");
    const Forward f = forward(x_t, t, e, adapters);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(options_.key_dim));

    const Eigen::MatrixXd g_head = f.sqrt_ab * d_eps.values;
    const Eigen::MatrixXd g_w_out = g_head.transpose() * f.o;
    const Eigen::MatrixXd g_o = g_head * f.w.out;
    const Eigen::MatrixXd g_attn = g_o * f.v.transpose();
    const Eigen::MatrixXd g_v = f.attn.transpose() * g_o;
    Eigen::MatrixXd g_z = f.attn.cwiseProduct(g_attn);
    const Eigen::VectorXd row_dot = g_z.rowwise().sum();
    g_z -= f.attn.cwiseProduct(row_dot.replicate(1, f.attn.cols()));
    g_z *= inv_sqrt_dk;
    const Eigen::MatrixXd g_q = g_z * f.k;
    const Eigen::MatrixXd g_k = g_z.transpose() * f.q;

    NoiseVjp out;
    if (targets & wrt_latent) {
        out.d_latent = x_t;
        out.d_latent.values = f.sqrt_one_minus_ab * d_eps.values + (g_q * f.w.q).leftCols(kChannels);
    }
    if (targets & wrt_embedding) {
        out.d_embedding = g_k * f.w.k + g_v * f.w.v;
    }
    if ((targets & wrt_adapters) && adapters != nullptr) {
        out.d_adapters = adapters->zeros_like();
        const Eigen::MatrixXd g_w_q = g_q.transpose() * f.u;
        const Eigen::MatrixXd g_w_k = g_k.transpose() * e;
        const Eigen::MatrixXd g_w_v = g_v.transpose() * e;
        for (std::size_t i = 0; i < adapters->layers.size(); ++i) {
            const auto& layer = adapters->layers[i];
            const Eigen::MatrixXd* g_w = nullptr;
            if (layer.target == "attn.to_q") g_w = &g_w_q;
            else if (layer.target == "attn.to_k") g_w = &g_w_k;
            else if (layer.target == "attn.to_v") g_w = &g_w_v;
            else if (layer.target == "attn.to_out") g_w = &g_w_out;
            if (g_w == nullptr) continue;
            out.d_adapters.layers[i].up = adapters->scale * (*g_w) * layer.down.transpose();
            out.d_adapters.layers[i].down = adapters->scale * layer.up.transpose() * (*g_w);
        }
    }
    return out;
}

AdapterSet ToyBackbone::init_adapters(int rank, Rng& rng) const {
    if (rank < 1) throw InvalidField("lora_rank", "must be >= 1");
    AdapterSet set;
    const std::pair<const char*, const Eigen::MatrixXd*> targets[] = {
        {"attn.to_q", &w_q_}, {"attn.to_k", &w_k_}, {"attn.to_v", &w_v_}, {"attn.to_out", &w_out_}};
    for (const auto& [name, w] : targets) {
        LoraAdapter layer;
        layer.target = name;
        layer.down = random_matrix(rng, rank, w->cols(), 1.0 / std::sqrt(static_cast<double>(w->cols())));
        layer.up = Eigen::MatrixXd::Zero(w->rows(), rank);
        set.layers.push_back(std::move(layer));
    }
    return set;
}

std::vector<ParameterBlock> ToyBackbone::base_parameters() const {
    const auto block = [](const char* name, const auto& m) {
        return ParameterBlock{name, std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))};
    };
    return {block("attn.to_q", w_q_),   block("attn.to_k", w_k_), block("attn.to_v", w_v_),
            block("attn.to_out", w_out_), block("attn.out_bias", b_out_), block("text.bias", text_bias_)};
}

std::size_t ToyBackbone::base_parameter_count() const {
    return static_cast<std::size_t>(w_q_.size() + w_k_.size() + w_v_.size() + w_out_.size() + b_out_.size());
}

}  // namespace viewsynth
