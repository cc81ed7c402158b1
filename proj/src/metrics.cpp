#include "viewsynth/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <httplib.h>

#include "viewsynth/caption.hpp"
#include "viewsynth/config.hpp"
#include "viewsynth/errors.hpp"
#include "viewsynth/rng.hpp"

namespace viewsynth {

namespace {

constexpr int kThumb = 8;
constexpr int kHistBins = 16;
constexpr int kImageFeatures = kThumb * kThumb * 3 + kHistBins;

Eigen::VectorXd unit_or_axis(Eigen::VectorXd v) {
    const double n = v.norm();
    if (n < 1e-12 || !std::isfinite(n)) {
        v.setZero();
        v(0) = 1.0;
        return v;
    }
    return v / n;
}

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '+' || c == '-') {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

}  // namespace

FeatureEmbeddingSpace::FeatureEmbeddingSpace(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 2) throw InvalidField("encoder", "embedding dimension must be >= 2");
    Rng rng = seeded_rng(seed, "image-projection");
    image_projection_.resize(dim, kImageFeatures);
    for (Eigen::Index j = 0; j < image_projection_.cols(); ++j) {
        for (Eigen::Index i = 0; i < image_projection_.rows(); ++i) image_projection_(i, j) = rng.normal();
    }
}

Eigen::VectorXd FeatureEmbeddingSpace::embed_image(const Image& image) const {
    if (image.empty() || image.channels() != 3) throw ShapeMismatch("embedding expects a non-empty RGB image");
    const Image thumb = resize_area(image, kThumb, kThumb);
    Eigen::VectorXd f(kImageFeatures);
    Eigen::Index k = 0;
    for (const double v : thumb.data()) f(k++) = v - 0.5;
    const Image gray = to_grayscale(image);
    std::vector<double> hist(kHistBins, 0.0);
    for (const double v : gray.data()) {
        const int b = std::clamp(static_cast<int>(v * kHistBins), 0, kHistBins - 1);
        hist[static_cast<std::size_t>(b)] += 1.0;
    }
    for (const double h : hist) f(k++) = h / static_cast<double>(gray.size()) - 1.0 / kHistBins;
    return unit_or_axis(image_projection_ * f);
}

Eigen::VectorXd FeatureEmbeddingSpace::embed_text(std::string_view text) const {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
    for (const auto& word : words_of(text)) {
        Rng rng = seeded_rng(seed_, "word:" + word);
        for (int i = 0; i < dim_; ++i) sum(i) += rng.normal();
    }
    Eigen::VectorXd axis = Eigen::VectorXd::Zero(dim_);
    if (sum.norm() < 1e-12) {
        axis(1) = 1.0;
        return axis;
    }
    return sum.normalized();
}

HttpEmbeddingSpace::HttpEmbeddingSpace(std::string base_url, double timeout_s)
    : base_url_(std::move(base_url)), timeout_s_(timeout_s) {}

std::string HttpEmbeddingSpace::version() const {
    const std::lock_guard lock(mutex_);
    return model_.empty() ? "http:" + base_url_ : model_ + "@" + base_url_;
}

int HttpEmbeddingSpace::dim() const {
    {
        const std::lock_guard lock(mutex_);
        if (dim_ != 0) return dim_;
    }
    return static_cast<int>(embed_text("a photo").size());
}

Eigen::VectorXd HttpEmbeddingSpace::post(const std::string& path, const std::string& body,
                                         const std::string& type) const {
    httplib::Client client(base_url_);
    const auto seconds = static_cast<time_t>(timeout_s_);
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    const auto res = client.Post(path, body, type);
    if (!res) throw BackendFailure("encoder unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendFailure("encoder answered HTTP " + std::to_string(res->status));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendFailure(std::string("encoder returned invalid JSON: ") + e.what());
    }
    if (!j.contains("embedding") || !j["embedding"].is_array() || j["embedding"].empty()) {
        throw BackendFailure("encoder response lacks an embedding");
    }
    const auto values = j["embedding"].get<std::vector<double>>();
    {
        const std::lock_guard lock(mutex_);
        if (j.contains("model") && j["model"].is_string()) model_ = j["model"].get<std::string>();
        dim_ = static_cast<int>(values.size());
    }
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    if (!(v.norm() > 0.0)) throw BackendFailure("encoder returned a zero embedding");
    return v.normalized();
}

Eigen::VectorXd HttpEmbeddingSpace::embed_image(const Image& image) const {
    const auto png = encode_png(image);
    return post("/embed/image", std::string(png.begin(), png.end()), "image/png");
}

Eigen::VectorXd HttpEmbeddingSpace::embed_text(std::string_view text) const {
    return post("/embed/text", nlohmann::json{{"text", text}}.dump(), "application/json");
}

std::unique_ptr<EmbeddingSpace> make_embedding_space(const std::string& spec) {
    if (spec == "mock-feature-v1" || spec == "mock") return std::make_unique<FeatureEmbeddingSpace>();
    if (spec.starts_with("http://") || spec.starts_with("https://")) return std::make_unique<HttpEmbeddingSpace>(spec);
    throw InvalidField("encoder", "expected mock-feature-v1 or an http URL, got '" + spec + "'");
}

namespace {

constexpr int kScales = 3;
constexpr int kPerceptualChannels = 6;

PerceptualNet::Layer filter_layer(const Image& img) {
    const int h = img.height();
    const int w = img.width();
    const Image gray = to_grayscale(img);
    auto g = [&](int y, int x) {
        return gray.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1), 0);
    };
    PerceptualNet::Layer layer;
    layer.height = h;
    layer.width = w;
    layer.features.resize(static_cast<Eigen::Index>(h) * w, kPerceptualChannels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Index r = static_cast<Eigen::Index>(y) * w + x;
            for (int c = 0; c < 3; ++c) layer.features(r, c) = img.at(y, x, c) - 0.5;
            layer.features(r, 3) = 0.5 * (g(y, x + 1) - g(y, x - 1));
            layer.features(r, 4) = 0.5 * (g(y + 1, x) - g(y - 1, x));
            layer.features(r, 5) = g(y, x + 1) + g(y, x - 1) + g(y + 1, x) + g(y - 1, x) - 4.0 * g(y, x);
        }
    }
    return layer;
}

}  // namespace

std::vector<PerceptualNet::Layer> FilterBankPerceptualNet::features(const Image& image) const {
    if (image.empty() || image.channels() != 3) throw ShapeMismatch("perceptual features expect an RGB image");
    std::vector<Layer> layers;
    Image level = image;
    for (int s = 0; s < kScales; ++s) {
        layers.push_back(filter_layer(level));
        const int h = std::max(1, level.height() / 2);
        const int w = std::max(1, level.width() / 2);
        if (s + 1 < kScales) level = resize_area(level, h, w);
    }
    return layers;
}

std::vector<Eigen::VectorXd> FilterBankPerceptualNet::channel_weights() const {
    return std::vector<Eigen::VectorXd>(kScales, Eigen::VectorXd::Ones(kPerceptualChannels));
}

std::unique_ptr<PerceptualNet> make_perceptual_net(const std::string& spec) {
    if (spec == "filterbank-lpips-v1" || spec == "mock") return std::make_unique<FilterBankPerceptualNet>();
    throw InvalidField("perceptual_model", "expected filterbank-lpips-v1, got '" + spec + "'");
}

double lpips_distance(const Image& a, const Image& b, const PerceptualNet& net) {
    if (!a.same_shape(b)) throw ShapeMismatch("perceptual distance needs images of equal shape");
    const auto fa = net.features(a);
    const auto fb = net.features(b);
    const auto weights = net.channel_weights();
    constexpr double kEps = 1e-10;
    double total = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const Eigen::MatrixXd& xa = fa[l].features;
        const Eigen::MatrixXd& xb = fb[l].features;
        double layer_sum = 0.0;
        for (Eigen::Index r = 0; r < xa.rows(); ++r) {
            const double na = xa.row(r).norm() + kEps;
            const double nb = xb.row(r).norm() + kEps;
            const Eigen::RowVectorXd d = xa.row(r) / na - xb.row(r) / nb;
            layer_sum += d.cwiseAbs2().dot(weights[l].transpose());
        }
        total += layer_sum / static_cast<double>(xa.rows());
    }
    return total;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double clip_score(const Image& image, std::string_view text, const EmbeddingSpace& space) {
    if (trim(text).empty()) throw EmptyCaption("text-alignment score needs non-empty text");
    return 100.0 * cosine(space.embed_image(image), space.embed_text(text));
}

double view_clip_score(const Image& image, const ViewSpec& view, const EmbeddingSpace& space) {
    return 100.0 * cosine(space.embed_image(image), space.embed_text(build_view_prefix(view)));
}

double directional_similarity(const Image& src_img, const Image& gen_img, std::string_view src_text,
                              std::string_view tgt_text, const EmbeddingSpace& space) {
    constexpr double kDegenerate = 1e-8;
    const Eigen::VectorXd d_image = space.embed_image(gen_img) - space.embed_image(src_img);
    if (!(d_image.norm() >= kDegenerate)) return 0.0;
    const Eigen::VectorXd d_text = space.embed_text(tgt_text) - space.embed_text(src_text);
    if (!(d_text.norm() >= kDegenerate)) return 0.0;
    return std::clamp(d_image.dot(d_text) / (d_image.norm() * d_text.norm()), -1.0, 1.0);
}

double clip_d(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space) {
    return directional_similarity(scene.image, result.image, scene.caption, result.target_prompt, space);
}

double view_clip_d(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space) {
    return directional_similarity(scene.image, result.image, kNeutralSourceText, build_view_prefix(result.view), space);
}

double clip_i(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space) {
    return cosine(space.embed_image(result.image), space.embed_image(scene.image));
}

MetricValues evaluate_metrics(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space,
                              const PerceptualNet& net) {
    MetricValues m;
    const Image reference = result.image.same_shape(scene.image)
                                ? scene.image
                                : resize_bicubic(scene.image, result.image.height(), result.image.width());
    m.lpips = lpips_distance(reference, result.image, net);
    m.clip = clip_score(result.image, result.target_prompt, space);
    m.view_clip = view_clip_score(result.image, result.view, space);
    m.clip_d = clip_d(scene, result, space);
    m.view_clip_d = view_clip_d(scene, result, space);
    m.clip_i = clip_i(scene, result, space);
    return m;
}

namespace {

void accumulate(MetricValues& acc, const MetricValues& v) {
    acc.lpips += v.lpips;
    acc.clip += v.clip;
    acc.view_clip += v.view_clip;
    acc.clip_d += v.clip_d;
    acc.view_clip_d += v.view_clip_d;
    acc.clip_i += v.clip_i;
}

MetricValues divide(MetricValues v, double n) {
    v.lpips /= n;
    v.clip /= n;
    v.view_clip /= n;
    v.clip_d /= n;
    v.view_clip_d /= n;
    v.clip_i /= n;
    return v;
}

nlohmann::json values_json(const MetricValues& v) {
    return {{"LPIPS", v.lpips}, {"CLIP", v.clip},         {"View-CLIP", v.view_clip},
            {"CLIPD", v.clip_d}, {"View-CLIPD", v.view_clip_d}, {"CLIP-I", v.clip_i}};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_row(const std::string& dataset, const ViewSpec& view, const std::string& method,
                    const std::string& scene, const MetricValues& v) {
    std::string row = csv_field(dataset) + "," + view_label(view) + "," + csv_field(method) + "," + csv_field(scene);
    for (const double x : {v.lpips, v.clip, v.view_clip, v.clip_d, v.view_clip_d, v.clip_i}) {
        row += "," + format_double(x);
    }
    return row + "\n";
}

}  // namespace

MetricValues mean_metrics(const std::vector<SceneMetrics>& entries) {
    MetricValues acc;
    if (entries.empty()) return acc;
    for (const auto& e : entries) accumulate(acc, e.values);
    return divide(acc, static_cast<double>(entries.size()));
}

std::vector<std::pair<ViewSpec, MetricValues>> per_view_means(const std::vector<SceneMetrics>& entries) {
    std::vector<std::pair<ViewSpec, std::vector<SceneMetrics>>> groups;
    for (const auto& e : entries) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == e.view; });
        if (it == groups.end()) {
            groups.push_back({e.view, {}});
            it = std::prev(groups.end());
        }
        it->second.push_back(e);
    }
    std::vector<std::pair<ViewSpec, MetricValues>> out;
    for (const auto& [view, members] : groups) out.emplace_back(view, mean_metrics(members));
    return out;
}

nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["dataset"] = report.dataset;
    j["method"] = report.method;
    j["encoder_version"] = report.encoder_version;
    j["perceptual_version"] = report.perceptual_version;
    j["neutral_source_text"] = report.neutral_source_text;
    j["config_hash"] = report.config_hash;
    j["split_seed"] = report.split_seed;
    j["columns"] = kMetricColumns;
    j["aggregate"] = values_json(report.aggregate);
    j["per_view"] = nlohmann::json::array();
    for (const auto& [view, values] : per_view_means(report.per_scene)) {
        j["per_view"].push_back({{"view", view_label(view)}, {"metrics", values_json(values)}});
    }
    j["per_scene"] = nlohmann::json::array();
    for (const auto& e : report.per_scene) {
        j["per_scene"].push_back({{"scene", e.scene_id},
                                  {"view", view_label(e.view)},
                                  {"elevation", e.view.elevation_deg},
                                  {"azimuth", e.view.azimuth_deg},
                                  {"metrics", values_json(e.values)}});
    }
    j["failures"] = nlohmann::json::array();
    for (const auto& f : report.failures) {
        nlohmann::json views = nlohmann::json::array();
        for (const auto& [view, message] : f.views) views.push_back({{"view", view_label(view)}, {"error", message}});
        j["failures"].push_back({{"scene", f.scene_id}, {"views", views}});
    }
    return j;
}

std::string report_to_csv(const MetricReport& report) {
    std::string out = std::string("dataset,view,method,scene,") + kMetricColumns + "\n";
    for (const auto& [view, values] : per_view_means(report.per_scene)) {
        out += csv_row(report.dataset, view, report.method, "mean", values);
        for (const auto& e : report.per_scene) {
            if (e.view == view) out += csv_row(report.dataset, view, report.method, e.scene_id, e.values);
        }
    }
    return out;
}

}  // namespace viewsynth
