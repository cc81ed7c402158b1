#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "viewsynth/core.hpp"

namespace viewsynth {

/// Joint image-text embedding space. Every returned vector has unit L2 norm.
/// Implementations must be safe to call concurrently.
class EmbeddingSpace {
public:
    virtual ~EmbeddingSpace() = default;
    virtual std::string version() const = 0;
    virtual int dim() const = 0;
    virtual Eigen::VectorXd embed_image(const Image& image) const = 0;
    virtual Eigen::VectorXd embed_text(std::string_view text) const = 0;
};

/// Deterministic, weight-free stand-in for a dual encoder. Images map through
/// a fixed random projection of an 8x8 colour thumbnail and a luma
/// histogram; texts map to a normalized sum of per-word random vectors.
/// Cosines carry no semantic meaning across modalities.
class FeatureEmbeddingSpace final : public EmbeddingSpace {
public:
    explicit FeatureEmbeddingSpace(int dim = 64, std::uint64_t seed = 7);
    std::string version() const override { return "mock-feature-v1"; }
    int dim() const override { return dim_; }
    Eigen::VectorXd embed_image(const Image& image) const override;
    Eigen::VectorXd embed_text(std::string_view text) const override;

private:
    int dim_;
    std::uint64_t seed_;
    Eigen::MatrixXd image_projection_;
};

/// Client for an encoder served over HTTP:
///   POST <base>/embed/image (image/png)          -> {"embedding": [...]}
///   POST <base>/embed/text  ({"text": "..."})    -> {"embedding": [...]}
/// An optional "model" field in the response is folded into version().
class HttpEmbeddingSpace final : public EmbeddingSpace {
public:
    explicit HttpEmbeddingSpace(std::string base_url, double timeout_s = 120.0);
    std::string version() const override;
    int dim() const override;
    Eigen::VectorXd embed_image(const Image& image) const override;
    Eigen::VectorXd embed_text(std::string_view text) const override;

private:
    Eigen::VectorXd post(const std::string& path, const std::string& body, const std::string& type) const;

    std::string base_url_;
    double timeout_s_;
    mutable std::mutex mutex_;
    mutable std::string model_;
    mutable int dim_ = 0;
};

std::unique_ptr<EmbeddingSpace> make_embedding_space(const std::string& spec);

/// Per-location feature stacks at several scales for a perceptual distance.
class PerceptualNet {
public:
    struct Layer {
        int height = 0;
        int width = 0;
        Eigen::MatrixXd features;  // (height*width) x channels
    };
    virtual ~PerceptualNet() = default;
    virtual std::string version() const = 0;
    virtual std::vector<Layer> features(const Image& image) const = 0;
    /// Non-negative per-channel weights, one vector per layer.
    virtual std::vector<Eigen::VectorXd> channel_weights() const = 0;
};

/// Fixed filter bank standing in for a trained backbone: at three dyadic
/// scales, centred colour plus luma gradient and Laplacian responses.
class FilterBankPerceptualNet final : public PerceptualNet {
public:
    std::string version() const override { return "filterbank-lpips-v1"; }
    std::vector<Layer> features(const Image& image) const override;
    std::vector<Eigen::VectorXd> channel_weights() const override;
};

std::unique_ptr<PerceptualNet> make_perceptual_net(const std::string& spec);

/// Learned-perceptual-distance form: per layer, unit-normalize features
/// along channels, weight the squared difference per channel, average over
/// space, and sum over layers.
double lpips_distance(const Image& a, const Image& b, const PerceptualNet& net);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// 100 * cos(image, text). Throws EmptyCaption on blank text.
double clip_score(const Image& image, std::string_view text, const EmbeddingSpace& space);

/// 100 * cos(image, view prefix alone).
double view_clip_score(const Image& image, const ViewSpec& view, const EmbeddingSpace& space);

/// cos(E(gen) - E(src), T(tgt) - T(src)); 0 when either difference has
/// norm below 1e-8.
double directional_similarity(const Image& src_img, const Image& gen_img, std::string_view src_text,
                              std::string_view tgt_text, const EmbeddingSpace& space);

/// Source text of the view-only directional score.
inline constexpr const char* kNeutralSourceText = "a photo";

double clip_d(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space);
double view_clip_d(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space);
double clip_i(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space);

struct MetricValues {
    double lpips = 0.0;
    double clip = 0.0;
    double view_clip = 0.0;
    double clip_d = 0.0;
    double view_clip_d = 0.0;
    double clip_i = 0.0;

    friend bool operator==(const MetricValues&, const MetricValues&) = default;
};

/// Column order of the CSV report.
inline constexpr const char* kMetricColumns = "LPIPS,CLIP,View-CLIP,CLIPD,View-CLIPD,CLIP-I";

MetricValues evaluate_metrics(const Scene& scene, const GenerationResult& result, const EmbeddingSpace& space,
                              const PerceptualNet& net);

struct SceneMetrics {
    std::string scene_id;
    ViewSpec view;
    MetricValues values;
};

struct FailureRecord {
    std::string scene_id;
    std::vector<std::pair<ViewSpec, std::string>> views;  // view, diagnostic
};

struct MetricReport {
    std::string dataset = "dataset";
    std::string method = "ours";
    std::string encoder_version;
    std::string perceptual_version;
    std::string neutral_source_text = kNeutralSourceText;
    std::string config_hash;
    std::uint64_t split_seed = 0;
    MetricValues aggregate;
    std::vector<SceneMetrics> per_scene;
    std::vector<FailureRecord> failures;
};

/// Unweighted mean of the per-scene entries (zeros when empty).
MetricValues mean_metrics(const std::vector<SceneMetrics>& entries);

/// Per-view means in first-seen view order.
std::vector<std::pair<ViewSpec, MetricValues>> per_view_means(const std::vector<SceneMetrics>& entries);

nlohmann::json report_to_json(const MetricReport& report);

/// `dataset,view,method,scene,` + metric columns. For each view one
/// aggregate row (scene = "mean") followed by its per-scene rows.
std::string report_to_csv(const MetricReport& report);

}  // namespace viewsynth
