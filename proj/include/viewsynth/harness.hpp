#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "viewsynth/backbone.hpp"
#include "viewsynth/caption.hpp"
#include "viewsynth/config.hpp"
#include "viewsynth/metrics.hpp"
#include "viewsynth/nvs_guidance.hpp"
#include "viewsynth/optimizer.hpp"

namespace viewsynth {

struct ManifestScene {
    std::string scene_id;
    std::filesystem::path image_path;
    /// Inline caption or the contents of caption.txt.
    std::optional<std::string> caption;

    /// True when the caption must come from a captioner.
    bool needs_caption() const { return !caption.has_value(); }
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestScene> scenes;  // sorted by scene_id
};

/// Name of the optional override file at the dataset root; one scene per
/// line as `scene_id<TAB>image_path[<TAB>caption]`, '#' comments allowed,
/// relative image paths resolved against the root.
inline constexpr const char* kManifestFile = "manifest.tsv";

/// Discovers `<root>/<scene_id>/input.{png,jpg,jpeg}` and optional
/// `caption.txt`, or reads the override file when present. Throws
/// MissingImage, DuplicateId, EmptyManifest or ValidationError.
DatasetManifest load_manifest(const std::filesystem::path& root);

/// ceil(fraction * N) ids drawn uniformly from `seed`, returned sorted.
std::vector<std::string> validation_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

/// Every id of the manifest not in `subset`, sorted.
std::vector<std::string> split_complement(const DatasetManifest& manifest, const std::vector<std::string>& subset);

struct RunPlan {
    DatasetManifest manifest;
    std::vector<std::string> scene_ids;  // subset of the manifest to run
    std::vector<ViewSpec> views = evaluation_views();
    PipelineConfig config;
    std::filesystem::path out_dir;
    std::string dataset_name = "dataset";
};

/// Backbone named by the `backbone` config value. "mock" (alias "toy") is
/// the built-in CPU model.
BackboneFactory make_backbone_factory(const std::string& spec);

/// Per-(scene, view) seed; independent of scheduling and worker count.
std::uint64_t job_seed(std::uint64_t global_seed, const std::string& scene_id, const ViewSpec& view);

/// Hash of the fields that influence a single generation (the view list,
/// split and cache location are excluded).
std::string generation_config_hash(const PipelineConfig& cfg);

/// `<out_dir>/<scene_id>/<elev>_<azi>`
std::filesystem::path run_directory(const std::filesystem::path& out_dir, const std::string& scene_id,
                                    const ViewSpec& view);

struct PipelineOutcome {
    GenerationResult result;  // image quantized to 8 bits
    ViewSpec realized_view;
    bool reused = false;
};

/// One (scene, view): guidance -> four-phase optimization -> sampling.
/// Writes generated.png, meta.json, state.ckpt and loss.csv into the run
/// directory when `out_dir` is non-empty. When an earlier run with the same
/// generation config hash and seed is found there, its image is reused.
PipelineOutcome run_pipeline(const DiffusionBackbone& backbone, const NvsBackend& nvs, const Scene& scene,
                             const ViewSpec& view, const PipelineConfig& cfg, const std::filesystem::path& cache_dir,
                             const std::filesystem::path& out_dir, std::uint64_t seed);

/// Scene from a manifest entry: loads the image and resolves the caption.
Scene load_scene(const ManifestScene& entry, Captioner* captioner);

struct BatchServices {
    const EmbeddingSpace* space = nullptr;  // built from config when null
    const PerceptualNet* net = nullptr;     // built from config when null
    Captioner* captioner = nullptr;         // built from config when null
    std::function<void(const std::string&)> progress;
};

/// Runs every (scene, view) of the plan on `workers` threads, one backbone
/// instance per worker, scene by scene. Failures are recorded per scene and
/// never abort the batch. Throws AllScenesFailed when nothing succeeded.
MetricReport run_batch(const RunPlan& plan, const BackboneFactory& backbone_factory, const NvsBackend& nvs,
                       int workers, const BatchServices& services = {});

/// Writes report.json and report.csv atomically into `out_dir`.
void emit_report(const MetricReport& report, const std::filesystem::path& out_dir);

/// Metrics-only mode. `generations` holds `<scene_id>/<elev>_<azi>/generated.png`
/// (a meta.json target_prompt is used when present), or a dataset-shaped
/// `<scene_id>/input.*` which is then scored at every configured view.
/// Throws UnpairedScenes listing ids present on only one side.
MetricReport evaluate_trees(const std::filesystem::path& inputs, const std::filesystem::path& generations,
                            const PipelineConfig& cfg, const BatchServices& services = {});

}  // namespace viewsynth
