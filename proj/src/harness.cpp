#include "viewsynth/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "viewsynth/errors.hpp"
#include "viewsynth/rng.hpp"
#include "viewsynth/sampler.hpp"
#include "viewsynth/toy_backbone.hpp"

namespace viewsynth {

namespace fs = std::filesystem;

namespace {

std::optional<fs::path> find_input_image(const fs::path& dir) {
    for (const char* name : {"input.png", "input.jpg", "input.jpeg"}) {
        if (fs::is_regular_file(dir / name)) return dir / name;
    }
    return std::nullopt;
}

bool hidden(const fs::path& p) { return p.filename().string().starts_with("."); }

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        parts.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return parts;
}

DatasetManifest read_override(const fs::path& root) {
    DatasetManifest manifest;
    manifest.root = root;
    std::istringstream in(read_text_file(root / kManifestFile));
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || trim(line).starts_with("#")) continue;
        const auto parts = split_tabs(line);
        if (parts.size() < 2 || parts.size() > 3 || trim(parts[0]).empty() || trim(parts[1]).empty()) {
            throw ValidationError(std::string(kManifestFile) + " line " + std::to_string(number) +
                                  ": expected scene_id<TAB>image_path[<TAB>caption]");
        }
        ManifestScene scene;
        scene.scene_id = trim(parts[0]);
        fs::path image = trim(parts[1]);
        scene.image_path = image.is_absolute() ? image : root / image;
        if (parts.size() == 3 && !trim(parts[2]).empty()) scene.caption = trim(parts[2]);
        manifest.scenes.push_back(std::move(scene));
    }
    return manifest;
}

DatasetManifest discover(const fs::path& root) {
    DatasetManifest manifest;
    manifest.root = root;
    for (const auto& item : fs::directory_iterator(root)) {
        if (!item.is_directory() || hidden(item.path())) continue;
        const auto image = find_input_image(item.path());
        if (!image) throw MissingImage("scene directory '" + item.path().string() + "' has no input.png or input.jpg");
        ManifestScene scene;
        scene.scene_id = item.path().filename().string();
        scene.image_path = *image;
        if (fs::is_regular_file(item.path() / "caption.txt")) scene.caption = read_text_file(item.path() / "caption.txt");
        manifest.scenes.push_back(std::move(scene));
    }
    return manifest;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root) {
    if (!fs::is_directory(root)) throw ValidationError("dataset root '" + root.string() + "' is not a directory");
    DatasetManifest manifest = fs::is_regular_file(root / kManifestFile) ? read_override(root) : discover(root);
    std::sort(manifest.scenes.begin(), manifest.scenes.end(),
              [](const auto& a, const auto& b) { return a.scene_id < b.scene_id; });
    for (std::size_t i = 1; i < manifest.scenes.size(); ++i) {
        if (manifest.scenes[i].scene_id == manifest.scenes[i - 1].scene_id) {
            throw DuplicateId("scene id '" + manifest.scenes[i].scene_id + "' appears more than once");
        }
    }
    for (const auto& scene : manifest.scenes) {
        if (!fs::is_regular_file(scene.image_path)) {
            throw MissingImage("scene '" + scene.scene_id + "': image '" + scene.image_path.string() + "' not found");
        }
    }
    if (manifest.scenes.empty()) throw EmptyManifest("dataset '" + root.string() + "' contains no scenes");
    return manifest;
}

std::vector<std::string> validation_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
    if (manifest.scenes.empty()) throw EmptyManifest("cannot split an empty manifest");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidField("val_fraction", "must be in (0, 1]");
    std::vector<std::string> ids;
    for (const auto& s : manifest.scenes) ids.push_back(s.scene_id);
    // Fisher-Yates with an explicit index draw, so the split does not depend
    // on the standard library's shuffle.
    Rng rng = seeded_rng(seed, "validation-split");
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(ids[i - 1], ids[j]);
    }
    const auto n = static_cast<double>(ids.size());
    const auto k = static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
    ids.resize(std::clamp<std::size_t>(k, 1, ids.size()));
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<std::string> split_complement(const DatasetManifest& manifest, const std::vector<std::string>& subset) {
    const std::set<std::string> taken(subset.begin(), subset.end());
    std::vector<std::string> rest;
    for (const auto& s : manifest.scenes) {
        if (!taken.contains(s.scene_id)) rest.push_back(s.scene_id);
    }
    return rest;
}

BackboneFactory make_backbone_factory(const std::string& spec) {
    if (spec == "mock" || spec == "toy") {
        return [] { return std::unique_ptr<DiffusionBackbone>(std::make_unique<ToyBackbone>()); };
    }
    throw InvalidField("backbone", "unknown backbone '" + spec + "' (this build provides: mock)");
}

std::uint64_t job_seed(std::uint64_t global_seed, const std::string& scene_id, const ViewSpec& view) {
    return derive_seed(global_seed, scene_id + "|" + view_label(view));
}

std::string generation_config_hash(const PipelineConfig& cfg) {
    PipelineConfig c = cfg;
    c.views = evaluation_views();
    c.val_fraction = 0.10;
    c.split_seed = 0;
    c.cache_dir.clear();
    c.method = "ours";
    return config_hash(c);
}

fs::path run_directory(const fs::path& out_dir, const std::string& scene_id, const ViewSpec& view) {
    return out_dir / scene_id / view_label(view);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::optional<PipelineOutcome> try_reuse(const fs::path& dir, const std::string& hash, std::uint64_t seed) {
    const fs::path meta_path = dir / "meta.json";
    if (!fs::is_regular_file(meta_path) || !fs::is_regular_file(dir / "generated.png")) return std::nullopt;
    try {
        const auto meta = nlohmann::json::parse(read_text_file(meta_path));
        if (meta.at("config_hash").get<std::string>() != hash || meta.at("seed").get<std::uint64_t>() != seed) {
            return std::nullopt;
        }
        PipelineOutcome out;
        out.result.image = load_image(dir / "generated.png");
        out.result.view = ViewSpec{meta.at("view").at(0).get<double>(), meta.at("view").at(1).get<double>()};
        out.realized_view =
            ViewSpec{meta.at("realized_view").at(0).get<double>(), meta.at("realized_view").at(1).get<double>()};
        out.result.target_prompt = meta.at("target_prompt").get<std::string>();
        out.result.seed = seed;
        out.reused = true;
        return out;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

PipelineOutcome run_pipeline(const DiffusionBackbone& backbone, const NvsBackend& nvs, const Scene& scene,
                             const ViewSpec& view, const PipelineConfig& cfg, const fs::path& cache_dir,
                             const fs::path& out_dir, std::uint64_t seed) {
    const ViewSpec requested = make_view(view.elevation_deg, view.azimuth_deg);
    const std::string hash = generation_config_hash(cfg);
    const fs::path dir = out_dir.empty() ? fs::path() : run_directory(out_dir, scene.scene_id, requested);
    if (!dir.empty()) {
        if (auto reused = try_reuse(dir, hash, seed)) return *reused;
    }

    const int size = cfg.image_size;
    Scene sized = scene;
    if (scene.image.height() != size || scene.image.width() != size) sized.image = resize_bicubic(scene.image, size, size);

    auto clock = std::chrono::steady_clock::now();
    const GuidanceImage guidance = synthesize_guidance(scene, requested, nvs, cache_dir, cfg.snap_to_supported_views);
    const Image guidance_image = resize_guidance(guidance, size);
    const double t_guidance = seconds_since(clock);

    clock = std::chrono::steady_clock::now();
    Rng optimize_rng = seeded_rng(seed, "optimize");
    const OptimizationState state = run_schedule(backbone, sized, guidance_image, cfg, optimize_rng);
    const double t_optimize = seconds_since(clock);

    const PromptSpec prompts = build_target_prompt(guidance.realized_view, scene.caption);
    Rng sample_rng = seeded_rng(seed, "sample");
    PipelineOutcome out;
    out.result = generate(backbone, state, prompts, sized.image, cfg, sample_rng);
    out.result.image = quantize_8bit(out.result.image);
    out.result.seed = seed;
    out.result.timings["guidance"] = t_guidance;
    out.result.timings["optimization"] = t_optimize;
    out.realized_view = guidance.realized_view;

    if (!dir.empty()) {
        fs::create_directories(dir);
        save_png(out.result.image, dir / "generated.png");
        save_checkpoint(state, backbone, dir / "state.ckpt");
        write_file_atomic(dir / "loss.csv", loss_curve_csv(state));
        nlohmann::json timings = nlohmann::json::object();
        for (const auto& [k, v] : out.result.timings) timings[k] = v;
        const nlohmann::json meta{
            {"scene_id", scene.scene_id},
            {"seed", seed},
            {"config_hash", hash},
            {"view", {requested.elevation_deg, requested.azimuth_deg}},
            {"realized_view", {guidance.realized_view.elevation_deg, guidance.realized_view.azimuth_deg}},
            {"source_prompt", prompts.source_text},
            {"target_prompt", prompts.target_text},
            {"backbone", backbone.name()},
            {"nvs_backend", guidance.backend_name},
            {"guidance_cache_key", guidance.cache_key},
            {"image_size", size},
            {"timings", timings}};
        write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
    }
    return out;
}

Scene load_scene(const ManifestScene& entry, Captioner* captioner) {
    Image image = load_image(entry.image_path);
    std::string caption = acquire_caption(image, entry.caption, captioner);
    return make_scene(std::move(image), std::move(caption), entry.scene_id);
}

namespace {

struct OwnedServices {
    std::unique_ptr<EmbeddingSpace> space_owned;
    std::unique_ptr<PerceptualNet> net_owned;
    std::unique_ptr<Captioner> captioner_owned;
    const EmbeddingSpace* space = nullptr;
    const PerceptualNet* net = nullptr;
    Captioner* captioner = nullptr;

    OwnedServices(const BatchServices& s, const PipelineConfig& cfg) {
        space = s.space;
        if (space == nullptr) {
            space_owned = make_embedding_space(cfg.encoder);
            space = space_owned.get();
        }
        net = s.net;
        if (net == nullptr) {
            net_owned = make_perceptual_net(cfg.perceptual_model);
            net = net_owned.get();
        }
        captioner = s.captioner;
        if (captioner == nullptr) {
            captioner_owned = make_captioner(cfg.captioner, cfg.captioner_timeout_s, cfg.captioner_retries);
            captioner = captioner_owned.get();
        }
    }
};

struct SceneOutcome {
    std::vector<SceneMetrics> metrics;
    FailureRecord failure;
};

MetricReport assemble(const std::vector<SceneOutcome>& outcomes, const PipelineConfig& cfg,
                      const OwnedServices& services, const std::string& dataset) {
    MetricReport report;
    report.dataset = dataset;
    report.method = cfg.method;
    report.encoder_version = services.space->version();
    report.perceptual_version = services.net->version();
    // The cache location never changes a reported number.
    PipelineConfig hashed = cfg;
    hashed.cache_dir.clear();
    report.config_hash = config_hash(hashed);
    report.split_seed = cfg.split_seed;
    for (const auto& o : outcomes) {
        report.per_scene.insert(report.per_scene.end(), o.metrics.begin(), o.metrics.end());
        if (!o.failure.views.empty()) report.failures.push_back(o.failure);
    }
    report.aggregate = mean_metrics(report.per_scene);
    return report;
}

}  // namespace

MetricReport run_batch(const RunPlan& plan, const BackboneFactory& backbone_factory, const NvsBackend& nvs,
                       int workers, const BatchServices& services) {
    if (workers < 1) throw InvalidField("workers", "must be >= 1");
    if (plan.views.empty()) throw InvalidField("views", "must not be empty");
    if (plan.scene_ids.empty()) throw EmptyManifest("run plan selects no scenes");
    const PipelineConfig cfg = validate_config(plan.config);
    std::vector<const ManifestScene*> entries;
    for (const auto& id : plan.scene_ids) {
        const auto it = std::find_if(plan.manifest.scenes.begin(), plan.manifest.scenes.end(),
                                     [&](const auto& s) { return s.scene_id == id; });
        if (it == plan.manifest.scenes.end()) throw InvalidField("scene", "'" + id + "' is not in the manifest");
        entries.push_back(&*it);
    }
    std::vector<ViewSpec> views;
    for (const auto& v : plan.views) views.push_back(make_view(v.elevation_deg, v.azimuth_deg));

    OwnedServices owned(services, cfg);
    const fs::path cache_dir = resolve_cache_dir(cfg.cache_dir);
    std::vector<SceneOutcome> outcomes(entries.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    std::exception_ptr worker_error;

    const auto report_progress = [&](const std::string& message) {
        if (!services.progress) return;
        const std::lock_guard lock(progress_mutex);
        services.progress(message);
    };

    const auto work = [&] {
        try {
            const auto backbone = backbone_factory();
            for (std::size_t i = next++; i < entries.size(); i = next++) {
                const ManifestScene& entry = *entries[i];
                SceneOutcome& outcome = outcomes[i];
                outcome.failure.scene_id = entry.scene_id;
                std::optional<Scene> scene;
                try {
                    scene = load_scene(entry, owned.captioner);
                } catch (const std::exception& e) {
                    for (const auto& v : views) outcome.failure.views.emplace_back(v, e.what());
                    report_progress(entry.scene_id + ": failed: " + e.what());
                    continue;
                }
                for (const auto& v : views) {
                    try {
                        const auto run = run_pipeline(*backbone, nvs, *scene, v, cfg, cache_dir, plan.out_dir,
                                                      job_seed(cfg.seed, entry.scene_id, v));
                        outcome.metrics.push_back(
                            {entry.scene_id, v, evaluate_metrics(*scene, run.result, *owned.space, *owned.net)});
                        report_progress(entry.scene_id + " " + view_label(v) + (run.reused ? ": reused" : ": done"));
                    } catch (const std::exception& e) {
                        outcome.failure.views.emplace_back(v, e.what());
                        report_progress(entry.scene_id + " " + view_label(v) + ": failed: " + e.what());
                    }
                }
            }
        } catch (...) {
            const std::lock_guard lock(progress_mutex);
            if (!worker_error) worker_error = std::current_exception();
        }
    };

    const int n_threads = std::min<int>(workers, static_cast<int>(entries.size()));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (worker_error) std::rethrow_exception(worker_error);

    MetricReport report = assemble(outcomes, cfg, owned, plan.dataset_name);
    if (report.per_scene.empty()) {
        std::string first = "no diagnostics";
        if (!report.failures.empty() && !report.failures.front().views.empty()) {
            first = report.failures.front().scene_id + ": " + report.failures.front().views.front().second;
        }
        throw AllScenesFailed("all " + std::to_string(entries.size()) + " scenes failed (first: " + first + ")");
    }
    return report;
}

void emit_report(const MetricReport& report, const fs::path& out_dir) {
    if (report.per_scene.empty() && report.failures.empty()) throw ValidationError("refusing to emit an empty report");
    try {
        fs::create_directories(out_dir);
    } catch (const fs::filesystem_error& e) {
        throw IoError(std::string("cannot create report directory: ") + e.what());
    }
    write_file_atomic(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_file_atomic(out_dir / "report.csv", report_to_csv(report));
}

namespace {

std::optional<ViewSpec> parse_label(const std::string& label) {
    const auto pos = label.find('_');
    if (pos == std::string::npos || label.find('_', pos + 1) != std::string::npos) return std::nullopt;
    try {
        const auto views = parse_view_list(label.substr(0, pos) + "," + label.substr(pos + 1));
        if (views.size() != 1) return std::nullopt;
        return views.front();
    } catch (const Error&) {
        return std::nullopt;
    }
}

struct GeneratedItem {
    ViewSpec view;
    fs::path image;
    std::optional<std::string> target_prompt;
};

std::vector<GeneratedItem> scan_generations(const fs::path& scene_dir, const std::vector<ViewSpec>& default_views) {
    std::vector<GeneratedItem> items;
    for (const auto& sub : fs::directory_iterator(scene_dir)) {
        if (!sub.is_directory() || hidden(sub.path())) continue;
        const auto view = parse_label(sub.path().filename().string());
        if (!view || !fs::is_regular_file(sub.path() / "generated.png")) continue;
        GeneratedItem item{*view, sub.path() / "generated.png", std::nullopt};
        if (fs::is_regular_file(sub.path() / "meta.json")) {
            try {
                const auto meta = nlohmann::json::parse(read_text_file(sub.path() / "meta.json"));
                if (meta.contains("target_prompt")) item.target_prompt = meta["target_prompt"].get<std::string>();
            } catch (const std::exception&) {
            }
        }
        items.push_back(std::move(item));
    }
    if (items.empty()) {
        if (const auto image = find_input_image(scene_dir)) {
            for (const auto& v : default_views) items.push_back({v, *image, std::nullopt});
        }
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        return std::pair(a.view.elevation_deg, a.view.azimuth_deg) < std::pair(b.view.elevation_deg, b.view.azimuth_deg);
    });
    return items;
}

}  // namespace

MetricReport evaluate_trees(const fs::path& inputs, const fs::path& generations, const PipelineConfig& config,
                            const BatchServices& services) {
    const PipelineConfig cfg = validate_config(config);
    const DatasetManifest manifest = load_manifest(inputs);
    if (!fs::is_directory(generations)) {
        throw ValidationError("generations root '" + generations.string() + "' is not a directory");
    }
    const bool self = fs::equivalent(inputs, generations);

    std::map<std::string, std::vector<GeneratedItem>> generated;
    if (self) {
        for (const auto& s : manifest.scenes) {
            for (const auto& v : cfg.views) generated[s.scene_id].push_back({v, s.image_path, std::nullopt});
        }
    } else {
        for (const auto& item : fs::directory_iterator(generations)) {
            if (!item.is_directory() || hidden(item.path())) continue;
            auto found = scan_generations(item.path(), cfg.views);
            if (!found.empty()) generated[item.path().filename().string()] = std::move(found);
        }
    }

    std::vector<std::string> orphans;
    std::set<std::string> input_ids;
    for (const auto& s : manifest.scenes) {
        input_ids.insert(s.scene_id);
        if (!generated.contains(s.scene_id)) orphans.push_back(s.scene_id + " (no generations)");
    }
    for (const auto& [id, items] : generated) {
        if (!input_ids.contains(id)) orphans.push_back(id + " (no input)");
    }
    if (!orphans.empty()) {
        std::string list;
        for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
        throw UnpairedScenes("unpaired scenes: " + list);
    }

    OwnedServices owned(services, cfg);
    std::vector<SceneOutcome> outcomes;
    for (const auto& entry : manifest.scenes) {
        const Scene scene = load_scene(entry, owned.captioner);
        SceneOutcome outcome;
        outcome.failure.scene_id = entry.scene_id;
        for (const auto& item : generated.at(entry.scene_id)) {
            GenerationResult result;
            result.image = load_image(item.image);
            result.view = item.view;
            result.target_prompt =
                item.target_prompt ? *item.target_prompt : build_target_prompt(item.view, scene.caption).target_text;
            outcome.metrics.push_back({entry.scene_id, item.view, evaluate_metrics(scene, result, *owned.space, *owned.net)});
        }
        outcomes.push_back(std::move(outcome));
    }
    return assemble(outcomes, cfg, owned, inputs.filename().string().empty() ? "dataset" : inputs.filename().string());
}

}  // namespace viewsynth
