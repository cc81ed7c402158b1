#include "viewsynth/cli.hpp"

#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "viewsynth/errors.hpp"
#include "viewsynth/harness.hpp"

namespace viewsynth {

namespace fs = std::filesystem;

namespace {

std::string one_line(std::string text) {
    for (char& c : text) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return text;
}

struct Options {
    std::string config_path;
    std::map<std::string, std::string> overrides;
    int workers = 1;
    std::string out = "out";

    // generate
    std::string image;
    std::optional<std::string> caption;
    double elevation = 0.0;
    double azimuth = 0.0;

    // batch
    std::string dataset;
    bool all = false;

    // evaluate
    std::string inputs;
    std::string generations;
    std::string report_dir;

    // cache
    std::string cache_action;
};

PipelineConfig resolve_config(const Options& o) {
    PipelineConfig cfg;
    if (!o.config_path.empty()) cfg = load_config_file(o.config_path, cfg);
    for (const auto& [key, value] : o.overrides) set_config_value(cfg, key, value);
    return validate_config(cfg);
}

std::string scene_id_for(const fs::path& image) {
    const std::string stem = image.stem().string();
    if (stem == "input" && image.has_parent_path() && !image.parent_path().filename().empty()) {
        return image.parent_path().filename().string();
    }
    return stem;
}

int cmd_generate(const Options& o, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(o);
    const ViewSpec view = make_view(o.elevation, o.azimuth);
    ManifestScene entry{scene_id_for(o.image), o.image, o.caption};
    if (!entry.caption && fs::is_regular_file(fs::path(o.image).parent_path() / "caption.txt")) {
        entry.caption = read_text_file(fs::path(o.image).parent_path() / "caption.txt");
    }
    const auto captioner = make_captioner(cfg.captioner, cfg.captioner_timeout_s, cfg.captioner_retries);
    const Scene scene = load_scene(entry, captioner.get());
    const auto nvs = make_nvs_backend(cfg.nvs);
    const auto backbone = make_backbone_factory(cfg.backbone)();
    const auto run = run_pipeline(*backbone, *nvs, scene, view, cfg, resolve_cache_dir(cfg.cache_dir), o.out,
                                  job_seed(cfg.seed, scene.scene_id, view));
    out << (run_directory(o.out, scene.scene_id, view) / "generated.png").string()
        << (run.reused ? " (reused)" : "") << "\n";
    out << "prompt: " << run.result.target_prompt << "\n";
    return kExitOk;
}

int cmd_batch(const Options& o, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(o);
    RunPlan plan;
    plan.manifest = load_manifest(o.dataset);
    plan.scene_ids = o.all ? split_complement(plan.manifest, {}) : validation_split(plan.manifest, cfg.val_fraction, cfg.split_seed);
    plan.views = cfg.views;
    plan.config = cfg;
    plan.out_dir = o.out;
    const std::string name = fs::weakly_canonical(o.dataset).filename().string();
    plan.dataset_name = name.empty() ? "dataset" : name;
    const auto nvs = make_nvs_backend(cfg.nvs);
    BatchServices services;
    services.progress = [&out](const std::string& line) { out << line << "\n" << std::flush; };
    const MetricReport report = run_batch(plan, make_backbone_factory(cfg.backbone), *nvs, o.workers, services);
    emit_report(report, o.out);
    out << "scenes: " << plan.scene_ids.size() << ", generations: " << report.per_scene.size()
        << ", failed scenes: " << report.failures.size() << "\n";
    out << "report: " << (fs::path(o.out) / "report.csv").string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(o);
    MetricReport report = evaluate_trees(o.inputs, o.generations, cfg);
    const fs::path dest = o.report_dir.empty() ? fs::path(o.generations) : fs::path(o.report_dir);
    emit_report(report, dest);
    out << report_to_csv(report);
    return kExitOk;
}

int cmd_cache(const Options& o, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(o);
    const fs::path dir = resolve_cache_dir(cfg.cache_dir);
    if (o.cache_action == "path") {
        out << dir.string() << "\n";
    } else if (o.cache_action == "list") {
        for (const auto& e : list_cache(dir)) {
            out << e.backend_name << "\t" << e.scene_hash << "\t" << e.png.filename().string() << "\t" << e.bytes
                << "\n";
        }
    } else if (o.cache_action == "clear") {
        out << "removed " << clear_cache(dir) << " cached views from " << dir.string() << "\n";
    } else {
        throw ValidationError("cache action must be list, clear or path");
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Camera-controlled image generation from a single image."};
    app.name("viewsynth");
    app.require_subcommand(1);
    app.fallthrough();
    Options o;

    app.add_option("--config", o.config_path, "config file of `key = value` lines")->check(CLI::ExistingFile);
    app.add_option("--workers", o.workers, "parallel scenes in batch mode")->capture_default_str();
    const PipelineConfig defaults;
    for (const auto& key : config_keys()) {
        app.add_option_function<std::string>(
               "--" + key.name, [&o, name = key.name](const std::string& v) { o.overrides[name] = v; }, key.help)
            ->default_str(key.get(defaults))
            ->group("Pipeline configuration");
    }

    auto* generate = app.add_subcommand("generate", "run one scene at one view");
    generate->add_option("--image", o.image, "input image (PNG or JPEG)")->required();
    generate->add_option("--caption", o.caption, "source caption (else caption.txt beside the image, else captioner)");
    generate->add_option("--elevation", o.elevation, "target elevation in degrees, [-90, 90]")->required();
    generate->add_option("--azimuth", o.azimuth, "target azimuth in degrees")->required();
    generate->add_option("--out", o.out, "output directory")->capture_default_str();

    auto* batch = app.add_subcommand("batch", "run a dataset over the configured views and write a report");
    batch->add_option("dataset", o.dataset, "dataset root")->required();
    batch->add_flag("--all", o.all, "run every scene instead of the validation split");
    batch->add_option("--out", o.out, "output directory")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "score existing generations against their inputs");
    evaluate->add_option("inputs", o.inputs, "dataset root with the input scenes")->required();
    evaluate->add_option("generations", o.generations, "tree of <scene>/<elev>_<azi>/generated.png")->required();
    evaluate->add_option("--out", o.report_dir, "report directory (default: the generations root)");

    auto* cache = app.add_subcommand("cache", "inspect or clear the guidance-view cache");
    cache->add_option("action", o.cache_action, "list | clear | path")
        ->required()
        ->check(CLI::IsMember({"list", "clear", "path"}));

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e, out, err);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e, out, err);
        } catch (const CLI::ParseError& e) {
            err << "error: " << one_line(e.what()) << "\n";
            return kExitValidation;
        }
        if (*generate) return cmd_generate(o, out);
        if (*batch) return cmd_batch(o, out);
        if (*evaluate) return cmd_evaluate(o, out);
        return cmd_cache(o, out);
    } catch (const ValidationError& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return kExitPipeline;
    }
}

}  // namespace viewsynth
