#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "viewsynth/caption.hpp"
#include "viewsynth/cli.hpp"
#include "viewsynth/config.hpp"
#include "viewsynth/errors.hpp"
#include "viewsynth/harness.hpp"
#include "viewsynth/metrics.hpp"
#include "viewsynth/mutual_information.hpp"
#include "viewsynth/nvs_guidance.hpp"

namespace py = pybind11;
using namespace viewsynth;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
    const py::buffer_info info = a.request();
    if (info.ndim != 2 && info.ndim != 3) throw py::value_error("expected an (H, W) or (H, W, C) array");
    const int h = static_cast<int>(info.shape[0]);
    const int w = static_cast<int>(info.shape[1]);
    const int c = info.ndim == 3 ? static_cast<int>(info.shape[2]) : 1;
    Image img(h, w, c);
    const auto* src = static_cast<const double*>(info.ptr);
    std::copy(src, src + img.size(), img.data().begin());
    return img;
}

Array to_array(const Image& img) {
    Array out({img.height(), img.width(), img.channels()});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

PipelineConfig config_from(const std::map<std::string, std::string>& overrides) {
    PipelineConfig cfg;
    for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
    return validate_config(cfg);
}

std::map<std::string, std::string> config_to_dict(const PipelineConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& key : config_keys()) out[key.name] = key.get(cfg);
    return out;
}

py::dict metrics_dict(const MetricValues& m) {
    py::dict d;
    d["LPIPS"] = m.lpips;
    d["CLIP"] = m.clip;
    d["View-CLIP"] = m.view_clip;
    d["CLIPD"] = m.clip_d;
    d["View-CLIPD"] = m.view_clip_d;
    d["CLIP-I"] = m.clip_i;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Camera-controlled image generation from a single image (C++ core).";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());

    py::class_<ViewSpec>(m, "ViewSpec")
        .def(py::init(&make_view), py::arg("elevation"), py::arg("azimuth"))
        .def_readonly("elevation", &ViewSpec::elevation_deg)
        .def_readonly("azimuth", &ViewSpec::azimuth_deg)
        .def("label", &view_label)
        .def("__eq__", [](const ViewSpec& a, const ViewSpec& b) { return a == b; })
        .def("__hash__", [](const ViewSpec& v) { return std::hash<std::string>{}(view_label(v)); })
        .def("__repr__", [](const ViewSpec& v) {
            return "ViewSpec(" + format_angle(v.elevation_deg) + ", " + format_angle(v.azimuth_deg) + ")";
        });

    m.def("evaluation_views", &evaluation_views, "The four evaluation viewpoints.");
    m.def("default_supported_views", &default_supported_views, "Grid of the default guidance model.");
    m.def("parse_view_list", [](const std::string& s) { return parse_view_list(s); }, py::arg("text"));
    m.def("snap_view", &snap_view, py::arg("requested"), py::arg("supported") = default_supported_views());
    m.def("angular_distance", &angular_distance, py::arg("a"), py::arg("b"));

    m.def("build_view_prefix", &build_view_prefix, py::arg("view"));
    m.def("build_target_prompt", [](const ViewSpec& view, const std::string& source) {
        return build_target_prompt(view, source).target_text;
    }, py::arg("view"), py::arg("source_text"));

    m.def("config_defaults", [] { return config_to_dict(PipelineConfig{}); },
          "Every configuration key with its default value as text.");
    m.def("resolve_config", [](const std::map<std::string, std::string>& overrides) {
        return config_to_dict(config_from(overrides));
    }, py::arg("overrides") = std::map<std::string, std::string>{},
       "Applies overrides to the defaults, validates, and returns the normalized values.");
    m.def("config_hash", [](const std::map<std::string, std::string>& overrides) {
        return config_hash(config_from(overrides));
    }, py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("soft_histogram", [](const Array& img, int bins, double bandwidth) {
        return soft_histogram(to_image(img), bins, bandwidth);
    }, py::arg("image"), py::arg("bins") = 32, py::arg("bandwidth") = 0.02);
    m.def("mutual_information", [](const Array& a, const Array& b, int bins, double bandwidth) {
        return mutual_information(to_image(a), to_image(b), {bins, bandwidth});
    }, py::arg("a"), py::arg("b"), py::arg("bins") = 32, py::arg("bandwidth") = 0.02,
       "Soft-histogram mutual information of the two images' luma, in nats.");

    m.def("lpips_distance", [](const Array& a, const Array& b) {
        return lpips_distance(to_image(a), to_image(b), FilterBankPerceptualNet{});
    }, py::arg("a"), py::arg("b"));
    m.def("evaluate_metrics", [](const Array& input, const std::string& caption, const Array& generated,
                                 const ViewSpec& view) {
        const Scene scene = make_scene(to_image(input), caption, "scene");
        GenerationResult result;
        result.image = to_image(generated);
        result.view = view;
        result.target_prompt = build_target_prompt(view, scene.caption).target_text;
        return metrics_dict(evaluate_metrics(scene, result, FeatureEmbeddingSpace{}, FilterBankPerceptualNet{}));
    }, py::arg("input"), py::arg("caption"), py::arg("generated"), py::arg("view"),
       "The six metrics with the built-in encoder and perceptual model.");

    m.def("generate", [](const Array& image, const std::string& caption, const ViewSpec& view,
                         const std::map<std::string, std::string>& overrides, const std::string& out_dir,
                         const std::string& scene_id) {
        const PipelineConfig cfg = config_from(overrides);
        const Scene scene = make_scene(to_image(image), caption, scene_id);
        PipelineOutcome run;
        {
            py::gil_scoped_release release;
            const auto backbone = make_backbone_factory(cfg.backbone)();
            const auto nvs = make_nvs_backend(cfg.nvs);
            run = run_pipeline(*backbone, *nvs, scene, view, cfg, resolve_cache_dir(cfg.cache_dir), out_dir,
                               job_seed(cfg.seed, scene.scene_id, view));
        }
        py::dict d;
        d["image"] = to_array(run.result.image);
        d["target_prompt"] = run.result.target_prompt;
        d["realized_view"] = run.realized_view;
        d["reused"] = run.reused;
        d["timings"] = run.result.timings;
        return d;
    }, py::arg("image"), py::arg("caption"), py::arg("view"),
       py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("out_dir") = "",
       py::arg("scene_id") = "scene",
       "Guidance view, four-phase optimization and guided sampling for one scene and view.");

    m.def("load_manifest", [](const std::filesystem::path& root) {
        py::list scenes;
        for (const auto& s : load_manifest(root).scenes) {
            py::dict d;
            d["scene_id"] = s.scene_id;
            d["image_path"] = s.image_path;
            d["caption"] = s.caption ? py::cast(*s.caption) : py::none();
            scenes.append(d);
        }
        return scenes;
    }, py::arg("root"));
    m.def("validation_split", [](const std::vector<std::string>& ids, double fraction, std::uint64_t seed) {
        DatasetManifest manifest;
        for (const auto& id : ids) manifest.scenes.push_back({id, {}, std::nullopt});
        std::sort(manifest.scenes.begin(), manifest.scenes.end(),
                  [](const auto& a, const auto& b) { return a.scene_id < b.scene_id; });
        return validation_split(manifest, fraction, seed);
    }, py::arg("scene_ids"), py::arg("fraction") = 0.10, py::arg("seed") = 0);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"viewsynth"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
