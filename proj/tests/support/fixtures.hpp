#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "viewsynth/config.hpp"
#include "viewsynth/core.hpp"
#include "viewsynth/image.hpp"
#include "viewsynth/nvs_guidance.hpp"
#include "viewsynth/rng.hpp"

namespace viewsynth::testing {

/// Smooth colour pattern; `variant` shifts phases so scenes differ.
inline Image pattern_image(int size, int variant = 0) {
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double u = static_cast<double>(x) / size;
            const double v = static_cast<double>(y) / size;
            img.at(y, x, 0) = 0.5 + 0.4 * std::sin(6.0 * u + variant);
            img.at(y, x, 1) = 0.5 + 0.4 * std::cos(5.0 * v - 0.7 * variant);
            img.at(y, x, 2) = 0.5 + 0.3 * std::sin(4.0 * (u + v) + 1.3 * variant);
        }
    }
    return quantize_8bit(img);
}

inline Image noise_image(int h, int w, int channels, std::uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, channels);
    for (double& v : img.data()) v = rng.uniform();
    return img;
}

inline Scene toy_scene(int size = 64, int variant = 0) {
    return make_scene(pattern_image(size, variant), "An ancient Egyptian pyramid in the desert.",
                      "scene" + std::to_string(variant));
}

/// The fixed-seed toy problem shared by regression fixtures.
inline PipelineConfig toy_config() {
    PipelineConfig cfg;
    cfg.seed = 7;
    cfg.image_size = 64;
    cfg.embed_opt_steps_input = 1000;
    cfg.lora_steps_input = 1000;
    cfg.embed_opt_steps_view = 1000;
    cfg.lora_steps_view = 1000;
    cfg.embed_lr = 5e-3;
    cfg.lora_lr = 5e-3;
    cfg.cfg_scale = 3.0;
    cfg.sampler_steps = 50;
    return validate_config(cfg);
}

/// Guidance view of the toy scene at (30, 270), resized to the working size.
inline Image toy_guidance(const Scene& scene, int size) {
    const MockNvsBackend nvs;
    return resize_bicubic(nvs.synthesize(scene.image, ViewSpec{30.0, 270.0}), size, size);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto base = std::filesystem::temp_directory_path();
        Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
        do {
            path_ = base / ("viewsynth-" + tag + "-" + std::to_string(rng.next_u64() % 1000000000ULL));
        } while (std::filesystem::exists(path_));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

/// Writes `<root>/<id>/input.png` (+ caption.txt when non-empty).
inline void write_scene_dir(const std::filesystem::path& root, const std::string& id, const Image& image,
                            const std::string& caption) {
    std::filesystem::create_directories(root / id);
    save_png(image, root / id / "input.png");
    if (!caption.empty()) write_file_atomic(root / id / "caption.txt", caption + "\n");
}

}  // namespace viewsynth::testing
