#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "viewsynth/core.hpp"

namespace viewsynth {

/// A pretrained novel-view-synthesis model G(image, view) -> image.
/// Synchronous and stateless per call.
class NvsBackend {
public:
    virtual ~NvsBackend() = default;
    virtual std::string name() const = 0;
    virtual std::string version() const = 0;
    /// Non-empty, duplicate-free.
    virtual std::vector<ViewSpec> supported_views() const = 0;
    virtual Image synthesize(const Image& input, const ViewSpec& view) const = 0;
};

/// Six fixed views of a multi-view diffusion model: elevations alternating
/// +30 / -20 degrees at azimuths 30, 90, ..., 330.
std::vector<ViewSpec> default_supported_views();

/// Deterministic stand-in producing 320x320 views: the input is rolled
/// horizontally by the azimuth, shifted vertically by the elevation and
/// pulled toward its mean colour.
class MockNvsBackend final : public NvsBackend {
public:
    std::string name() const override { return "mock-nvs"; }
    std::string version() const override { return "mock-nvs/1"; }
    std::vector<ViewSpec> supported_views() const override { return default_supported_views(); }
    Image synthesize(const Image& input, const ViewSpec& view) const override;
};

/// Client for a guidance model served over HTTP:
/// POST `<base_url>/synthesize?elevation=E&azimuth=A` with a PNG body,
/// answered by a PNG of the predicted view.
class HttpNvsBackend final : public NvsBackend {
public:
    HttpNvsBackend(std::string base_url, double timeout_s = 600.0, std::string name = "http-nvs");
    std::string name() const override { return name_; }
    std::string version() const override { return "http:" + base_url_; }
    std::vector<ViewSpec> supported_views() const override { return default_supported_views(); }
    Image synthesize(const Image& input, const ViewSpec& view) const override;

private:
    std::string base_url_;
    double timeout_s_;
    std::string name_;
};

std::unique_ptr<NvsBackend> make_nvs_backend(const std::string& spec);

/// sqrt(d_elev^2 + wrap(d_azi)^2) with wrap(d) = min(|d|, 360 - |d|).
double angular_distance(const ViewSpec& a, const ViewSpec& b);

/// Nearest supported view; ties go to the earliest entry.
ViewSpec snap_view(const ViewSpec& requested, const std::vector<ViewSpec>& supported);

struct GuidanceImage {
    Image image;
    ViewSpec requested_view;
    ViewSpec realized_view;
    std::string backend_name;
    std::string cache_key;
    bool cache_hit = false;
};

/// SHA-256 over the image dimensions and its 8-bit samples.
std::string scene_content_hash(const Image& image);

std::string guidance_cache_key(const std::string& scene_hash, const ViewSpec& realized, const std::string& backend_name);

/// `<cache_dir>/<backend>/<scene_hash>/<elev>_<azi>.png`
std::filesystem::path guidance_cache_path(const std::filesystem::path& cache_dir, const std::string& backend_name,
                                          const std::string& scene_hash, const ViewSpec& realized);

/// Runs G on the scene at `view` (snapped to the backend's grid when `snap`),
/// or serves it from the on-disk cache. The returned image is always the
/// 8-bit content of the cached PNG, so hits and misses agree bit for bit.
/// Throws UnsupportedView (snap off, view not on the grid) or BackendFailure.
GuidanceImage synthesize_guidance(const Scene& scene, const ViewSpec& view, const NvsBackend& backend,
                                  const std::filesystem::path& cache_dir, bool snap);

/// Bicubic resize of the guidance view to the working resolution.
Image resize_guidance(const GuidanceImage& guidance, int image_size);

struct CacheEntry {
    std::filesystem::path png;
    std::string backend_name;
    std::string scene_hash;
    std::uintmax_t bytes = 0;
};

std::vector<CacheEntry> list_cache(const std::filesystem::path& cache_dir);
/// Removes every cached guidance view; returns how many PNGs were removed.
std::size_t clear_cache(const std::filesystem::path& cache_dir);

/// Cache directory from, in order: explicit value, VIEWSYNTH_CACHE_DIR,
/// `$XDG_CACHE_HOME/viewsynth`, `$HOME/.cache/viewsynth`, `.viewsynth-cache`.
std::filesystem::path resolve_cache_dir(const std::string& configured);

}  // namespace viewsynth
