#include "viewsynth/nvs_guidance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "viewsynth/checksum.hpp"
#include "viewsynth/config.hpp"
#include "viewsynth/errors.hpp"

namespace viewsynth {

namespace fs = std::filesystem;

std::vector<ViewSpec> default_supported_views() {
    return {{30.0, 30.0}, {-20.0, 90.0}, {30.0, 150.0}, {-20.0, 210.0}, {30.0, 270.0}, {-20.0, 330.0}};
}

namespace {

double sample_bilinear(const Image& img, double y, double x, int c) {
    y = std::clamp(y, 0.0, img.height() - 1.0);
    x = std::clamp(x, 0.0, img.width() - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const double fy = y - y0;
    const double fx = x - x0;
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
           fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
}

}  // namespace

Image MockNvsBackend::synthesize(const Image& input, const ViewSpec& view) const {
    constexpr int kSide = 320;
    constexpr double kBlend = 0.2;
    double mean[3] = {0, 0, 0};
    for (int y = 0; y < input.height(); ++y) {
        for (int x = 0; x < input.width(); ++x) {
            for (int c = 0; c < 3; ++c) mean[c] += input.at(y, x, c);
        }
    }
    const double count = static_cast<double>(input.height()) * input.width();
    for (double& m : mean) m /= count;

    Image out(kSide, kSide, 3);
    const double roll = view.azimuth_deg / 360.0;
    const double lift = view.elevation_deg / 180.0;
    for (int y = 0; y < kSide; ++y) {
        const double v = (y + 0.5) / kSide;
        const double src_y = (v - lift) * input.height() - 0.5;
        for (int x = 0; x < kSide; ++x) {
            double u = (x + 0.5) / kSide + roll;
            u -= std::floor(u);
            const double src_x = u * input.width() - 0.5;
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = (1.0 - kBlend) * sample_bilinear(input, src_y, src_x, c) + kBlend * mean[c];
            }
        }
    }
    return out;
}

HttpNvsBackend::HttpNvsBackend(std::string base_url, double timeout_s, std::string name)
    : base_url_(std::move(base_url)), timeout_s_(timeout_s), name_(std::move(name)) {}

Image HttpNvsBackend::synthesize(const Image& input, const ViewSpec& view) const {
    httplib::Client client(base_url_);
    const auto seconds = static_cast<time_t>(timeout_s_);
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    client.set_write_timeout(seconds);
    const auto png = encode_png(input);
    const std::string path = "/synthesize?elevation=" + format_angle(view.elevation_deg) +
                             "&azimuth=" + format_angle(view.azimuth_deg);
    const auto res = client.Post(path, std::string(png.begin(), png.end()), "image/png");
    if (!res) throw BackendFailure("guidance server unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendFailure("guidance server answered HTTP " + std::to_string(res->status));
    const auto& body = res->body;
    return decode_image(std::span(reinterpret_cast<const unsigned char*>(body.data()), body.size()));
}

std::unique_ptr<NvsBackend> make_nvs_backend(const std::string& spec) {
    if (spec == "mock") return std::make_unique<MockNvsBackend>();
    if (spec.starts_with("http://") || spec.starts_with("https://")) return std::make_unique<HttpNvsBackend>(spec);
    throw InvalidField("nvs", "expected mock or an http URL, got '" + spec + "'");
}

double angular_distance(const ViewSpec& a, const ViewSpec& b) {
    const double d_elev = a.elevation_deg - b.elevation_deg;
    const double raw = std::fabs(normalize_azimuth(a.azimuth_deg) - normalize_azimuth(b.azimuth_deg));
    const double d_azi = std::min(raw, 360.0 - raw);
    return std::sqrt(d_elev * d_elev + d_azi * d_azi);
}

ViewSpec snap_view(const ViewSpec& requested, const std::vector<ViewSpec>& supported) {
    if (supported.empty()) throw InvalidField("supported_views", "must not be empty");
    std::size_t best = 0;
    double best_d = angular_distance(requested, supported[0]);
    for (std::size_t i = 1; i < supported.size(); ++i) {
        const double d = angular_distance(requested, supported[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return supported[best];
}

std::string scene_content_hash(const Image& image) {
    std::string header = std::to_string(image.height()) + "x" + std::to_string(image.width()) + "x" +
                         std::to_string(image.channels()) + ":";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    const auto pixels = to_bytes_8bit(image);
    bytes.insert(bytes.end(), pixels.begin(), pixels.end());
    return sha256_hex(std::span<const unsigned char>(bytes));
}

std::string guidance_cache_key(const std::string& scene_hash, const ViewSpec& realized, const std::string& backend_name) {
    return sha256_hex(backend_name + "\n" + scene_hash + "\n" + view_label(realized));
}

namespace {

std::string safe_component(const std::string& name) {
    std::string out;
    for (const char c : name) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out.empty() || out == "." || out == ".." ? "_" : out;
}

}  // namespace

fs::path guidance_cache_path(const fs::path& cache_dir, const std::string& backend_name, const std::string& scene_hash,
                             const ViewSpec& realized) {
    return cache_dir / safe_component(backend_name) / scene_hash / (view_label(realized) + ".png");
}

GuidanceImage synthesize_guidance(const Scene& scene, const ViewSpec& view, const NvsBackend& backend,
                                  const fs::path& cache_dir, bool snap) {
    const auto supported = backend.supported_views();
    const ViewSpec requested = make_view(view.elevation_deg, view.azimuth_deg);
    ViewSpec realized = requested;
    if (snap) {
        realized = snap_view(requested, supported);
    } else if (std::find(supported.begin(), supported.end(), requested) == supported.end()) {
        throw UnsupportedView("view (" + format_angle(requested.elevation_deg) + ", " +
                              format_angle(requested.azimuth_deg) + ") is not produced by backend '" +
                              backend.name() + "'");
    }

    const std::string scene_hash = scene_content_hash(scene.image);
    GuidanceImage out;
    out.requested_view = requested;
    out.realized_view = realized;
    out.backend_name = backend.name();
    out.cache_key = guidance_cache_key(scene_hash, realized, backend.name());

    const fs::path png = guidance_cache_path(cache_dir, backend.name(), scene_hash, realized);
    if (fs::is_regular_file(png)) {
        out.image = load_image(png);
        out.cache_hit = true;
        return out;
    }

    Image generated;
    try {
        generated = backend.synthesize(scene.image, realized);
    } catch (const std::exception& e) {
        throw BackendFailure("guidance backend '" + backend.name() + "' failed: " + e.what());
    }
    if (generated.channels() != 3 || generated.empty()) {
        throw BackendFailure("guidance backend '" + backend.name() + "' returned a malformed image");
    }

    const auto bytes = encode_png(generated);
    const nlohmann::json meta{{"backend", backend.name()},
                              {"backend_version", backend.version()},
                              {"scene_hash", scene_hash},
                              {"cache_key", out.cache_key},
                              {"requested_view", {requested.elevation_deg, requested.azimuth_deg}},
                              {"realized_view", {realized.elevation_deg, realized.azimuth_deg}}};
    fs::path sidecar = png;
    sidecar.replace_extension(".json");
    write_file_atomic(sidecar, meta.dump(2) + "\n");
    write_file_atomic(png, bytes);
    out.image = decode_image(bytes);
    return out;
}

Image resize_guidance(const GuidanceImage& guidance, int image_size) {
    return resize_bicubic(guidance.image, image_size, image_size);
}

std::vector<CacheEntry> list_cache(const fs::path& cache_dir) {
    std::vector<CacheEntry> entries;
    if (!fs::is_directory(cache_dir)) return entries;
    for (const auto& item : fs::recursive_directory_iterator(cache_dir)) {
        if (!item.is_regular_file() || item.path().extension() != ".png") continue;
        const fs::path rel = fs::relative(item.path(), cache_dir);
        auto it = rel.begin();
        CacheEntry e;
        e.png = item.path();
        e.backend_name = it != rel.end() ? (it++)->string() : "";
        e.scene_hash = it != rel.end() ? it->string() : "";
        e.bytes = item.file_size();
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.png < b.png; });
    return entries;
}

std::size_t clear_cache(const fs::path& cache_dir) {
    const std::size_t removed = list_cache(cache_dir).size();
    if (!fs::is_directory(cache_dir)) return 0;
    for (const auto& item : fs::directory_iterator(cache_dir)) fs::remove_all(item.path());
    return removed;
}

fs::path resolve_cache_dir(const std::string& configured) {
    if (!configured.empty()) return configured;
    if (const char* env = std::getenv("VIEWSYNTH_CACHE_DIR"); env != nullptr && *env != '\0') return env;
    if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg != nullptr && *xdg != '\0') return fs::path(xdg) / "viewsynth";
    if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
        return fs::path(home) / ".cache" / "viewsynth";
    }
    return ".viewsynth-cache";
}

}  // namespace viewsynth
