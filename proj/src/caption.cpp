#include "viewsynth/caption.hpp"

#include <cmath>

#include <httplib.h>

#include "viewsynth/errors.hpp"

namespace viewsynth {

namespace {

void set_timeouts(httplib::Client& client, double timeout_s) {
    const auto seconds = static_cast<time_t>(timeout_s);
    const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, usec);
    client.set_read_timeout(seconds, usec);
    client.set_write_timeout(seconds, usec);
}

}  // namespace

HttpCaptioner::HttpCaptioner(std::string base_url, double timeout_s, int retries)
    : base_url_(std::move(base_url)), timeout_s_(timeout_s), retries_(retries) {}

std::string HttpCaptioner::caption(const std::vector<unsigned char>& png) {
    std::lock_guard lock(mutex_);
    httplib::Client client(base_url_);
    set_timeouts(client, timeout_s_);
    const std::string body(png.begin(), png.end());
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= retries_; ++attempt) {
        const auto res = client.Post("/caption", body, "image/png");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            return res->body;
        }
    }
    throw BackendFailure("captioner at " + base_url_ + " failed after " + std::to_string(retries_ + 1) +
                         " attempt(s): " + last_error);
}

std::unique_ptr<Captioner> make_captioner(const std::string& spec, double timeout_s, int retries) {
    if (spec.empty() || spec == "none") return nullptr;
    if (spec == "mock") return std::make_unique<FixedCaptioner>("A photo of a scene.");
    if (spec.starts_with("http://") || spec.starts_with("https://")) {
        return std::make_unique<HttpCaptioner>(spec, timeout_s, retries);
    }
    throw InvalidField("captioner", "expected none, mock or an http URL, got '" + spec + "'");
}

std::string acquire_caption(const Image& scene_image, const std::optional<std::string>& provided, Captioner* captioner) {
    if (provided.has_value()) {
        std::string text = trim(*provided);
        if (!text.empty()) return text;
        if (captioner == nullptr) throw EmptyCaption("provided caption is empty and no captioner is configured");
    }
    if (captioner == nullptr) throw CaptionerUnavailable("no caption provided and no captioner configured");
    std::string text = trim(captioner->caption(encode_png(scene_image)));
    if (text.empty()) throw EmptyCaption("captioner returned an empty caption");
    return text;
}

std::string build_view_prefix(const ViewSpec& view) {
    const long elevation = std::lround(view.elevation_deg);
    const long azimuth = std::lround(normalize_azimuth(view.azimuth_deg)) % 360;
    const char sign = elevation < 0 ? '-' : '+';
    return "View from an elevated angle of " + std::string(1, sign) + std::to_string(std::labs(elevation)) +
           " degrees and an azimuth angle of +" + std::to_string(azimuth) + " degrees";
}

PromptSpec build_target_prompt(const ViewSpec& view, const std::string& source_text) {
    if (trim(source_text).empty()) throw EmptyCaption("source caption is empty");
    PromptSpec spec;
    spec.source_text = source_text;
    spec.view_prefix = build_view_prefix(view);
    spec.target_text = spec.view_prefix + ", " + source_text;
    spec.view = view;
    return spec;
}

}  // namespace viewsynth
