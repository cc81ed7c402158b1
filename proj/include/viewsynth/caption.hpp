#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "viewsynth/core.hpp"

namespace viewsynth {

struct PromptSpec {
    std::string source_text;
    std::string target_text;
    std::string view_prefix;
    ViewSpec view;
};

/// External image-captioning client: PNG bytes in, one UTF-8 sentence out.
class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const std::vector<unsigned char>& png) = 0;
};

/// Returns the same sentence for every image.
class FixedCaptioner final : public Captioner {
public:
    explicit FixedCaptioner(std::string text) : text_(std::move(text)) {}
    std::string caption(const std::vector<unsigned char>&) override { return text_; }

private:
    std::string text_;
};

/// POSTs the PNG to `<base_url>/caption` (Content-Type image/png) and reads
/// the plain-text body. Failed attempts are retried `retries` times; calls
/// through one instance are serialized.
class HttpCaptioner final : public Captioner {
public:
    HttpCaptioner(std::string base_url, double timeout_s, int retries);
    std::string caption(const std::vector<unsigned char>& png) override;

private:
    std::string base_url_;
    double timeout_s_;
    int retries_;
    std::mutex mutex_;
};

/// Builds the captioner named by a config value: "none" (null), "mock", or an
/// http(s) URL.
std::unique_ptr<Captioner> make_captioner(const std::string& spec, double timeout_s, int retries);

/// The provided text (trimmed) when present, else the captioner's output.
/// Throws CaptionerUnavailable when neither exists, EmptyCaption when the
/// result is blank.
std::string acquire_caption(const Image& scene_image, const std::optional<std::string>& provided, Captioner* captioner);

/// "View from an elevated angle of {+|-}E degrees and an azimuth angle of +A degrees".
std::string build_view_prefix(const ViewSpec& view);

/// prefix + ", " + source_text. Throws EmptyCaption on blank source text.
PromptSpec build_target_prompt(const ViewSpec& view, const std::string& source_text);

}  // namespace viewsynth
