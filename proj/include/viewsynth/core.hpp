#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "viewsynth/image.hpp"

namespace viewsynth {

/// Camera target. Canonical order everywhere in this library is
/// (elevation, azimuth), in degrees.
struct ViewSpec {
    double elevation_deg = 0.0;
    double azimuth_deg = 0.0;

    friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

/// Wraps any finite angle into [0, 360).
double normalize_azimuth(double degrees);

/// Validated constructor: elevation in [-90, 90], azimuth wrapped.
ViewSpec make_view(double elevation_deg, double azimuth_deg);

/// Shortest representation of an angle: "30", "-20", "12.5".
std::string format_angle(double degrees);

/// Directory / file label, e.g. "-20_210".
std::string view_label(const ViewSpec& view);

/// Parses `elev,azi` pairs separated by `;`, e.g. "30,30;-20,210".
std::vector<ViewSpec> parse_view_list(std::string_view text);
std::string format_view_list(const std::vector<ViewSpec>& views);

/// The four evaluation viewpoints as (elevation, azimuth).
std::vector<ViewSpec> evaluation_views();

struct Scene {
    Image image;
    std::string caption;
    std::string scene_id;
};

/// Checks the Scene invariants (RGB, both sides >= 64, non-blank caption)
/// and returns the scene with its caption trimmed.
Scene make_scene(Image image, std::string caption, std::string scene_id);

struct GenerationResult {
    Image image;
    ViewSpec view;
    std::string target_prompt;
    std::uint64_t seed = 0;
    std::map<std::string, double> timings;
};

std::string trim(std::string_view text);

}  // namespace viewsynth
