#include "viewsynth/core.hpp"

#include <charconv>
#include <cmath>

#include "viewsynth/errors.hpp"

namespace viewsynth {

double normalize_azimuth(double degrees) {
    if (!std::isfinite(degrees)) throw InvalidField("azimuth", "must be finite");
    double wrapped = std::fmod(degrees, 360.0);
    if (wrapped < 0.0) wrapped += 360.0;
    // fmod of a tiny negative value can round back up to exactly 360.
    if (wrapped >= 360.0) wrapped = 0.0;
    return wrapped == 0.0 ? 0.0 : wrapped;
}

ViewSpec make_view(double elevation_deg, double azimuth_deg) {
    if (!std::isfinite(elevation_deg) || elevation_deg < -90.0 || elevation_deg > 90.0) {
        throw InvalidField("elevation", "must lie in [-90, 90] degrees, got " + format_angle(elevation_deg));
    }
    return ViewSpec{elevation_deg, normalize_azimuth(azimuth_deg)};
}

std::string format_angle(double degrees) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), degrees == 0.0 ? 0.0 : degrees);
    return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

std::string view_label(const ViewSpec& view) {
    return format_angle(view.elevation_deg) + "_" + format_angle(view.azimuth_deg);
}

std::string trim(std::string_view text) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    return std::string(text.substr(begin, end - begin));
}

namespace {

double parse_double(std::string_view token, const std::string& field) {
    const std::string t = trim(token);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw InvalidField(field, "expected a number, got '" + t + "'");
    }
    return value;
}

}  // namespace

std::vector<ViewSpec> parse_view_list(std::string_view text) {
    std::vector<ViewSpec> views;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = std::min(text.find(';', pos), text.size());
        const std::string item = trim(text.substr(pos, next - pos));
        if (!item.empty()) {
            const auto comma = item.find(',');
            if (comma == std::string::npos) {
                throw InvalidField("views", "expected 'elev,azi' pairs separated by ';', got '" + item + "'");
            }
            const double elev = parse_double(std::string_view(item).substr(0, comma), "views");
            const double azi = parse_double(std::string_view(item).substr(comma + 1), "views");
            views.push_back(make_view(elev, azi));
        }
        pos = next + 1;
    }
    if (views.empty()) throw InvalidField("views", "at least one view is required");
    return views;
}

std::string format_view_list(const std::vector<ViewSpec>& views) {
    std::string out;
    for (const auto& v : views) {
        if (!out.empty()) out += ';';
        out += format_angle(v.elevation_deg) + "," + format_angle(v.azimuth_deg);
    }
    return out;
}

std::vector<ViewSpec> evaluation_views() {
    return {{30.0, 30.0}, {-20.0, 210.0}, {30.0, 270.0}, {-20.0, 330.0}};
}

Scene make_scene(Image image, std::string caption, std::string scene_id) {
    if (image.channels() != 3) throw InvalidField("scene.image", "must have 3 channels");
    if (image.height() < 64 || image.width() < 64) {
        throw InvalidField("scene.image", "both spatial dimensions must be >= 64");
    }
    std::string trimmed = trim(caption);
    if (trimmed.empty()) throw EmptyCaption("scene '" + scene_id + "' has an empty caption");
    return Scene{std::move(image), std::move(trimmed), std::move(scene_id)};
}

}  // namespace viewsynth
