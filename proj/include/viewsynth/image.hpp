#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace viewsynth {

/// Row-major interleaved raster with double samples, nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels = 3, double fill = 0.0);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
    double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

    std::span<double> data() noexcept { return pixels_; }
    std::span<const double> data() const noexcept { return pixels_; }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> pixels_;
};

/// Loads PNG or JPEG as RGB in [0, 1]. Throws MissingImage / IoError.
Image load_image(const std::filesystem::path& path);

std::vector<unsigned char> encode_png(const Image& image);
Image decode_image(std::span<const unsigned char> bytes);

/// Writes PNG atomically (temp file + rename).
void save_png(const Image& image, const std::filesystem::path& path);

/// Rounds every sample to the nearest of 256 levels, as a PNG round trip would.
Image quantize_8bit(const Image& image);

/// 8-bit samples, row-major interleaved. Used for content hashing.
std::vector<std::uint8_t> to_bytes_8bit(const Image& image);

/// Bicubic resampling; output is clamped to [0, 1].
Image resize_bicubic(const Image& image, int height, int width);

/// Area-average downsampling, for feature extraction.
Image resize_area(const Image& image, int height, int width);

/// ITU-R 601 luma (0.299, 0.587, 0.114); single-channel output.
Image to_grayscale(const Image& image);

Image clamp01(Image image);

/// Writes bytes to `path` via a unique temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace viewsynth
