#include "viewsynth/image.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "viewsynth/errors.hpp"

namespace viewsynth {

namespace fs = std::filesystem;

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels <= 0) {
        throw ShapeMismatch("image dimensions must be non-negative with at least one channel");
    }
    pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

namespace {

// OpenCV stores BGR; this library stores RGB.
cv::Mat to_mat_u8(const Image& image) {
    const int type = image.channels() == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat mat(image.height(), image.width(), type);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                const int dst = image.channels() == 3 ? 2 - c : c;
                const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
                row[x * image.channels() + dst] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return mat;
}

Image from_mat_u8(const cv::Mat& mat) {
    cv::Mat rgb;
    if (mat.channels() == 1) {
        cv::cvtColor(mat, rgb, cv::COLOR_GRAY2RGB);
    } else if (mat.channels() == 4) {
        cv::cvtColor(mat, rgb, cv::COLOR_BGRA2RGB);
    } else {
        cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB);
    }
    if (rgb.depth() != CV_8U) {
        rgb.convertTo(rgb, CV_8U, rgb.depth() == CV_16U ? 1.0 / 257.0 : 255.0);
    }
    Image image(rgb.rows, rgb.cols, 3);
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<std::uint8_t>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            for (int c = 0; c < 3; ++c) image.at(y, x, c) = row[x * 3 + c] / 255.0;
        }
    }
    return image;
}

cv::Mat to_mat_f64(const Image& image) {
    cv::Mat mat(image.height(), image.width(), CV_64FC(image.channels()));
    std::copy(image.data().begin(), image.data().end(), mat.ptr<double>(0));
    return mat;
}

Image from_mat_f64(const cv::Mat& mat, int channels) {
    Image image(mat.rows, mat.cols, channels);
    const cv::Mat contiguous = mat.isContinuous() ? mat : mat.clone();
    const auto* src = contiguous.ptr<double>(0);
    std::copy(src, src + image.size(), image.data().begin());
    return image;
}

}  // namespace

Image load_image(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw MissingImage("image not found: " + path.string());
    const cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot decode image: " + path.string());
    return from_mat_u8(mat);
}

std::vector<unsigned char> encode_png(const Image& image) {
    std::vector<unsigned char> bytes;
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imencode(".png", to_mat_u8(image), bytes, params)) throw IoError("PNG encoding failed");
    return bytes;
}

Image decode_image(std::span<const unsigned char> bytes) {
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<unsigned char*>(bytes.data()));
    const cv::Mat mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot decode image bytes");
    return from_mat_u8(mat);
}

void save_png(const Image& image, const fs::path& path) {
    write_file_atomic(path, encode_png(image));
}

Image quantize_8bit(const Image& image) {
    Image out = image;
    for (double& v : out.data()) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    return out;
}

std::vector<std::uint8_t> to_bytes_8bit(const Image& image) {
    std::vector<std::uint8_t> bytes(image.size());
    std::transform(image.data().begin(), image.data().end(), bytes.begin(), [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    return bytes;
}

Image resize_bicubic(const Image& image, int height, int width) {
    if (image.height() == height && image.width() == width) return image;
    cv::Mat out;
    cv::resize(to_mat_f64(image), out, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
    return clamp01(from_mat_f64(out, image.channels()));
}

Image resize_area(const Image& image, int height, int width) {
    if (image.height() == height && image.width() == width) return image;
    cv::Mat out;
    cv::resize(to_mat_f64(image), out, cv::Size(width, height), 0, 0, cv::INTER_AREA);
    return from_mat_f64(out, image.channels());
}

Image to_grayscale(const Image& image) {
    if (image.channels() == 1) return image;
    Image gray(image.height(), image.width(), 1);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            gray.at(y, x, 0) = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
        }
    }
    return gray;
}

Image clamp01(Image image) {
    for (double& v : image.data()) v = std::clamp(v, 0.0, 1.0);
    return image;
}

void write_file_atomic(const fs::path& path, std::span<const unsigned char> bytes) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ostringstream suffix;
    suffix << ".tmp." << std::this_thread::get_id() << '.' << counter++;
    fs::path tmp = path;
    tmp += suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("rename failed for " + path.string() + ": " + ec.message());
    }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace viewsynth
