#include "viewsynth/backbone.hpp"

#include <cmath>

#include "viewsynth/checksum.hpp"
#include "viewsynth/errors.hpp"

namespace viewsynth {

std::size_t AdapterSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.down.size() + l.up.size());
    return n;
}

std::vector<double> AdapterSet::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.down.data(), l.down.data() + l.down.size());
        flat.insert(flat.end(), l.up.data(), l.up.data() + l.up.size());
    }
    return flat;
}

void AdapterSet::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw ShapeMismatch("adapter parameter vector has the wrong length");
    std::size_t offset = 0;
    for (auto& l : layers) {
        std::copy_n(flat.data() + offset, l.down.size(), l.down.data());
        offset += static_cast<std::size_t>(l.down.size());
        std::copy_n(flat.data() + offset, l.up.size(), l.up.data());
        offset += static_cast<std::size_t>(l.up.size());
    }
}

AdapterSet AdapterSet::zeros_like() const {
    AdapterSet z;
    z.scale = scale;
    for (const auto& l : layers) {
        z.layers.push_back({l.target, Eigen::MatrixXd::Zero(l.down.rows(), l.down.cols()),
                            Eigen::MatrixXd::Zero(l.up.rows(), l.up.cols())});
    }
    return z;
}

Latent DiffusionBackbone::add_noise(const Latent& x0, const Latent& eps, int t) const {
    if (!x0.same_shape(eps)) throw ShapeMismatch("noise and latent shapes differ");
    const double ab = alpha_bar(t);
    Latent out = x0;
    out.values = std::sqrt(ab) * x0.values + std::sqrt(1.0 - ab) * eps.values;
    return out;
}

std::vector<std::string> base_checksums(const DiffusionBackbone& backbone) {
    std::vector<std::string> sums;
    for (const auto& block : backbone.base_parameters()) sums.push_back(sha256_hex(block.values));
    return sums;
}

}  // namespace viewsynth
