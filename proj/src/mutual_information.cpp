#include "viewsynth/mutual_information.hpp"

#include <cmath>
#include <limits>

#include "viewsynth/errors.hpp"

namespace viewsynth {

namespace {

constexpr double kLogFloor = 1e-300;

void check_spec(const SoftHistogramSpec& spec) {
    if (spec.bins < 2) throw InvalidField("mi_bins", "must be >= 2");
    if (!(spec.bandwidth > 0.0)) throw InvalidField("mi_bandwidth", "must be > 0");
}

double bin_center(int k, int bins) { return (k + 0.5) / bins; }

Image as_gray(const Image& image) { return image.channels() == 1 ? image : to_grayscale(image); }

}  // namespace

Eigen::MatrixXd soft_bin_weights(const Image& gray, const SoftHistogramSpec& spec) {
    check_spec(spec);
    if (gray.channels() != 1) throw ShapeMismatch("soft_bin_weights expects a single-channel image");
    const auto values = gray.data();
    const Eigen::Index n = static_cast<Eigen::Index>(values.size());
    Eigen::MatrixXd w(n, spec.bins);
    const double inv_two_var = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
    std::vector<double> logits(static_cast<std::size_t>(spec.bins));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = values[static_cast<std::size_t>(i)];
        double best = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < spec.bins; ++k) {
            const double d = v - bin_center(k, spec.bins);
            logits[static_cast<std::size_t>(k)] = -d * d * inv_two_var;
            best = std::max(best, logits[static_cast<std::size_t>(k)]);
        }
        double total = 0.0;
        for (int k = 0; k < spec.bins; ++k) {
            const double e = std::exp(logits[static_cast<std::size_t>(k)] - best);
            w(i, k) = e;
            total += e;
        }
        w.row(i) /= total;
    }
    return w;
}

std::vector<double> soft_histogram(const Image& image, int bins, double bandwidth) {
    const Eigen::MatrixXd w = soft_bin_weights(as_gray(image), {bins, bandwidth});
    const Eigen::VectorXd h = w.colwise().sum().transpose() / static_cast<double>(w.rows());
    return {h.data(), h.data() + h.size()};
}

Eigen::MatrixXd soft_joint_histogram(const Image& a, const Image& b, const SoftHistogramSpec& spec) {
    if (a.height() != b.height() || a.width() != b.width()) throw ShapeMismatch("images differ in spatial size");
    const Eigen::MatrixXd wa = soft_bin_weights(as_gray(a), spec);
    const Eigen::MatrixXd wb = soft_bin_weights(as_gray(b), spec);
    return (wa.transpose() * wb) / static_cast<double>(wa.rows());
}

namespace {

double mi_from_joint(const Eigen::MatrixXd& joint, Eigen::VectorXd& pa, Eigen::VectorXd& pb) {
    pa = joint.rowwise().sum();
    pb = joint.colwise().sum().transpose();
    double mi = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i) {
        for (Eigen::Index j = 0; j < joint.cols(); ++j) {
            const double p = joint(i, j);
            if (p > 0.0) mi += p * (std::log(p) - std::log(pa(i) * pb(j)));
        }
    }
    return mi;
}

}  // namespace

double mutual_information(const Image& a, const Image& b, const SoftHistogramSpec& spec) {
    Eigen::VectorXd pa, pb;
    return mi_from_joint(soft_joint_histogram(a, b, spec), pa, pb);
}

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (const double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

MutualInformationGradient mutual_information_grad(const Image& a_gray, const Image& b_gray, const SoftHistogramSpec& spec) {
    if (a_gray.channels() != 1 || b_gray.channels() != 1) throw ShapeMismatch("mutual_information_grad expects luma images");
    if (a_gray.height() != b_gray.height() || a_gray.width() != b_gray.width()) {
        throw ShapeMismatch("images differ in spatial size");
    }
    const Eigen::MatrixXd wa = soft_bin_weights(a_gray, spec);
    const Eigen::MatrixXd wb = soft_bin_weights(b_gray, spec);
    const double n = static_cast<double>(wa.rows());
    const Eigen::MatrixXd joint = (wa.transpose() * wb) / n;

    MutualInformationGradient out;
    Eigen::VectorXd pa, pb;
    out.value = mi_from_joint(joint, pa, pb);

    // dMI/dp_ij = log(p_ij / (p_i q_j)) - 1
    Eigen::MatrixXd g(joint.rows(), joint.cols());
    for (Eigen::Index i = 0; i < joint.rows(); ++i) {
        for (Eigen::Index j = 0; j < joint.cols(); ++j) {
            g(i, j) = std::log(std::max(joint(i, j), kLogFloor)) - std::log(std::max(pa(i) * pb(j), kLogFloor)) - 1.0;
        }
    }
    const Eigen::MatrixXd r = wb * g.transpose();  // samples x bins

    out.d_a = Image(a_gray.height(), a_gray.width(), 1);
    const auto values = a_gray.data();
    auto grad = out.d_a.data();
    const double inv_var = 1.0 / (spec.bandwidth * spec.bandwidth);
    for (Eigen::Index s = 0; s < wa.rows(); ++s) {
        const double v = values[static_cast<std::size_t>(s)];
        double mean_dz = 0.0;
        for (int k = 0; k < spec.bins; ++k) mean_dz += wa(s, k) * (-(v - bin_center(k, spec.bins)) * inv_var);
        double acc = 0.0;
        for (int k = 0; k < spec.bins; ++k) {
            const double dz = -(v - bin_center(k, spec.bins)) * inv_var;
            acc += r(s, k) * wa(s, k) * (dz - mean_dz);
        }
        grad[static_cast<std::size_t>(s)] = acc / n;
    }
    return out;
}

}  // namespace viewsynth
