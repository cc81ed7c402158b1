#pragma once

#include <vector>

#include <Eigen/Dense>

#include "viewsynth/image.hpp"

namespace viewsynth {

/// Parzen-window histogram over intensities in [0, 1]. Bin k is centred at
/// (k + 0.5) / bins; each sample spreads unit mass over the bins with
/// softmax weights exp(-(v - c_k)^2 / (2 bandwidth^2)), so the histogram
/// sums to 1 exactly and is differentiable in the sample values. As the
/// bandwidth goes to 0 every sample lands in its nearest bin (a sample on a
/// bin boundary splits evenly).
struct SoftHistogramSpec {
    int bins = 32;
    double bandwidth = 0.02;
};

/// Per-sample bin weights (samples x bins), rows summing to 1.
Eigen::MatrixXd soft_bin_weights(const Image& gray, const SoftHistogramSpec& spec);

/// Marginal soft histogram of a single-channel image; RGB input is
/// converted to luma first.
std::vector<double> soft_histogram(const Image& image, int bins, double bandwidth);

/// Soft joint histogram p(i, j) of co-located intensities (a -> rows).
Eigen::MatrixXd soft_joint_histogram(const Image& a, const Image& b, const SoftHistogramSpec& spec);

/// sum_ij p_ij log(p_ij / (p_i q_j)) in nats, over the soft joint histogram of
/// the two images' luma. Throws ShapeMismatch when spatial sizes differ.
double mutual_information(const Image& a, const Image& b, const SoftHistogramSpec& spec);

/// Shannon entropy (nats) of a probability vector; zero entries contribute 0.
double entropy(const std::vector<double>& p);

struct MutualInformationGradient {
    double value = 0.0;
    Image d_a;  // single channel, d MI / d luma(a)
};

/// MI of two single-channel images and its gradient w.r.t. every sample of `a`.
MutualInformationGradient mutual_information_grad(const Image& a_gray, const Image& b_gray, const SoftHistogramSpec& spec);

}  // namespace viewsynth
