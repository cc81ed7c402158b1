#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "pinned.hpp"
#include "viewsynth/errors.hpp"
#include "viewsynth/mutual_information.hpp"

using namespace viewsynth;
using namespace viewsynth::testing;

namespace {

Image gray_from(std::initializer_list<double> values, int h, int w) {
    Image img(h, w, 1);
    std::copy(values.begin(), values.end(), img.data().begin());
    return img;
}

// Two-level image: `fraction` of the pixels at `hi`, the rest at `lo`.
Image two_level(int size, double lo, double hi, double fraction, std::uint64_t seed) {
    Image img(size, size, 1, lo);
    Rng rng(seed);
    for (double& v : img.data()) {
        if (rng.uniform() < fraction) v = hi;
    }
    return img;
}

}  // namespace

TEST_CASE("soft histogram normalization") {
    for (const int bins : {2, 8, 32}) {
        for (const double bw : {1e-3, 0.02, 0.5}) {
            const auto h = soft_histogram(noise_image(16, 16, 3, static_cast<std::uint64_t>(bins)), bins, bw);
            REQUIRE(h.size() == static_cast<std::size_t>(bins));
            CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
            for (double p : h) CHECK(p >= 0.0);
        }
    }
}

TEST_CASE("two-level image splits evenly") {
    const auto h = soft_histogram(gray_from({0.0, 0.0, 1.0, 1.0}, 2, 2), 2, 1e-3);
    CHECK(h[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(h[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("point mass inside a bin") {
    const auto h = soft_histogram(Image(4, 4, 1, 0.3), 2, 1e-3);
    CHECK(h[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(h[1] < 1e-12);
    const auto h8 = soft_histogram(Image(4, 4, 1, 0.8), 8, 1e-3);
    CHECK(h8[6] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a sample on a bin boundary is shared by both bins") {
    // 0.5 sits exactly between the two bin centres 0.25 and 0.75.
    const auto h = soft_histogram(Image(4, 4, 1, 0.5), 2, 1e-3);
    CHECK(h[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(h[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("MI symmetry and self-information") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Image a = noise_image(32, 32, 3, seed);
        const Image b = noise_image(32, 32, 3, seed + 100);
        CHECK(std::abs(mutual_information(a, b, {16, 0.02}) - mutual_information(b, a, {16, 0.02})) <= 1e-6);
    }
    for (const double fraction : {0.5, 0.3, 0.1}) {
        const Image x = two_level(32, 0.1, 0.9, fraction, 11);
        const double mi = mutual_information(x, x, {8, 1e-3});
        const double h = entropy(soft_histogram(x, 8, 1e-3));
        CHECK(h > 0.0);
        CHECK(mi == doctest::Approx(h).epsilon(1e-9));
    }
    CHECK(mutual_information(Image(8, 8, 1, 0.4), noise_image(8, 8, 1, 1), {8, 1e-3}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(mutual_information(Image(8, 8, 1), Image(8, 9, 1), {8, 0.02}), ShapeMismatch);
    CHECK(entropy({0.5, 0.5, 0.0}) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("independent noise stays under the null threshold") {
    std::vector<double> null_mi;
    for (int seed = 0; seed < 100; ++seed) {
        null_mi.push_back(mutual_information(noise_image(64, 64, 1, 1000 + 2 * seed), noise_image(64, 64, 1, 1001 + 2 * seed),
                                             {8, 0.02}));
    }
    std::sort(null_mi.begin(), null_mi.end());
    CHECK(null_mi[98] == doctest::Approx(pinned::kMiNullP99).epsilon(1e-9));
    CHECK(null_mi.back() == doctest::Approx(pinned::kMiNullMax).epsilon(1e-9));
    CHECK(pinned::kMiNullP99 < 0.05);

    // Fresh pairs outside the calibration seeds.
    for (int seed = 0; seed < 5; ++seed) {
        const double mi = mutual_information(noise_image(64, 64, 1, 9000 + 2 * seed), noise_image(64, 64, 1, 9001 + 2 * seed),
                                             {8, 0.02});
        CAPTURE(seed);
        CHECK(mi < pinned::kMiNullP99);
    }
}

TEST_CASE("MI gradient matches central differences") {
    const Image a = noise_image(8, 8, 1, 5);
    Image b = a;
    Rng rng(6);
    for (double& v : b.data()) v = std::clamp(0.7 * v + 0.3 * rng.uniform(), 0.0, 1.0);
    const SoftHistogramSpec spec{8, 0.05};
    const auto g = mutual_information_grad(a, b, spec);
    CHECK(g.value == doctest::Approx(mutual_information(a, b, spec)).epsilon(1e-12));

    const double h = 1e-6;
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        Image plus = a, minus = a;
        plus.data()[i] += h;
        minus.data()[i] -= h;
        const double fd = (mutual_information(plus, b, spec) - mutual_information(minus, b, spec)) / (2.0 * h);
        diff += std::pow(g.d_a.data()[i] - fd, 2);
        ref += fd * fd;
    }
    CHECK(std::sqrt(diff / ref) <= 1e-4);
}

TEST_CASE("histogram spec is validated") {
    CHECK_THROWS_AS(soft_histogram(Image(4, 4, 1), 1, 0.02), InvalidField);
    CHECK_THROWS_AS(soft_histogram(Image(4, 4, 1), 8, 0.0), InvalidField);
}
