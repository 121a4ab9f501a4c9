#include "doctest.h"

#include <cmath>

#include "ksopt/metrics.hpp"
#include "test_util.hpp"

using namespace ksopt;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("psnr: identical images give the infinite sentinel") {
    Image2D img = oracle::random_image(8, 8, 1);
    CHECK(std::isinf(psnr(img, img)));
}

TEST_CASE("psnr: hand-computed 2x2 case is exactly 20 dB") {
    Image2D ref(2, 2), rec(2, 2);
    std::fill(ref.data.begin(), ref.data.end(), 1.0);
    std::fill(rec.data.begin(), rec.data.end(), 0.9);
    CHECK(std::fabs(psnr(ref, rec) - 20.0) < 1e-10);
}

TEST_CASE("psnr: printed form equals the standard form when max(ref)=1") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        Image2D ref = oracle::random_image(16, 16, seed);
        ref.data[seed] = 1.0;  // pin the peak
        Image2D rec = oracle::random_image(16, 16, seed + 100);
        double printed = psnr(ref, rec, false);
        double standard = psnr(ref, rec, true);
        CHECK(std::fabs(printed - standard) < 1e-12);
        // independent MSE-based oracle
        double sse = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            double d = ref.data[i] - rec.data[i];
            sse += d * d;
        }
        double mse = sse / static_cast<double>(ref.size());
        CHECK(std::fabs(printed - 10.0 * std::log10(1.0 / mse)) < 1e-12);
    }
}

TEST_CASE("psnr: depends on the error only through its sum of squares") {
    Image2D ref = oracle::random_image(8, 8, 3);
    ref.data[0] = 1.0;
    Image2D err = oracle::random_image(8, 8, 4, -0.1, 0.1);
    Image2D rec_a(8, 8), rec_b(8, 8);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        rec_a.data[i] = ref.data[i] + err.data[i];
        rec_b.data[i] = ref.data[i] - err.data[63 - i];  // permuted, negated error
    }
    CHECK(psnr(ref, rec_a) == doctest::Approx(psnr(ref, rec_b)).epsilon(1e-12));
}

TEST_CASE("psnr: shape mismatch throws") {
    CHECK_THROWS_AS(psnr(Image2D(2, 2), Image2D(2, 3)), std::invalid_argument);
}

TEST_CASE("ssim: identical images give exactly 1") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        Image2D img = oracle::random_image(16, 16, seed);
        CHECK(ssim(img, img) == 1.0);
    }
}

TEST_CASE("ssim: anticorrelated mid-gray images score below 0.5") {
    Image2D ref = oracle::random_image(32, 32, 5);
    Image2D rec(32, 32);
    for (std::size_t i = 0; i < ref.size(); ++i) rec.data[i] = 1.0 - ref.data[i];
    CHECK(ssim(ref, rec) < 0.5);
}

TEST_CASE("ssim: equal constants score 1") {
    Image2D a(16, 16), b(16, 16);
    std::fill(a.data.begin(), a.data.end(), 0.5);
    std::fill(b.data.begin(), b.data.end(), 0.5);
    CHECK(ssim(a, b) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ssim: stays within [-1, 1] and matches the direct oracle") {
    for (unsigned seed = 0; seed < 6; ++seed) {
        Image2D a = oracle::random_image(32, 32, seed);
        Image2D b = oracle::random_image(32, 32, seed + 50);
        double v = ssim(a, b);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        CHECK(std::fabs(v - oracle::ssim_direct(a, b)) < 1e-8);
    }
}

TEST_CASE("ssim: invariant under simultaneous horizontal flip") {
    Image2D a = oracle::random_image(24, 24, 8);
    Image2D b = oracle::random_image(24, 24, 9);
    Image2D af(24, 24), bf(24, 24);
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 24; ++c) {
            af.at(r, c) = a.at(r, 23 - c);
            bf.at(r, c) = b.at(r, 23 - c);
        }
    CHECK(ssim(a, b) == doctest::Approx(ssim(af, bf)).epsilon(1e-12));
}

TEST_CASE("ssim: window larger than the image throws") {
    CHECK_THROWS_AS(ssim(Image2D(8, 8), Image2D(8, 8)), std::invalid_argument);
}

TEST_CASE("evaluate_set separates infinite entries") {
    Image2D a = oracle::random_image(16, 16, 11);
    Image2D b = oracle::random_image(16, 16, 12);
    MetricReport rep = evaluate_set({a, a, b}, {a, b, b});
    CHECK(rep.infinite_count == 2);
    CHECK(rep.finite_count == 1);
    CHECK(rep.psnr_mean == doctest::Approx(psnr(a, b)));
    CHECK(rep.psnr_std == 0.0);
}

TEST_SUITE_END();
