#include "doctest.h"

#include <cmath>

#include "ksopt/motion.hpp"
#include "test_util.hpp"

using namespace ksopt;

TEST_SUITE_BEGIN("motion");

TEST_CASE("sample_rigid: zero bounds give the identity transform") {
    RigidTransform t = sample_rigid(5, 0.0, 0.0);
    CHECK(t.dx == 0.0);
    CHECK(t.dy == 0.0);
    CHECK(t.theta_deg == 0.0);
}

TEST_CASE("sample_rigid: uniform within bounds with mean near zero") {
    const int n = 10000;
    double sum_dx = 0.0, sum_dy = 0.0, sum_th = 0.0;
    for (int s = 0; s < n; ++s) {
        RigidTransform t = sample_rigid(static_cast<std::uint64_t>(s));
        CHECK(std::fabs(t.dx) <= 5.0);
        CHECK(std::fabs(t.dy) <= 5.0);
        CHECK(std::fabs(t.theta_deg) <= 5.0);
        sum_dx += t.dx;
        sum_dy += t.dy;
        sum_th += t.theta_deg;
    }
    // sd of the mean of U(-5,5) over n draws
    const double sigma_mean = 5.0 / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
    CHECK(std::fabs(sum_dx / n) <= 4.0 * sigma_mean);
    CHECK(std::fabs(sum_dy / n) <= 4.0 * sigma_mean);
    CHECK(std::fabs(sum_th / n) <= 4.0 * sigma_mean);
}

TEST_CASE("sample_rigid: deterministic per seed") {
    RigidTransform a = sample_rigid(123), b = sample_rigid(123);
    CHECK(a.dx == b.dx);
    CHECK(a.dy == b.dy);
    CHECK(a.theta_deg == b.theta_deg);
}

TEST_CASE("apply_rigid: identity transform is bitwise equal") {
    Image2D img = oracle::random_image(17, 23, 2);
    Image2D out = apply_rigid(img, RigidTransform{});
    CHECK(out.data == img.data);
}

TEST_CASE("apply_rigid: integer translation equals the shift oracle") {
    Image2D img = oracle::random_image(16, 16, 3);
    RigidTransform t{3.0, -2.0, 0.0};  // dx=3 columns, dy=-2 rows
    Image2D out = apply_rigid(img, t);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            int sr = r + 2, sc = c - 3;  // inverse shift
            double expect = (sr >= 0 && sr < 16 && sc >= 0 && sc < 16) ? img.at(sr, sc) : 0.0;
            CHECK(out.at(r, c) == doctest::Approx(expect).epsilon(1e-15));
        }
}

TEST_CASE("apply_rigid: 90-degree rotation equals the transpose-flip oracle") {
    const int n = 16;
    Image2D img = oracle::random_image(n, n, 4);
    Image2D out = apply_rigid(img, RigidTransform{0.0, 0.0, 90.0});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            CHECK(std::fabs(out.at(r, c) - img.at(n - 1 - c, r)) < 1e-12);
}

TEST_CASE("apply_rigid: output range is bounded by the input hull and zero") {
    Image2D img = oracle::random_image(24, 24, 5, 0.2, 0.9);
    RigidTransform t = sample_rigid(17);
    Image2D out = apply_rigid(img, t);
    double in_max = *std::max_element(img.data.begin(), img.data.end());
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= in_max + 1e-12);
    }
}

TEST_CASE("apply_rigid: centered smooth phantom keeps its mass under +-5px/5deg") {
    const int n = 192;
    const double mid = 0.5 * (n - 1), sigma = 14.0;
    Image2D img(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double d2 = (r - mid) * (r - mid) + (c - mid) * (c - mid);
            img.at(r, c) = std::exp(-d2 / (2.0 * sigma * sigma));
        }
    double mass_in = 0.0;
    for (double v : img.data) mass_in += v;
    for (std::uint64_t s : {1ull, 2ull, 3ull}) {
        Image2D out = apply_rigid(img, sample_rigid(s));
        double mass_out = 0.0;
        for (double v : out.data) mass_out += v;
        CHECK(std::fabs(mass_out - mass_in) <= 1e-6 * mass_in);
    }
}

TEST_CASE("apply_rigid: integer translation composes back to the interior") {
    Image2D img = oracle::random_image(20, 20, 6);
    Image2D fwd = apply_rigid(img, RigidTransform{4.0, 3.0, 0.0});
    Image2D back = apply_rigid(fwd, RigidTransform{-4.0, -3.0, 0.0});
    for (int r = 4; r < 16; ++r)
        for (int c = 5; c < 15; ++c)
            CHECK(back.at(r, c) == doctest::Approx(img.at(r, c)).epsilon(1e-15));
}

TEST_SUITE_END();
