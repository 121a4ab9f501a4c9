#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "ksopt/types.hpp"

// Oracle helpers shared by the unit and acceptance suites. Everything here is
// written independently of the library's implementation paths on purpose.
namespace oracle {

inline ksopt::Image2D random_image(int h, int w, unsigned seed, double lo = 0.0, double hi = 1.0) {
    ksopt::Image2D img(h, w);
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : img.data) v = dist(eng);
    return img;
}

inline ksopt::ComplexImage2D random_complex(int h, int w, unsigned seed, double scale = 1.0) {
    ksopt::ComplexImage2D img(h, w);
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& v : img.data) v = ksopt::cplx(dist(eng), dist(eng));
    return img;
}

// O((MN)^2) centered unitary DFT, the independent reference for FFT results.
inline ksopt::KSpace2D naive_dft2_centered(const ksopt::ComplexImage2D& img) {
    const int m = img.height, n = img.width;
    ksopt::KSpace2D out(m, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m) * n);
    for (int kr = 0; kr < m; ++kr) {
        for (int kc = 0; kc < n; ++kc) {
            // Stored index (kr, kc) holds frequency (kr - m/2, kc - n/2).
            int fr = kr - m / 2, fc = kc - n / 2;
            ksopt::cplx acc(0.0, 0.0);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) {
                    double ang = -2.0 * M_PI * (static_cast<double>(fr) * r / m +
                                                static_cast<double>(fc) * c / n);
                    acc += img.at(r, c) * ksopt::cplx(std::cos(ang), std::sin(ang));
                }
            out.at(kr, kc) = acc * scale;
        }
    }
    return out;
}

// O((MN)^2) centered unitary inverse DFT.
inline ksopt::ComplexImage2D naive_idft2_centered(const ksopt::KSpace2D& k) {
    const int m = k.height, n = k.width;
    ksopt::ComplexImage2D out(m, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m) * n);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            ksopt::cplx acc(0.0, 0.0);
            for (int kr = 0; kr < m; ++kr)
                for (int kc = 0; kc < n; ++kc) {
                    double ang = 2.0 * M_PI * (static_cast<double>(kr - m / 2) * r / m +
                                               static_cast<double>(kc - n / 2) * c / n);
                    acc += k.at(kr, kc) * ksopt::cplx(std::cos(ang), std::sin(ang));
                }
            out.at(r, c) = acc * scale;
        }
    }
    return out;
}

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) return 0.0;
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {  // series
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // continued fraction for Q(a, x)
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1.0 - q;
}

// Survival function of the chi-square distribution.
inline double chi2_sf(double stat, int dof) { return 1.0 - gamma_p(0.5 * dof, 0.5 * stat); }

// Inclusion frequencies of successive weighted sampling without replacement,
// estimated by brute-force Monte Carlo with an independent sampler.
inline std::vector<double> wor_inclusion_mc(const std::vector<double>& weights, int k, long trials,
                                            unsigned seed) {
    std::vector<double> freq(weights.size(), 0.0);
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> w(weights.size());
    for (long t = 0; t < trials; ++t) {
        w = weights;
        for (int draw = 0; draw < k; ++draw) {
            double total = 0.0;
            for (double v : w) total += v;
            double u = unit(eng) * total, acc = 0.0;
            std::size_t pick = w.size() - 1;
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (w[i] <= 0.0) continue;
                acc += w[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            freq[pick] += 1.0;
            w[pick] = 0.0;
        }
    }
    for (auto& v : freq) v /= static_cast<double>(trials);
    return freq;
}

// Direct sliding-window SSIM with symmetric boundaries; no separable filtering.
inline double ssim_direct(const ksopt::Image2D& a, const ksopt::Image2D& b) {
    const int win = 11;
    const double sigma = 1.5;
    const int half = win / 2;
    std::vector<double> kern(static_cast<std::size_t>(win) * win);
    double ksum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            double g = std::exp(-0.5 * ((i - half) * (i - half) + (j - half) * (j - half)) /
                                (sigma * sigma));
            kern[static_cast<std::size_t>(i) * win + j] = g;
            ksum += g;
        }
    for (auto& v : kern) v /= ksum;

    auto mirror = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
        return i;
    };

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int r = 0; r < a.height; ++r) {
        for (int c = 0; c < a.width; ++c) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int i = -half; i <= half; ++i)
                for (int j = -half; j <= half; ++j) {
                    double kv = kern[static_cast<std::size_t>(i + half) * win + (j + half)];
                    double xv = a.at(mirror(r + i, a.height), mirror(c + j, a.width));
                    double yv = b.at(mirror(r + i, b.height), mirror(c + j, b.width));
                    mx += kv * xv;
                    my += kv * yv;
                    mxx += kv * xv * xv;
                    myy += kv * yv * yv;
                    mxy += kv * xv * yv;
                }
            double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    return total / static_cast<double>(a.size());
}

}  // namespace oracle
