#include "ksopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ksopt {

double psnr(const Image2D& ref, const Image2D& rec, bool standard_peak) {
    require_same_shape(ref, rec, "psnr");
    double sse = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double d = ref.data[i] - rec.data[i];
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    double peak = *std::max_element(ref.data.begin(), ref.data.end());
    if (standard_peak) peak *= peak;
    return 10.0 * std::log10(static_cast<double>(ref.size()) * peak / sse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

// Symmetric (mirror) index: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int mirror(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
}

// Separable Gaussian blur with symmetric boundary handling.
RealGrid gauss_filter(const RealGrid& in) {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(kWindow);
        double sum = 0.0;
        const int half = kWindow / 2;
        for (int i = 0; i < kWindow; ++i) {
            double z = (i - half) / kSigma;
            k[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z);
            sum += k[static_cast<std::size_t>(i)];
        }
        for (auto& v : k) v /= sum;
        return k;
    }();
    const int half = kWindow / 2;

    RealGrid tmp(in.height, in.width);
    for (int r = 0; r < in.height; ++r)
        for (int c = 0; c < in.width; ++c) {
            double acc = 0.0;
            for (int t = -half; t <= half; ++t)
                acc += kernel[static_cast<std::size_t>(t + half)] * in.at(r, mirror(c + t, in.width));
            tmp.at(r, c) = acc;
        }
    RealGrid out(in.height, in.width);
    for (int r = 0; r < in.height; ++r)
        for (int c = 0; c < in.width; ++c) {
            double acc = 0.0;
            for (int t = -half; t <= half; ++t)
                acc += kernel[static_cast<std::size_t>(t + half)] * tmp.at(mirror(r + t, in.height), c);
            out.at(r, c) = acc;
        }
    return out;
}

}  // namespace

double ssim(const Image2D& ref, const Image2D& rec) {
    require_same_shape(ref, rec, "ssim");
    if (ref.height < kWindow || ref.width < kWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    constexpr double kL = 1.0;
    constexpr double c1 = (0.01 * kL) * (0.01 * kL);
    constexpr double c2 = (0.03 * kL) * (0.03 * kL);

    RealGrid x(ref.height, ref.width), y(ref.height, ref.width);
    x.data = ref.data;
    y.data = rec.data;
    RealGrid xx(ref.height, ref.width), yy(ref.height, ref.width), xy(ref.height, ref.width);
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx.data[i] = x.data[i] * x.data[i];
        yy.data[i] = y.data[i] * y.data[i];
        xy.data[i] = x.data[i] * y.data[i];
    }

    RealGrid mx = gauss_filter(x), my = gauss_filter(y);
    RealGrid mxx = gauss_filter(xx), myy = gauss_filter(yy), mxy = gauss_filter(xy);

    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double mux = mx.data[i], muy = my.data[i];
        double vx = mxx.data[i] - mux * mux;
        double vy = myy.data[i] - muy * muy;
        double cov = mxy.data[i] - mux * muy;
        double local = ((2.0 * mux * muy + c1) * (2.0 * cov + c2)) /
                       ((mux * mux + muy * muy + c1) * (vx + vy + c2));
        total += local;
    }
    return total / static_cast<double>(x.size());
}

MetricReport evaluate_set(const std::vector<Image2D>& refs, const std::vector<Image2D>& recs,
                          bool standard_peak) {
    if (refs.size() != recs.size())
        throw std::invalid_argument("evaluate_set: reference/reconstruction count mismatch");
    MetricReport rep;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        rep.psnr_values.push_back(psnr(refs[i], recs[i], standard_peak));
        rep.ssim_values.push_back(ssim(refs[i], recs[i]));
    }
    double psum = 0.0, ssum = 0.0;
    for (std::size_t i = 0; i < rep.psnr_values.size(); ++i) {
        if (std::isinf(rep.psnr_values[i])) {
            ++rep.infinite_count;
            continue;
        }
        ++rep.finite_count;
        psum += rep.psnr_values[i];
        ssum += rep.ssim_values[i];
    }
    if (rep.finite_count > 0) {
        rep.psnr_mean = psum / static_cast<double>(rep.finite_count);
        rep.ssim_mean = ssum / static_cast<double>(rep.finite_count);
        double pvar = 0.0, svar = 0.0;
        for (std::size_t i = 0; i < rep.psnr_values.size(); ++i) {
            if (std::isinf(rep.psnr_values[i])) continue;
            pvar += (rep.psnr_values[i] - rep.psnr_mean) * (rep.psnr_values[i] - rep.psnr_mean);
            svar += (rep.ssim_values[i] - rep.ssim_mean) * (rep.ssim_values[i] - rep.ssim_mean);
        }
        rep.psnr_std = std::sqrt(pvar / static_cast<double>(rep.finite_count));
        rep.ssim_std = std::sqrt(svar / static_cast<double>(rep.finite_count));
    }
    return rep;
}

}  // namespace ksopt
