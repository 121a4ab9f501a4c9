#pragma once

#include <vector>

#include "ksopt/types.hpp"

namespace ksopt {

// 10*log10(M*N*max(ref) / sum((ref-rec)^2)). Returns +inf when the error is
// exactly zero. With standard_peak the numerator uses max(ref)^2, the
// conventional definition; the two coincide for images normalized to max 1.
double psnr(const Image2D& ref, const Image2D& rec, bool standard_peak = false);

// Mean of the local SSIM map, 11x11 Gaussian window (sigma 1.5), C1=(0.01L)^2,
// C2=(0.03L)^2 with L=1, symmetric boundary handling.
double ssim(const Image2D& ref, const Image2D& rec);

struct MetricReport {
    std::vector<double> psnr_values;
    std::vector<double> ssim_values;
    double psnr_mean = 0.0, psnr_std = 0.0;   // over finite PSNR entries only
    double ssim_mean = 0.0, ssim_std = 0.0;
    long finite_count = 0;
    long infinite_count = 0;
};

MetricReport evaluate_set(const std::vector<Image2D>& refs, const std::vector<Image2D>& recs,
                          bool standard_peak = false);

}  // namespace ksopt
