#include "ksopt/probmask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ksopt/rng.hpp"

namespace ksopt {

RealGrid adjusted_mass(const WeightMap& w, const ResidualMap& r_norm) {
    require_same_shape(w, r_norm, "adjusted_mass");
    RealGrid m(w.height, w.width);
    for (std::size_t i = 0; i < w.size(); ++i) {
        double c = std::clamp(w.data[i], -1.0, 1.0);
        m.data[i] = std::max(0.0, c + r_norm.data[i]);
    }
    return m;
}

ProbMask scale_to_factor(const RealGrid& m, double factor) {
    double mean = std::accumulate(m.data.begin(), m.data.end(), 0.0) / static_cast<double>(m.size());
    if (mean <= 0.0) throw DegenerateMassError("scale_to_factor: adjusted mass is identically zero");
    ProbMask p(m.height, m.width);
    p.target_factor = factor;
    const double s = factor / mean;
    for (std::size_t i = 0; i < m.size(); ++i) p.data[i] = s * m.data[i];
    return p;
}

RealGrid soft_binarize(const ProbMask& p, const ThresholdMatrix& th, double sigma_p) {
    require_same_shape(p, th, "soft_binarize");
    if (sigma_p <= 0.0) throw std::invalid_argument("soft_binarize: sigma_p must be positive");
    RealGrid out(p.height, p.width);
    for (std::size_t i = 0; i < p.size(); ++i)
        out.data[i] = 1.0 / (1.0 + std::exp(-sigma_p * (p.data[i] - th.data[i])));
    return out;
}

ThresholdMatrix make_threshold(int height, int width, std::uint64_t seed) {
    ThresholdMatrix th(height, width);
    Rng rng(seed);
    for (auto& v : th.data) v = rng.uniform01();
    return th;
}

BinaryMask bernoulli_realize(const ProbMask& p, std::uint64_t seed) {
    BinaryMask mask(p.height, p.width);
    Rng rng(seed);
    long ones = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double prob = std::min(p.data[i], 1.0);
        bool hit = rng.uniform01() < prob;
        mask.data[i] = hit ? 1 : 0;
        ones += hit;
    }
    mask.factor = static_cast<double>(ones) / static_cast<double>(p.size());
    return mask;
}

BinaryMask topk_extract(const ProbMask& p, double factor) {
    const long total = static_cast<long>(p.size());
    const long k = static_cast<long>(std::floor(factor * static_cast<double>(total)));
    if (k < 1) throw std::invalid_argument("topk_extract: floor(factor*M*N) must be >= 1");

    const int cr = dc_row(p.height), cc = dc_col(p.width);
    std::vector<long> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0L);
    auto dist2 = [&](long i) {
        long r = i / p.width - cr, c = i % p.width - cc;
        return r * r + c * c;
    };
    std::stable_sort(idx.begin(), idx.end(), [&](long a, long b) {
        if (p.data[a] != p.data[b]) return p.data[a] > p.data[b];
        long da = dist2(a), db = dist2(b);
        if (da != db) return da < db;
        return a < b;
    });

    BinaryMask mask(p.height, p.width);
    for (long i = 0; i < k; ++i) mask.data[idx[i]] = 1;
    mask.factor = static_cast<double>(k) / static_cast<double>(total);
    return mask;
}

}  // namespace ksopt
