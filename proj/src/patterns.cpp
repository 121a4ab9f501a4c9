#include "ksopt/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ksopt/rng.hpp"

namespace ksopt {

namespace {

// Successive weighted draws without replacement. Weights need not be normalized.
std::vector<int> weighted_sample_without_replacement(const std::vector<double>& weights, long k, Rng& rng) {
    std::vector<double> w = weights;
    std::vector<int> picked;
    picked.reserve(static_cast<std::size_t>(k));
    for (long draw = 0; draw < k; ++draw) {
        double total = std::accumulate(w.begin(), w.end(), 0.0);
        double u = rng.uniform01() * total;
        double acc = 0.0;
        int chosen = -1;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] <= 0.0) continue;
            acc += w[i];
            if (u < acc) {
                chosen = static_cast<int>(i);
                break;
            }
        }
        if (chosen < 0) {  // numeric edge: fall back to last positive weight
            for (std::size_t i = w.size(); i-- > 0;)
                if (w[i] > 0.0) {
                    chosen = static_cast<int>(i);
                    break;
                }
        }
        picked.push_back(chosen);
        w[static_cast<std::size_t>(chosen)] = 0.0;
    }
    return picked;
}

}  // namespace

BinaryMask gen_gaussian_1d(int height, int width, double factor, double sigma_rows, std::uint64_t seed) {
    const long rows = std::lround(factor * height);
    if (rows < 1) throw std::invalid_argument("gen_gaussian_1d: round(factor*M) is zero");
    if (rows > height) throw std::invalid_argument("gen_gaussian_1d: factor exceeds 1");
    if (sigma_rows <= 0.0) throw std::invalid_argument("gen_gaussian_1d: sigma_rows must be positive");

    std::vector<double> pdf(static_cast<std::size_t>(height));
    const double c = static_cast<double>(dc_row(height));
    for (int r = 0; r < height; ++r) {
        double z = (r - c) / sigma_rows;
        pdf[static_cast<std::size_t>(r)] = std::exp(-0.5 * z * z);
    }

    Rng rng(seed);
    std::vector<int> picked = weighted_sample_without_replacement(pdf, rows, rng);

    BinaryMask mask(height, width);
    for (int r : picked)
        for (int col = 0; col < width; ++col) mask.at(r, col) = 1;
    mask.factor = static_cast<double>(rows) / static_cast<double>(height);
    return mask;
}

BinaryMask gen_center(int height, int width, double factor) {
    const long total = static_cast<long>(height) * width;
    const long k = static_cast<long>(std::floor(factor * static_cast<double>(total)));
    if (k < 1) throw std::invalid_argument("gen_center: floor(factor*M*N) must be >= 1");

    const int cr = dc_row(height), cc = dc_col(width);
    std::vector<long> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), 0L);
    std::stable_sort(idx.begin(), idx.end(), [&](long a, long b) {
        long ra = a / width - cr, ca = a % width - cc;
        long rb = b / width - cr, cb = b % width - cc;
        long cheb_a = std::max(std::labs(ra), std::labs(ca));
        long cheb_b = std::max(std::labs(rb), std::labs(cb));
        if (cheb_a != cheb_b) return cheb_a < cheb_b;
        long ea = ra * ra + ca * ca, eb = rb * rb + cb * cb;
        if (ea != eb) return ea < eb;
        return a < b;
    });

    BinaryMask mask(height, width);
    for (long i = 0; i < k; ++i) mask.data[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
    mask.factor = static_cast<double>(k) / static_cast<double>(total);
    return mask;
}

double poisson_radius(int height, int width, double r0, double slope, double row, double col) {
    const double cr = dc_row(height), cc = dc_col(width);
    double corners[4][2] = {{0.0, 0.0},
                            {0.0, static_cast<double>(width)},
                            {static_cast<double>(height), 0.0},
                            {static_cast<double>(height), static_cast<double>(width)}};
    double d_max = 0.0;
    for (auto& p : corners) d_max = std::max(d_max, std::hypot(p[0] - cr, p[1] - cc));
    double d = std::hypot(row - cr, col - cc);
    return r0 * (1.0 + slope * d / d_max);
}

namespace {

struct BridsonResult {
    std::vector<std::pair<double, double>> darts;
    std::vector<std::uint8_t> pixels;  // deduplicated pixel hits
    long pixel_count = 0;
};

// Bridson (2007) dart throwing with spatially varying radius. A candidate is
// accepted only if its distance to every accepted dart a satisfies
// dist >= min(radius(candidate), radius(a)).
BridsonResult bridson(int height, int width, double r0, double slope, std::uint64_t dart_seed) {
    const double cell = r0 / std::sqrt(2.0);
    const int gh = static_cast<int>(std::ceil(height / cell));
    const int gw = static_cast<int>(std::ceil(width / cell));
    std::vector<int> grid(static_cast<std::size_t>(gh) * gw, -1);

    auto radius_at = [&](double r, double c) { return poisson_radius(height, width, r0, slope, r, c); };

    BridsonResult out;
    out.pixels.assign(static_cast<std::size_t>(height) * width, 0);
    std::vector<int> active;
    Rng rng(dart_seed);

    auto add_point = [&](double r, double c) {
        int gi = static_cast<int>(r / cell), gj = static_cast<int>(c / cell);
        grid[static_cast<std::size_t>(gi) * gw + gj] = static_cast<int>(out.darts.size());
        active.push_back(static_cast<int>(out.darts.size()));
        out.darts.emplace_back(r, c);
        int pr = static_cast<int>(r), pc = static_cast<int>(c);
        std::uint8_t& px = out.pixels[static_cast<std::size_t>(pr) * width + pc];
        if (!px) {
            px = 1;
            ++out.pixel_count;
        }
    };

    auto conflicts = [&](double r, double c) {
        double rc = radius_at(r, c);
        int reach = static_cast<int>(std::ceil(rc / cell)) + 1;
        int gi = static_cast<int>(r / cell), gj = static_cast<int>(c / cell);
        for (int di = -reach; di <= reach; ++di) {
            int i = gi + di;
            if (i < 0 || i >= gh) continue;
            for (int dj = -reach; dj <= reach; ++dj) {
                int j = gj + dj;
                if (j < 0 || j >= gw) continue;
                int id = grid[static_cast<std::size_t>(i) * gw + j];
                if (id < 0) continue;
                auto [ar, ac] = out.darts[static_cast<std::size_t>(id)];
                double min_r = std::min(rc, radius_at(ar, ac));
                double dr = r - ar, dc2 = c - ac;
                if (dr * dr + dc2 * dc2 < min_r * min_r) return true;
            }
        }
        return false;
    };

    // Seed dart at the DC pixel center.
    add_point(dc_row(height) + 0.5, dc_col(width) + 0.5);

    constexpr int kAttempts = 30;
    while (!active.empty()) {
        std::size_t slot = static_cast<std::size_t>(rng.below(active.size()));
        int parent = active[slot];
        auto [pr, pc] = out.darts[static_cast<std::size_t>(parent)];
        double pradius = radius_at(pr, pc);
        bool spawned = false;
        for (int attempt = 0; attempt < kAttempts; ++attempt) {
            // Area-uniform draw from the annulus [pradius, 2*pradius].
            double rad = pradius * std::sqrt(1.0 + 3.0 * rng.uniform01());
            double ang = rng.uniform01() * 2.0 * M_PI;
            double nr = pr + rad * std::sin(ang);
            double nc = pc + rad * std::cos(ang);
            if (nr < 0.0 || nr >= height || nc < 0.0 || nc >= width) continue;
            if (conflicts(nr, nc)) continue;
            add_point(nr, nc);
            spawned = true;
            break;
        }
        if (!spawned) {
            active[slot] = active.back();
            active.pop_back();
        }
    }
    return out;
}

}  // namespace

BinaryMask gen_poisson_variable_density(int height, int width, double factor, double r0,
                                        std::uint64_t seed, PoissonDebug* debug) {
    const long total = static_cast<long>(height) * width;
    const long target = static_cast<long>(std::floor(factor * static_cast<double>(total)));
    if (static_cast<double>(target) < 4.0)
        throw std::invalid_argument("gen_poisson_variable_density: factor*M*N must be >= 4");
    if (r0 <= 0.0) throw std::invalid_argument("gen_poisson_variable_density: r0 must be positive");

    const std::uint64_t dart_seed = derive_seed(seed, 1);
    auto count_at = [&](double s) { return bridson(height, width, r0, s, dart_seed).pixel_count; };

    // count(s) is non-increasing in s (larger slope, sparser darts). Bracket,
    // then bisect to within 1% of the target.
    const long tol = std::max(1L, static_cast<long>(0.01 * static_cast<double>(target)));
    double s_lo = 0.0;
    long c_lo = count_at(s_lo);
    if (c_lo < target - tol)
        throw BracketError("gen_poisson_variable_density: slope 0 yields " + std::to_string(c_lo) +
                           " < target " + std::to_string(target) + "; decrease r0 or factor");
    double s_hi = 1.0;
    long c_hi = count_at(s_hi);
    int doublings = 0;
    while (c_hi > target) {
        s_hi *= 2.0;
        c_hi = count_at(s_hi);
        if (++doublings > 60)
            throw BracketError("gen_poisson_variable_density: could not bracket target count");
    }

    double best_s = (std::labs(c_lo - target) <= std::labs(c_hi - target)) ? s_lo : s_hi;
    long best_err = std::min(std::labs(c_lo - target), std::labs(c_hi - target));
    for (int iter = 0; iter < 40 && best_err > tol; ++iter) {
        double mid = 0.5 * (s_lo + s_hi);
        long c_mid = count_at(mid);
        long err = std::labs(c_mid - target);
        if (err < best_err) {
            best_err = err;
            best_s = mid;
        }
        if (c_mid >= target)
            s_lo = mid;
        else
            s_hi = mid;
    }

    BridsonResult chosen = bridson(height, width, r0, best_s, dart_seed);
    if (debug) {
        debug->darts = chosen.darts;
        debug->slope = best_s;
        debug->pre_fixup_count = chosen.pixel_count;
    }

    BinaryMask mask(height, width);
    mask.data = chosen.pixels;
    long ones = chosen.pixel_count;
    Rng fixup_rng(derive_seed(seed, 2));

    if (ones < target) {
        // Add unsampled pixels with probability proportional to 1/radius^2.
        std::vector<long> holes;
        std::vector<double> weights;
        for (long i = 0; i < total; ++i) {
            if (mask.data[static_cast<std::size_t>(i)]) continue;
            holes.push_back(i);
            double rr = poisson_radius(height, width, r0, best_s,
                                       static_cast<double>(i / width), static_cast<double>(i % width));
            weights.push_back(1.0 / (rr * rr));
        }
        auto picks = weighted_sample_without_replacement(weights, target - ones, fixup_rng);
        for (int p : picks) mask.data[static_cast<std::size_t>(holes[static_cast<std::size_t>(p)])] = 1;
    } else if (ones > target) {
        // Remove sampled pixels with probability proportional to local density.
        std::vector<long> hits;
        for (long i = 0; i < total; ++i)
            if (mask.data[static_cast<std::size_t>(i)]) hits.push_back(i);
        std::vector<double> weights(hits.size());
        for (std::size_t a = 0; a < hits.size(); ++a) {
            double ar = static_cast<double>(hits[a] / width), ac = static_cast<double>(hits[a] % width);
            double reach = 2.0 * poisson_radius(height, width, r0, best_s, ar, ac);
            int neighbors = 0;
            for (std::size_t b = 0; b < hits.size(); ++b) {
                if (a == b) continue;
                double br = static_cast<double>(hits[b] / width), bc = static_cast<double>(hits[b] % width);
                if (std::hypot(ar - br, ac - bc) <= reach) ++neighbors;
            }
            weights[a] = 1.0 + neighbors;
        }
        auto picks = weighted_sample_without_replacement(weights, ones - target, fixup_rng);
        for (int p : picks) mask.data[static_cast<std::size_t>(hits[static_cast<std::size_t>(p)])] = 0;
    }

    mask.factor = static_cast<double>(target) / static_cast<double>(total);
    return mask;
}

}  // namespace ksopt
