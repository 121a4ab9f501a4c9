#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ksopt/types.hpp"

namespace ksopt {

// Selects round(factor*M) full rows, sampled without replacement with
// probability proportional to a Gaussian pdf centered at the DC row.
BinaryMask gen_gaussian_1d(int height, int width, double factor, double sigma_rows, std::uint64_t seed);

// The floor(factor*M*N) pixels nearest the DC index in Chebyshev distance,
// ties broken by Euclidean distance then row-major order.
BinaryMask gen_center(int height, int width, double factor);

// Exclusion radius of the variable-density Poisson-disc generator at a
// (row, col) position, for slope s: r0 * (1 + s * d / d_max).
double poisson_radius(int height, int width, double r0, double slope, double row, double col);

struct PoissonDebug {
    std::vector<std::pair<double, double>> darts;  // accepted (row, col) darts, pre fix-up
    double slope = 0.0;
    long pre_fixup_count = 0;  // distinct pixels before the cardinality fix-up
};

// Bridson dart throwing with a radius growing linearly in distance from DC.
// The density slope is found by binary search so the dart count lands within
// 1% of floor(factor*M*N); exact cardinality is then enforced by weighted
// random insertion (short) or removal (over). Throws BracketError when no
// slope can bracket the target count.
BinaryMask gen_poisson_variable_density(int height, int width, double factor, double r0,
                                        std::uint64_t seed, PoissonDebug* debug = nullptr);

}  // namespace ksopt
