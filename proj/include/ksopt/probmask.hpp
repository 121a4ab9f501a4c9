#pragma once

#include <cstdint>

#include "ksopt/types.hpp"

namespace ksopt {

// m = ReLU(clip(w, -1, 1) + r_norm). r_norm is expected to be min-max
// normalized already (see normalize_residual).
RealGrid adjusted_mass(const WeightMap& w, const ResidualMap& r_norm);

// P = factor * m / mean(m). mean(P) == factor exactly; values may exceed 1.
// Throws DegenerateMassError when mean(m) == 0.
ProbMask scale_to_factor(const RealGrid& m, double factor);

// Elementwise logistic of sigma_p * (P - th); differentiable relaxation of
// the Bernoulli threshold test.
RealGrid soft_binarize(const ProbMask& p, const ThresholdMatrix& th, double sigma_p);

// Uniform [0, 1) threshold matrix, deterministic per seed.
ThresholdMatrix make_threshold(int height, int width, std::uint64_t seed);

// Independent per-pixel Bernoulli with success probability min(P, 1).
BinaryMask bernoulli_realize(const ProbMask& p, std::uint64_t seed);

// Deterministic inference-time extraction: the floor(factor*M*N) pixels with
// the largest P, ties broken by distance to DC then row-major index.
BinaryMask topk_extract(const ProbMask& p, double factor);

}  // namespace ksopt
