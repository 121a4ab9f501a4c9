#pragma once

#include <cstdint>

#include "ksopt/types.hpp"

namespace ksopt {

// In-plane rigid motion. Translations are in pixels (1 px = 1 mm for
// isotropic 1 mm data); theta_deg rotates from the +column axis toward the
// +row axis about the image center.
struct RigidTransform {
    double dx = 0.0;  // columns
    double dy = 0.0;  // rows
    double theta_deg = 0.0;
};

RigidTransform sample_rigid(std::uint64_t seed, double t_bound = 5.0, double r_bound = 5.0);

// Translate, then rotate about the image center; bilinear interpolation with
// zero fill outside the source domain.
Image2D apply_rigid(const Image2D& img, const RigidTransform& t);

}  // namespace ksopt
