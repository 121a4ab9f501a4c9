#include "ksopt/motion.hpp"

#include <cmath>

#include "ksopt/rng.hpp"

namespace ksopt {

RigidTransform sample_rigid(std::uint64_t seed, double t_bound, double r_bound) {
    if (t_bound < 0.0 || r_bound < 0.0)
        throw std::invalid_argument("sample_rigid: bounds must be nonnegative");
    Rng rng(seed);
    RigidTransform t;
    t.dx = rng.uniform(-t_bound, t_bound);
    t.dy = rng.uniform(-t_bound, t_bound);
    t.theta_deg = rng.uniform(-r_bound, r_bound);
    return t;
}

Image2D apply_rigid(const Image2D& img, const RigidTransform& t) {
    Image2D out(img.height, img.width);
    const double cy = 0.5 * (img.height - 1);
    const double cx = 0.5 * (img.width - 1);
    const double rad = t.theta_deg * M_PI / 180.0;
    const double ct = std::cos(rad), st = std::sin(rad);

    // Forward map is translate-then-rotate; sample the inverse per output pixel:
    // src = R(-theta) * (dst - c) + c - (dy, dx).
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double qy = r - cy, qx = c - cx;
            double sy = -st * qx + ct * qy + cy - t.dy;
            double sx = ct * qx + st * qy + cx - t.dx;

            int r0 = static_cast<int>(std::floor(sy));
            int c0 = static_cast<int>(std::floor(sx));
            double fy = sy - r0, fx = sx - c0;
            double acc = 0.0;
            for (int dr = 0; dr <= 1; ++dr) {
                for (int dc = 0; dc <= 1; ++dc) {
                    int rr = r0 + dr, cc = c0 + dc;
                    if (rr < 0 || rr >= img.height || cc < 0 || cc >= img.width) continue;
                    double wgt = (dr ? fy : 1.0 - fy) * (dc ? fx : 1.0 - fx);
                    acc += wgt * img.at(rr, cc);
                }
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

}  // namespace ksopt
