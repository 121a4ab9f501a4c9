#pragma once

#include <vector>

#include "ksopt/types.hpp"

namespace ksopt {

enum class Regularizer { identity, first_difference };

struct ReconConfig {
    enum class Kind { zero_filled, regularized_ls };
    Kind kind = Kind::zero_filled;
    double lambda = 0.0;
    Regularizer regularizer = Regularizer::identity;
    int cg_max_iters = 200;
    double cg_tol = 1e-10;
};

KSpace2D undersample(const KSpace2D& k, const BinaryMask& mask);

// magnitude(ifft2_centered(y_u)); linear in the mask, the surrogate the
// pattern optimizer differentiates through.
Image2D zero_filled(const KSpace2D& y_u);

struct CgReport {
    int iters = 0;
    double rel_residual = 0.0;
    bool converged = true;
    std::vector<double> objective;  // value of the LS objective per iteration
};

// argmin_x ||M (F x) - y_u||^2 + lambda ||G x||^2 over complex x, returned as
// magnitude. Identity regularizer uses the per-coefficient closed form;
// first differences (periodic boundary) solve by conjugate gradient.
Image2D regularized_ls(const KSpace2D& y_u, const BinaryMask& mask, const ReconConfig& cfg,
                       CgReport* report = nullptr);

// Generic CG path regardless of regularizer (the identity case has a closed
// form; this entry point exists so the two can be cross-checked).
Image2D regularized_ls_cg(const KSpace2D& y_u, const BinaryMask& mask, double lambda,
                          Regularizer reg, int max_iters, double tol, CgReport* report = nullptr);

Image2D reconstruct(const KSpace2D& y_u, const BinaryMask& mask, const ReconConfig& cfg,
                    CgReport* report = nullptr);

}  // namespace ksopt
