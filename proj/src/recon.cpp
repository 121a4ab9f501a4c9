#include "ksopt/recon.hpp"

#include <cmath>

#include "ksopt/fourier.hpp"

namespace ksopt {

KSpace2D undersample(const KSpace2D& k, const BinaryMask& mask) {
    require_same_shape(k, mask, "undersample");
    KSpace2D out(k.height, k.width);
    for (std::size_t i = 0; i < k.size(); ++i)
        out.data[i] = mask.data[i] ? k.data[i] : cplx(0.0, 0.0);
    return out;
}

Image2D zero_filled(const KSpace2D& y_u) { return magnitude(ifft2_centered(y_u)); }

namespace {

using CVec = std::vector<cplx>;

// lambda * (Dh^T Dh + Dv^T Dv) x with periodic forward differences; this is a
// (negated) 5-point Laplacian.
void add_diff_term(const CVec& x, double lambda, int h, int w, CVec& out) {
    for (int r = 0; r < h; ++r) {
        int rp = (r + 1) % h, rm = (r - 1 + h) % h;
        for (int c = 0; c < w; ++c) {
            int cp = (c + 1) % w, cm = (c - 1 + w) % w;
            std::size_t i = static_cast<std::size_t>(r) * w + c;
            cplx lap = 4.0 * x[i] - x[static_cast<std::size_t>(rp) * w + c] -
                       x[static_cast<std::size_t>(rm) * w + c] -
                       x[static_cast<std::size_t>(r) * w + cp] -
                       x[static_cast<std::size_t>(r) * w + cm];
            out[i] += lambda * lap;
        }
    }
}

double reg_energy(const CVec& x, Regularizer reg, int h, int w) {
    if (reg == Regularizer::identity) {
        double e = 0.0;
        for (const auto& v : x) e += std::norm(v);
        return e;
    }
    double e = 0.0;
    for (int r = 0; r < h; ++r) {
        int rp = (r + 1) % h;
        for (int c = 0; c < w; ++c) {
            int cp = (c + 1) % w;
            std::size_t i = static_cast<std::size_t>(r) * w + c;
            e += std::norm(x[static_cast<std::size_t>(rp) * w + c] - x[i]);
            e += std::norm(x[static_cast<std::size_t>(r) * w + cp] - x[i]);
        }
    }
    return e;
}

}  // namespace

Image2D regularized_ls_cg(const KSpace2D& y_u, const BinaryMask& mask, double lambda,
                          Regularizer reg, int max_iters, double tol, CgReport* report) {
    require_same_shape(y_u, mask, "regularized_ls");
    const int h = y_u.height, w = y_u.width;
    const std::size_t n = y_u.size();

    auto apply = [&](const CVec& x) {
        ComplexImage2D xi(h, w);
        xi.data = x;
        KSpace2D fx = fft2_centered(xi);
        for (std::size_t i = 0; i < n; ++i)
            if (!mask.data[i]) fx.data[i] = cplx(0.0, 0.0);
        CVec out = ifft2_centered(fx).data;
        if (lambda > 0.0) {
            if (reg == Regularizer::identity) {
                for (std::size_t i = 0; i < n; ++i) out[i] += lambda * x[i];
            } else {
                add_diff_term(x, lambda, h, w, out);
            }
        }
        return out;
    };

    auto objective = [&](const CVec& x) {
        ComplexImage2D xi(h, w);
        xi.data = x;
        KSpace2D fx = fft2_centered(xi);
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cplx d = (mask.data[i] ? fx.data[i] : cplx(0.0, 0.0)) - (mask.data[i] ? y_u.data[i] : cplx(0.0, 0.0));
            e += std::norm(d);
        }
        return e + lambda * reg_energy(x, reg, h, w);
    };

    // b = F^H M y_u
    KSpace2D masked = undersample(y_u, mask);
    CVec b = ifft2_centered(masked).data;

    CVec x(n, cplx(0.0, 0.0));
    CVec r = b;  // residual for x = 0
    CVec p = r;
    auto dot_rr = [&](const CVec& a) {
        double acc = 0.0;
        for (const auto& v : a) acc += std::norm(v);
        return acc;
    };
    double rr = dot_rr(r);
    const double b_norm = std::sqrt(dot_rr(b));
    CgReport rep;
    rep.objective.push_back(objective(x));
    int iter = 0;
    if (b_norm > 0.0) {
        for (; iter < max_iters; ++iter) {
            if (std::sqrt(rr) / b_norm <= tol) break;
            CVec ap = apply(p);
            cplx pap(0.0, 0.0);
            for (std::size_t i = 0; i < n; ++i) pap += std::conj(p[i]) * ap[i];
            if (pap.real() <= 0.0) break;  // search direction hit the null space
            double alpha = rr / pap.real();
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            double rr_new = dot_rr(r);
            double beta = rr_new / rr;
            rr = rr_new;
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
            rep.objective.push_back(objective(x));
        }
    }
    rep.iters = iter;
    rep.rel_residual = b_norm > 0.0 ? std::sqrt(rr) / b_norm : 0.0;
    rep.converged = rep.rel_residual <= tol;
    if (report) *report = rep;

    ComplexImage2D xi(h, w);
    xi.data = x;
    return magnitude(xi);
}

Image2D regularized_ls(const KSpace2D& y_u, const BinaryMask& mask, const ReconConfig& cfg,
                       CgReport* report) {
    require_same_shape(y_u, mask, "regularized_ls");
    if (cfg.regularizer == Regularizer::identity) {
        // Per-coefficient closed form: X = y_u / (1 + lambda) on sampled
        // positions, 0 elsewhere.
        KSpace2D x(y_u.height, y_u.width);
        const double s = 1.0 / (1.0 + cfg.lambda);
        for (std::size_t i = 0; i < y_u.size(); ++i)
            x.data[i] = mask.data[i] ? y_u.data[i] * s : cplx(0.0, 0.0);
        if (report) *report = CgReport{};
        return magnitude(ifft2_centered(x));
    }
    return regularized_ls_cg(y_u, mask, cfg.lambda, cfg.regularizer, cfg.cg_max_iters, cfg.cg_tol,
                             report);
}

Image2D reconstruct(const KSpace2D& y_u, const BinaryMask& mask, const ReconConfig& cfg,
                    CgReport* report) {
    if (cfg.kind == ReconConfig::Kind::zero_filled) return zero_filled(undersample(y_u, mask));
    return regularized_ls(y_u, mask, cfg, report);
}

}  // namespace ksopt
