#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ksopt/dataio.hpp"
#include "ksopt/experiment.hpp"
#include "ksopt/fourier.hpp"
#include "ksopt/metrics.hpp"
#include "ksopt/motion.hpp"
#include "ksopt/optimizer.hpp"
#include "ksopt/patterns.hpp"
#include "ksopt/probmask.hpp"
#include "ksopt/recon.hpp"
#include "ksopt/translator.hpp"

namespace py = pybind11;
using namespace ksopt;

namespace {

template <class GridT, class Scalar>
GridT grid_from_numpy(const py::array_t<Scalar, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    GridT g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + g.size(), g.data.begin());
    return g;
}

template <class Scalar, class GridT>
py::array_t<Scalar> grid_to_numpy(const GridT& g) {
    py::array_t<Scalar> out({g.height, g.width});
    std::copy(g.data.begin(), g.data.end(), out.mutable_data());
    return out;
}

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image2D image_from(const RealArray& a) { return grid_from_numpy<Image2D>(a); }

BinaryMask mask_from(const ByteArray& a) {
    BinaryMask m = grid_from_numpy<BinaryMask>(a);
    m.factor = static_cast<double>(count_ones(m)) / static_cast<double>(m.size());
    return m;
}

ProbMask prob_from(const RealArray& a, double factor) {
    ProbMask p = grid_from_numpy<ProbMask>(a);
    p.target_factor = factor;
    return p;
}

std::vector<Image2D> stack_from(const RealArray& a) {
    if (a.ndim() != 3) throw py::value_error("expected an (n, h, w) array");
    std::vector<Image2D> out;
    const int n = static_cast<int>(a.shape(0));
    const int h = static_cast<int>(a.shape(1));
    const int w = static_cast<int>(a.shape(2));
    for (int i = 0; i < n; ++i) {
        Image2D img(h, w);
        std::copy(a.data() + static_cast<std::size_t>(i) * h * w,
                  a.data() + static_cast<std::size_t>(i + 1) * h * w, img.data.begin());
        out.push_back(std::move(img));
    }
    return out;
}

PairedSliceSet paired_from_stacks(const RealArray& reference, const RealArray& target) {
    return make_paired_set(stack_from(reference), stack_from(target));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Residual-guided k-space under-sampling pattern optimization";

    py::register_exception<DegenerateMassError>(m, "DegenerateMassError");

    // fourier
    m.def("fft2c", [](const ComplexArray& a) {
        return grid_to_numpy<cplx>(fft2_centered(grid_from_numpy<ComplexImage2D>(a)));
    }, py::arg("image"), "Centered unitary 2-D FFT");
    m.def("ifft2c", [](const ComplexArray& a) {
        return grid_to_numpy<cplx>(ifft2_centered(grid_from_numpy<KSpace2D>(a)));
    }, py::arg("kspace"), "Centered unitary 2-D inverse FFT");

    // patterns
    m.def("gen_gaussian_1d", [](int height, int width, double factor, double sigma_rows,
                                std::uint64_t seed) {
        return grid_to_numpy<std::uint8_t>(gen_gaussian_1d(height, width, factor, sigma_rows, seed));
    }, py::arg("height"), py::arg("width"), py::arg("factor"), py::arg("sigma_rows"), py::arg("seed") = 0);
    m.def("gen_center", [](int height, int width, double factor) {
        return grid_to_numpy<std::uint8_t>(gen_center(height, width, factor));
    }, py::arg("height"), py::arg("width"), py::arg("factor"));
    m.def("gen_poisson", [](int height, int width, double factor, double r0, std::uint64_t seed) {
        return grid_to_numpy<std::uint8_t>(gen_poisson_variable_density(height, width, factor, r0, seed));
    }, py::arg("height"), py::arg("width"), py::arg("factor"), py::arg("r0") = 1.0, py::arg("seed") = 0);

    // probabilistic masks
    m.def("adjusted_mass", [](const RealArray& w, const RealArray& r) {
        return grid_to_numpy<double>(
            adjusted_mass(grid_from_numpy<WeightMap>(w), grid_from_numpy<ResidualMap>(r)));
    }, py::arg("weights"), py::arg("residual_norm"));
    m.def("scale_to_factor", [](const RealArray& mass, double factor) {
        return grid_to_numpy<double>(scale_to_factor(grid_from_numpy<RealGrid>(mass), factor));
    }, py::arg("mass"), py::arg("factor"));
    m.def("soft_binarize", [](const RealArray& p, const RealArray& th, double sigma_p, double factor) {
        return grid_to_numpy<double>(
            soft_binarize(prob_from(p, factor), grid_from_numpy<ThresholdMatrix>(th), sigma_p));
    }, py::arg("prob"), py::arg("threshold"), py::arg("sigma_p") = 5.0, py::arg("factor") = 0.0);
    m.def("make_threshold", [](int height, int width, std::uint64_t seed) {
        return grid_to_numpy<double>(make_threshold(height, width, seed));
    }, py::arg("height"), py::arg("width"), py::arg("seed") = 0);
    m.def("bernoulli_realize", [](const RealArray& p, std::uint64_t seed) {
        return grid_to_numpy<std::uint8_t>(bernoulli_realize(prob_from(p, 0.0), seed));
    }, py::arg("prob"), py::arg("seed") = 0);
    m.def("topk_extract", [](const RealArray& p, double factor) {
        return grid_to_numpy<std::uint8_t>(topk_extract(prob_from(p, factor), factor));
    }, py::arg("prob"), py::arg("factor"));

    // recon
    m.def("zero_filled", [](const ComplexArray& k) {
        return grid_to_numpy<double>(zero_filled(grid_from_numpy<KSpace2D>(k)));
    }, py::arg("kspace"));
    m.def("undersample", [](const ComplexArray& k, const ByteArray& mask) {
        return grid_to_numpy<cplx>(undersample(grid_from_numpy<KSpace2D>(k), mask_from(mask)));
    }, py::arg("kspace"), py::arg("mask"));
    m.def("regularized_ls", [](const ComplexArray& k, const ByteArray& mask, double lambda,
                               const std::string& regularizer, int cg_max_iters, double cg_tol) {
        ReconConfig cfg;
        cfg.kind = ReconConfig::Kind::regularized_ls;
        cfg.lambda = lambda;
        cfg.regularizer = regularizer == "first_difference" ? Regularizer::first_difference
                                                            : Regularizer::identity;
        cfg.cg_max_iters = cg_max_iters;
        cfg.cg_tol = cg_tol;
        return grid_to_numpy<double>(regularized_ls(grid_from_numpy<KSpace2D>(k), mask_from(mask), cfg));
    }, py::arg("kspace"), py::arg("mask"), py::arg("lambda_") = 0.0,
       py::arg("regularizer") = "identity", py::arg("cg_max_iters") = 200, py::arg("cg_tol") = 1e-10);

    // metrics
    m.def("psnr", [](const RealArray& ref, const RealArray& rec, bool standard_peak) {
        return psnr(image_from(ref), image_from(rec), standard_peak);
    }, py::arg("reference"), py::arg("reconstruction"), py::arg("standard_peak") = false);
    m.def("ssim", [](const RealArray& ref, const RealArray& rec) {
        return ssim(image_from(ref), image_from(rec));
    }, py::arg("reference"), py::arg("reconstruction"));

    // motion
    m.def("sample_rigid", [](std::uint64_t seed, double t_bound, double r_bound) {
        RigidTransform t = sample_rigid(seed, t_bound, r_bound);
        return py::make_tuple(t.dx, t.dy, t.theta_deg);
    }, py::arg("seed"), py::arg("t_bound") = 5.0, py::arg("r_bound") = 5.0);
    m.def("apply_rigid", [](const RealArray& img, double dx, double dy, double theta_deg) {
        return grid_to_numpy<double>(apply_rigid(image_from(img), RigidTransform{dx, dy, theta_deg}));
    }, py::arg("image"), py::arg("dx"), py::arg("dy"), py::arg("theta_deg"));

    // translator
    py::class_<TranslatorModel>(m, "Translator")
        .def_static("identity", [] {
            TranslatorModel t;
            t.kind = TranslatorKind::identity;
            return t;
        })
        .def_static("fit_lut", [](const RealArray& reference, const RealArray& target, int bins) {
            return fit_intensity_lut(paired_from_stacks(reference, target), bins);
        }, py::arg("reference"), py::arg("target"), py::arg("bins") = 256)
        .def_static("fit_ridge", [](const RealArray& reference, const RealArray& target, int k,
                                    double lambda, long max_samples, std::uint64_t seed) {
            return fit_patch_ridge(paired_from_stacks(reference, target), k, lambda, max_samples, seed);
        }, py::arg("reference"), py::arg("target"), py::arg("k") = 5, py::arg("lambda_") = 1e-3,
           py::arg("max_samples") = 200000, py::arg("seed") = 0)
        .def_static("load", &load_translator, py::arg("path"))
        .def("save", &save_translator, py::arg("path"))
        .def("translate", [](const TranslatorModel& t, const RealArray& prev, const RealArray& center,
                             const RealArray& next) {
            return grid_to_numpy<double>(
                translate(t, image_from(prev), image_from(center), image_from(next)));
        }, py::arg("prev"), py::arg("center"), py::arg("next"))
        .def("residual_map", [](const TranslatorModel& t, const RealArray& reference,
                                const RealArray& target) {
            return grid_to_numpy<double>(residual_map(t, paired_from_stacks(reference, target)));
        }, py::arg("reference"), py::arg("target"))
        .def_property_readonly("summary", [](const TranslatorModel& t) { return t.summary; });

    m.def("normalize_residual", [](const RealArray& r) {
        NormalizedResidual n = normalize_residual(grid_from_numpy<ResidualMap>(r));
        return py::make_tuple(grid_to_numpy<double>(n.map), n.degenerate);
    }, py::arg("residual"), "Returns (normalized, degenerate_flag)");

    // optimizer
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("factor", &TrainConfig::factor)
        .def_readwrite("sigma_p", &TrainConfig::sigma_p)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("epsilon", &TrainConfig::epsilon)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("min_epochs", &TrainConfig::min_epochs)
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("seed", &TrainConfig::seed);

    m.def("init_weights", [](int height, int width, std::uint64_t seed) {
        return grid_to_numpy<double>(init_weights(height, width, seed));
    }, py::arg("height"), py::arg("width"), py::arg("seed") = 0);

    m.def("train", [](const RealArray& train_stack, const RealArray& val_stack,
                      const RealArray& residual_norm, const TrainConfig& cfg) {
        TrainResult res = train(stack_from(train_stack), stack_from(val_stack),
                                grid_from_numpy<ResidualMap>(residual_norm), cfg);
        py::list log;
        for (const auto& e : res.log.epochs)
            log.append(py::dict(py::arg("epoch") = e.epoch, py::arg("train_loss") = e.train_loss,
                                py::arg("val_loss") = e.val_loss, py::arg("mean_p") = e.mean_p,
                                py::arg("improved") = e.improved));
        return py::make_tuple(grid_to_numpy<double>(res.best_mask),
                              grid_to_numpy<double>(res.state.w), log);
    }, py::arg("train_images"), py::arg("val_images"), py::arg("residual_norm"), py::arg("config"),
       "Joint refinement; returns (best_prob_mask, final_weights, epoch_log)");

    // phantom data
    m.def("gen_phantom_pairs", [](int n_subjects, int slices_per, int size, std::uint64_t seed) {
        auto subjects = gen_phantom_pairs(n_subjects, slices_per, size, seed);
        py::array_t<double> a({n_subjects, slices_per, size, size});
        py::array_t<double> b({n_subjects, slices_per, size, size});
        const std::size_t per = static_cast<std::size_t>(slices_per) * size * size;
        for (int s = 0; s < n_subjects; ++s) {
            std::copy(subjects[static_cast<std::size_t>(s)].modality_a.data.begin(),
                      subjects[static_cast<std::size_t>(s)].modality_a.data.end(),
                      a.mutable_data() + static_cast<std::size_t>(s) * per);
            std::copy(subjects[static_cast<std::size_t>(s)].modality_b.data.begin(),
                      subjects[static_cast<std::size_t>(s)].modality_b.data.end(),
                      b.mutable_data() + static_cast<std::size_t>(s) * per);
        }
        return py::make_tuple(a, b);
    }, py::arg("n_subjects"), py::arg("slices_per"), py::arg("size"), py::arg("seed") = 0,
       "Returns (reference, target) arrays shaped (subjects, slices, size, size)");
}
