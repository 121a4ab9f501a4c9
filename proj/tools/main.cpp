#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "ksopt/dataio.hpp"
#include "ksopt/experiment.hpp"
#include "ksopt/fourier.hpp"
#include "ksopt/metrics.hpp"
#include "ksopt/motion.hpp"
#include "ksopt/optimizer.hpp"
#include "ksopt/patterns.hpp"
#include "ksopt/probmask.hpp"
#include "ksopt/recon.hpp"
#include "ksopt/rng.hpp"
#include "ksopt/translator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ksopt;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error(what), stage(std::move(stage_name)) {}
};

std::string default_out_dir() {
    const char* env = std::getenv("KSOPT_OUT_DIR");
    return env ? std::string(env) : std::string(".");
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

void export_realgrid_pgm(const Grid2D<double>& g, const std::string& path) {
    ProbMask p(g.height, g.width);
    p.data = g.data;
    export_probmask_pgm(p, path);
}

// Complex volume on disk: little-endian float32 (re, im) pairs, slice-major.
void save_complex_volume(const std::vector<KSpace2D>& slices, const std::string& path) {
    if (slices.empty()) throw IoError("no slices to write");
    Volume packed(static_cast<int>(slices.size()), slices[0].height, 2 * slices[0].width);
    for (std::size_t s = 0; s < slices.size(); ++s)
        for (int r = 0; r < slices[s].height; ++r)
            for (int c = 0; c < slices[s].width; ++c) {
                packed.at(static_cast<int>(s), r, 2 * c) = slices[s].at(r, c).real();
                packed.at(static_cast<int>(s), r, 2 * c + 1) = slices[s].at(r, c).imag();
            }
    save_volume(packed, path);
}

std::vector<KSpace2D> load_complex_volume(const std::string& path, int slices, int height, int width) {
    Volume packed = load_volume(path, slices, height, 2 * width);
    std::vector<KSpace2D> out;
    for (int s = 0; s < slices; ++s) {
        KSpace2D k(height, width);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                k.at(r, c) = cplx(packed.at(s, r, 2 * c), packed.at(s, r, 2 * c + 1));
        out.push_back(std::move(k));
    }
    return out;
}

json report_to_json(const MetricReport& rep) {
    return json{{"psnr_mean", rep.psnr_mean},
                {"psnr_std", rep.psnr_std},
                {"ssim_mean", rep.ssim_mean},
                {"ssim_std", rep.ssim_std},
                {"finite_count", rep.finite_count},
                {"infinite_count", rep.infinite_count}};
}

void append_csv_rows(std::ofstream& csv, const std::string& pattern, const MetricReport& rep) {
    char line[160];
    for (std::size_t i = 0; i < rep.psnr_values.size(); ++i) {
        if (std::isinf(rep.psnr_values[i]))
            std::snprintf(line, sizeof(line), "%s,%zu,inf,%.12g\n", pattern.c_str(), i,
                          rep.ssim_values[i]);
        else
            std::snprintf(line, sizeof(line), "%s,%zu,%.12g,%.12g\n", pattern.c_str(), i,
                          rep.psnr_values[i], rep.ssim_values[i]);
        csv << line;
    }
}

TranslatorKind parse_translator_kind(const std::string& name) {
    if (name == "identity") return TranslatorKind::identity;
    if (name == "lut") return TranslatorKind::intensity_lut;
    if (name == "ridge") return TranslatorKind::patch_ridge;
    if (name == "external") return TranslatorKind::external;
    throw CLI::ValidationError("--translator", "unknown translator kind '" + name + "'");
}

ReconConfig::Kind parse_recon_kind(const std::string& name) {
    if (name == "zero_filled") return ReconConfig::Kind::zero_filled;
    if (name == "regularized_ls") return ReconConfig::Kind::regularized_ls;
    throw CLI::ValidationError("--recon", "unknown reconstruction kind '" + name + "'");
}

Regularizer parse_regularizer(const std::string& name) {
    if (name == "identity") return Regularizer::identity;
    if (name == "first_difference") return Regularizer::first_difference;
    throw CLI::ValidationError("--regularizer", "unknown regularizer '" + name + "'");
}

// Shared dataset options: manifest + modality tags + split + crop.
struct DatasetArgs {
    std::string manifest_path;
    std::string reference_tag = "A";
    std::string target_tag = "B";
    std::uint64_t split_seed = 0;
    int crop = 0;  // 0 -> min(192, slice dims)

    void attach(CLI::App* cmd) {
        cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
        cmd->add_option("--reference", reference_tag, "Reference (fully sampled) modality tag");
        cmd->add_option("--target", target_tag, "Target (accelerated) modality tag");
        cmd->add_option("--split-seed", split_seed, "Subject split seed");
        cmd->add_option("--crop", crop, "Center-crop size (0 = min(192, dims))");
    }

    std::pair<std::vector<SubjectSlices>, SplitSpec> load() const {
        Manifest manifest = load_manifest(manifest_path);
        int use_crop = crop;
        if (use_crop == 0) {
            use_crop = 192;
            for (const auto& s : manifest.subjects)
                for (const auto& [tag, info] : s.volumes)
                    use_crop = std::min({use_crop, info.height, info.width});
        }
        auto subjects = load_subject_slices(manifest, reference_tag, target_tag, use_crop);
        SplitSpec split = split_subjects(manifest, split_seed);
        return {std::move(subjects), std::move(split)};
    }
};

int cmd_gen_phantom(const std::string& out_dir, int subjects, int slices, int size,
                    std::uint64_t seed) {
    std::cout << "gen-phantom seed=" << seed << "\n";
    auto phantoms = gen_phantom_pairs(subjects, slices, size, seed);
    Manifest m = write_phantom_dataset(phantoms, out_dir);
    std::cout << "wrote " << m.subjects.size() << " subjects to " << out_dir << "\n";
    return 0;
}

int cmd_generate_pattern(const std::string& kind, int height, int width, double factor,
                         std::uint64_t seed, double sigma_rows, double r0,
                         const std::string& checkpoint, const std::string& out_path) {
    if (factor <= 0.0 || factor > 1.0)
        throw CLI::ValidationError("--r", "under-sampling factor must be in (0, 1]");
    std::cout << "generate-pattern seed=" << seed << "\n";
    BinaryMask mask(1, 1);
    if (kind == "gaussian1d") {
        double sigma = sigma_rows > 0.0 ? sigma_rows : height / 6.0;
        mask = gen_gaussian_1d(height, width, factor, sigma, seed);
    } else if (kind == "center") {
        mask = gen_center(height, width, factor);
    } else if (kind == "poisson") {
        mask = gen_poisson_variable_density(height, width, factor, r0, seed);
    } else if (kind == "learned") {
        if (checkpoint.empty())
            throw CLI::ValidationError("--checkpoint", "learned patterns need a checkpoint");
        Checkpoint ck = load_checkpoint(checkpoint);
        if (ck.state.best_mask.height == 0)
            throw StageError("extract", "checkpoint has no best-validation snapshot");
        mask = topk_extract(ck.state.best_mask, factor > 0.0 ? factor : ck.cfg.factor);
    } else {
        throw CLI::ValidationError("--kind", "unknown pattern kind '" + kind + "'");
    }
    export_mask_pgm(mask, out_path);
    json sidecar{{"kind", kind},
                 {"factor_requested", factor},
                 {"factor_achieved", mask.factor},
                 {"ones", count_ones(mask)},
                 {"height", mask.height},
                 {"width", mask.width},
                 {"seed", seed}};
    write_json(sidecar, out_path + ".json");
    std::cout << "wrote " << out_path << " (" << count_ones(mask) << " ones)\n";
    return 0;
}

PairedSliceSet pairs_for_split(const std::vector<SubjectSlices>& subjects, const SplitSpec& split,
                               Split which) {
    DatasetSplit all = split_dataset(subjects, split);
    switch (which) {
        case Split::train: return all.train_pairs;
        case Split::validation: return all.val_pairs;
        case Split::test: return all.test_pairs;
    }
    return {};
}

int cmd_fit_translator(const DatasetArgs& data_args, const std::string& kind, int bins, int patch,
                       double lambda, long max_samples, std::uint64_t seed,
                       const std::string& out_path) {
    std::cout << "fit-translator seed=" << seed << "\n";
    auto [subjects, split] = data_args.load();
    PairedSliceSet train_pairs = pairs_for_split(subjects, split, Split::train);
    TranslatorModel model;
    TranslatorKind tk = parse_translator_kind(kind);
    if (tk == TranslatorKind::identity) {
        model.kind = TranslatorKind::identity;
    } else if (tk == TranslatorKind::intensity_lut) {
        model = fit_intensity_lut(train_pairs, bins);
    } else if (tk == TranslatorKind::patch_ridge) {
        model = fit_patch_ridge(train_pairs, patch, lambda, max_samples, seed);
    } else {
        throw CLI::ValidationError("--kind", "external translators are declared, not fitted");
    }
    save_translator(model, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_residual(const DatasetArgs& data_args, const std::string& model_path,
                 const std::string& out_dir) {
    std::cout << "residual split-seed=" << data_args.split_seed << "\n";
    auto [subjects, split] = data_args.load();
    PairedSliceSet val_pairs = pairs_for_split(subjects, split, Split::validation);
    TranslatorModel model = load_translator(model_path);
    ResidualMap r = residual_map(model, val_pairs);
    NormalizedResidual norm = normalize_residual(r);

    fs::create_directories(out_dir);
    Volume raw(1, r.height, r.width);
    raw.data = r.data;
    save_volume(raw, (fs::path(out_dir) / "residual.raw").string());
    Volume raw_norm(1, r.height, r.width);
    raw_norm.data = norm.map.data;
    save_volume(raw_norm, (fs::path(out_dir) / "residual_norm.raw").string());
    export_realgrid_pgm(norm.map, (fs::path(out_dir) / "residual.pgm").string());
    json sidecar{{"height", r.height},
                 {"width", r.width},
                 {"slices", val_pairs.size()},
                 {"degenerate", norm.degenerate}};
    write_json(sidecar, (fs::path(out_dir) / "residual.json").string());
    if (norm.degenerate)
        std::cerr << "warning: residual map is constant; downstream runs substitute a uniform prior\n";
    std::cout << "wrote residual maps to " << out_dir << "\n";
    return 0;
}

int cmd_optimize(const DatasetArgs& data_args, const std::string& residual_path,
                 const std::string& model_path, double factor, TrainConfig train_cfg,
                 const std::string& checkpoint_path, bool resume, const std::string& out_dir) {
    if (factor <= 0.0 || factor > 1.0)
        throw CLI::ValidationError("--r", "under-sampling factor must be in (0, 1]");
    if (residual_path.empty() && model_path.empty())
        throw CLI::ValidationError("--residual", "need --residual or --model");
    std::cout << "optimize seed=" << train_cfg.seed << "\n";
    auto [subjects, split] = data_args.load();
    DatasetSplit data = split_dataset(subjects, split);

    ResidualMap prior(1, 1);
    if (!residual_path.empty()) {
        const int h = data.train_targets.front().height, w = data.train_targets.front().width;
        Volume raw = load_volume(residual_path, 1, h, w);
        prior = ResidualMap(h, w);
        prior.data = raw.data;
    } else {
        TranslatorModel model = load_translator(model_path);
        ResidualMap r = residual_map(model, data.val_pairs);
        NormalizedResidual norm = normalize_residual(r);
        if (norm.degenerate) {
            std::cerr << "warning: degenerate residual; using the uniform prior\n";
            prior = ResidualMap(r.height, r.width);
            std::fill(prior.data.begin(), prior.data.end(), 0.5);
        } else {
            prior = norm.map;
        }
    }

    train_cfg.factor = factor;
    std::optional<TrainState> resume_state;
    if (resume) {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        resume_state = ck.state;
    }
    TrainResult res = train(data.train_targets, data.val_targets, prior, train_cfg,
                            resume_state ? &*resume_state : nullptr);
    save_checkpoint(res.state, train_cfg, checkpoint_path);

    fs::create_directories(out_dir);
    BinaryMask mask = topk_extract(res.best_mask, factor);
    export_mask_pgm(mask, (fs::path(out_dir) / "learned_mask.pgm").string());
    export_probmask_pgm(res.best_mask, (fs::path(out_dir) / "learned_prob.pgm").string());
    std::ofstream log((fs::path(out_dir) / "train_log.csv").string());
    log << "epoch,train_loss,val_loss,mean_p,improved\n";
    for (const auto& e : res.log.epochs) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g,%d\n", e.epoch, e.train_loss,
                      e.val_loss, e.mean_p, e.improved ? 1 : 0);
        log << line;
    }
    std::cout << "best validation loss " << res.state.best_val << " after " << res.state.epoch
              << " epochs; checkpoint " << checkpoint_path << "\n";
    return 0;
}

int cmd_undersample(const std::string& volume_path, int slices, int height, int width,
                    const std::string& mask_path, const std::string& out_path) {
    Volume v = load_volume(volume_path, slices, height, width);
    BinaryMask mask = load_mask_pgm(mask_path);
    if (mask.height != height || mask.width != width)
        throw StageError("undersample", "mask dims do not match the volume slices");
    std::vector<KSpace2D> out;
    for (int s = 0; s < slices; ++s)
        out.push_back(undersample(fft2_centered(v.slice(s)), mask));
    save_complex_volume(out, out_path);
    std::cout << "wrote under-sampled k-space to " << out_path << "\n";
    return 0;
}

int cmd_reconstruct(const std::string& kspace_path, int slices, int height, int width,
                    const std::string& mask_path, const ReconConfig& recon,
                    const std::string& out_path) {
    auto ks = load_complex_volume(kspace_path, slices, height, width);
    BinaryMask mask = load_mask_pgm(mask_path);
    if (mask.height != height || mask.width != width)
        throw StageError("reconstruct", "mask dims do not match the k-space slices");
    Volume out(slices, height, width);
    for (int s = 0; s < slices; ++s) out.set_slice(s, reconstruct(ks[static_cast<std::size_t>(s)], mask, recon));
    save_volume(out, out_path);
    std::cout << "wrote reconstruction to " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const DatasetArgs& data_args, const std::string& mask_path,
                 const ReconConfig& recon, bool standard_peak, const std::string& out_dir) {
    std::cout << "evaluate split-seed=" << data_args.split_seed << "\n";
    auto [subjects, split] = data_args.load();
    DatasetSplit data = split_dataset(subjects, split);
    BinaryMask mask = load_mask_pgm(mask_path);
    if (data.test_targets.empty()) throw StageError("evaluate", "empty test split");
    if (mask.height != data.test_targets.front().height ||
        mask.width != data.test_targets.front().width)
        throw StageError("evaluate", "mask dims do not match the test slices");

    std::vector<Image2D> recs;
    for (const auto& img : data.test_targets) {
        KSpace2D y = fft2_centered(img);
        recs.push_back(reconstruct(undersample(y, mask), mask, recon));
    }
    MetricReport rep = evaluate_set(data.test_targets, recs, standard_peak);

    fs::create_directories(out_dir);
    std::ofstream csv((fs::path(out_dir) / "metrics.csv").string());
    csv << "pattern,slice,psnr,ssim\n";
    append_csv_rows(csv, "mask", rep);
    json summary{{"mask", report_to_json(rep)},
                 {"factor", mask.factor},
                 {"split_seed", data_args.split_seed}};
    write_json(summary, (fs::path(out_dir) / "summary.json").string());
    std::cout << "mean PSNR " << rep.psnr_mean << " dB, mean SSIM " << rep.ssim_mean << "\n";
    return 0;
}

int cmd_augment_motion(const std::string& volume_path, int slices, int height, int width,
                       std::uint64_t seed, double t_bound, double r_bound,
                       const std::string& out_path, const std::string& log_path) {
    std::cout << "augment-motion seed=" << seed << "\n";
    Volume v = load_volume(volume_path, slices, height, width);
    Volume out(slices, height, width);
    json log = json::array();
    for (int s = 0; s < slices; ++s) {
        RigidTransform t =
            sample_rigid(derive_seed(seed, 61, static_cast<std::uint64_t>(s)), t_bound, r_bound);
        out.set_slice(s, apply_rigid(v.slice(s), t));
        log.push_back({{"slice", s}, {"dx", t.dx}, {"dy", t.dy}, {"theta_deg", t.theta_deg}});
    }
    save_volume(out, out_path);
    write_json(log, log_path.empty() ? out_path + ".transforms.json" : log_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

struct PipelineArgs {
    DatasetArgs data;
    double factor = 0.25;
    std::string translator = "lut";
    int lut_bins = 256;
    int ridge_patch = 5;
    double ridge_lambda = 1e-3;
    long ridge_max_samples = 200000;
    std::string external_volume;
    int external_slices = 0, external_height = 0, external_width = 0;
    std::string recon_kind = "zero_filled";
    double recon_lambda = 0.0;
    std::string regularizer = "identity";
    std::string baselines = "all";
    bool motion = false;
    double motion_t_bound = 5.0;
    double motion_r_bound = 5.0;
    double sigma_p = 5.0;
    double lr = 2e-4;
    int batch_size = 16;
    int min_epochs = 50;
    int max_epochs = 200;
    int patience = 10;
    double gaussian_sigma_rows = 0.0;
    double poisson_r0 = 1.0;
    int folds = 1;
    std::uint64_t seed = 0;
    std::string out_dir;
};

json pipeline_config_json(const PipelineArgs& a) {
    return json{{"manifest", a.data.manifest_path},
                {"reference", a.data.reference_tag},
                {"target", a.data.target_tag},
                {"split_seed", a.data.split_seed},
                {"crop", a.data.crop},
                {"factor", a.factor},
                {"translator", a.translator},
                {"lut_bins", a.lut_bins},
                {"ridge_patch", a.ridge_patch},
                {"ridge_lambda", a.ridge_lambda},
                {"recon", a.recon_kind},
                {"recon_lambda", a.recon_lambda},
                {"regularizer", a.regularizer},
                {"baselines", a.baselines},
                {"motion", a.motion},
                {"sigma_p", a.sigma_p},
                {"lr", a.lr},
                {"batch_size", a.batch_size},
                {"min_epochs", a.min_epochs},
                {"max_epochs", a.max_epochs},
                {"patience", a.patience},
                {"gaussian_sigma_rows", a.gaussian_sigma_rows},
                {"poisson_r0", a.poisson_r0},
                {"folds", a.folds},
                {"seed", a.seed}};
}

ExperimentConfig experiment_config(const PipelineArgs& a, std::uint64_t fold_seed) {
    ExperimentConfig cfg;
    cfg.factor = a.factor;
    cfg.translator = parse_translator_kind(a.translator);
    cfg.lut_bins = a.lut_bins;
    cfg.ridge_patch = a.ridge_patch;
    cfg.ridge_lambda = a.ridge_lambda;
    cfg.ridge_max_samples = a.ridge_max_samples;
    cfg.external_volume = a.external_volume;
    cfg.external_slices = a.external_slices;
    cfg.external_height = a.external_height;
    cfg.external_width = a.external_width;
    cfg.train.sigma_p = a.sigma_p;
    cfg.train.lr = a.lr;
    cfg.train.batch_size = a.batch_size;
    cfg.train.min_epochs = a.min_epochs;
    cfg.train.max_epochs = a.max_epochs;
    cfg.train.patience = a.patience;
    cfg.recon.kind = parse_recon_kind(a.recon_kind);
    cfg.recon.lambda = a.recon_lambda;
    cfg.recon.regularizer = parse_regularizer(a.regularizer);
    cfg.baselines = a.baselines == "all";
    cfg.gaussian_sigma_rows = a.gaussian_sigma_rows;
    cfg.poisson_r0 = a.poisson_r0;
    cfg.motion = a.motion;
    cfg.motion_t_bound = a.motion_t_bound;
    cfg.motion_r_bound = a.motion_r_bound;
    cfg.seed = fold_seed;
    return cfg;
}

void write_fold_outputs(const ExperimentResult& res, const std::string& dir) {
    fs::create_directories(dir);
    export_realgrid_pgm(res.residual_norm, (fs::path(dir) / "residual.pgm").string());
    export_mask_pgm(res.learned_mask, (fs::path(dir) / "learned_mask.pgm").string());
    export_probmask_pgm(res.learned_prob, (fs::path(dir) / "learned_prob.pgm").string());
    for (const auto& ev : res.evals)
        if (ev.name != "learned")
            export_mask_pgm(ev.mask, (fs::path(dir) / ("mask_" + ev.name + ".pgm")).string());
    if (res.motion_eval)
        export_mask_pgm(res.motion_eval->mask, (fs::path(dir) / "mask_learned_motion.pgm").string());

    std::ofstream csv((fs::path(dir) / "metrics.csv").string());
    csv << "pattern,slice,psnr,ssim\n";
    for (const auto& ev : res.evals) append_csv_rows(csv, ev.name, ev.report);
    if (res.motion_eval) append_csv_rows(csv, res.motion_eval->name, res.motion_eval->report);
}

json fold_summary_json(const ExperimentResult& res) {
    json patterns;
    for (const auto& ev : res.evals) patterns[ev.name] = report_to_json(ev.report);
    if (res.motion_eval) patterns[res.motion_eval->name] = report_to_json(res.motion_eval->report);
    json j{{"patterns", patterns},
           {"residual_degenerate", res.residual_degenerate},
           {"best_val_loss", res.trained.state.best_val},
           {"epochs_run", res.trained.state.epoch}};
    if (res.motion_psnr_drop) j["motion_psnr_drop"] = *res.motion_psnr_drop;
    json seeds;
    for (const auto& [k, v] : res.seeds) seeds[k] = v;
    j["seeds"] = seeds;
    return j;
}

int cmd_pipeline(const PipelineArgs& args) {
    if (args.factor <= 0.0 || args.factor > 1.0)
        throw CLI::ValidationError("--r", "under-sampling factor must be in (0, 1]");
    if (args.folds < 1) throw CLI::ValidationError("--folds", "folds must be >= 1");
    if (!fs::exists(args.data.manifest_path))
        throw CLI::ValidationError("--manifest", "no such file: " + args.data.manifest_path);
    if (args.translator == "external" &&
        (args.external_volume.empty() || args.external_slices <= 0 || args.external_height <= 0 ||
         args.external_width <= 0))
        throw CLI::ValidationError("--external-volume",
                                   "external translators need a volume and its dims");
    if (args.baselines != "all" && args.baselines != "none")
        throw CLI::ValidationError("--baselines", "expected 'all' or 'none'");

    std::cout << "pipeline seed=" << args.seed << "\n";
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    const fs::path failed_marker = out / "FAILED";
    if (fs::exists(failed_marker)) fs::remove(failed_marker);
    write_json(pipeline_config_json(args), (out / "config.json").string());

    std::string stage = "load";
    try {
        Manifest manifest = load_manifest(args.data.manifest_path);
        json folds_json = json::array();
        std::map<std::string, std::vector<double>> psnr_by_pattern, ssim_by_pattern;

        for (int fold = 0; fold < args.folds; ++fold) {
            stage = "split";
            std::uint64_t fold_split_seed =
                args.folds == 1 ? args.data.split_seed
                                : derive_seed(args.data.split_seed, 71, static_cast<std::uint64_t>(fold));
            auto [subjects, split] = [&] {
                DatasetArgs d = args.data;
                d.split_seed = fold_split_seed;
                return d.load();
            }();
            DatasetSplit data = split_dataset(subjects, split);

            stage = "experiment";
            ExperimentConfig cfg = experiment_config(
                args, args.folds == 1 ? args.seed
                                      : derive_seed(args.seed, 72, static_cast<std::uint64_t>(fold)));
            ExperimentResult res = run_experiment(data, cfg);

            stage = "report";
            std::string fold_dir =
                args.folds == 1 ? args.out_dir : (out / ("fold" + std::to_string(fold))).string();
            write_fold_outputs(res, fold_dir);
            json fj = fold_summary_json(res);
            fj["split_seed"] = fold_split_seed;
            folds_json.push_back(fj);
            for (const auto& ev : res.evals) {
                psnr_by_pattern[ev.name].push_back(ev.report.psnr_mean);
                ssim_by_pattern[ev.name].push_back(ev.report.ssim_mean);
            }
            if (res.motion_eval) {
                psnr_by_pattern[res.motion_eval->name].push_back(res.motion_eval->report.psnr_mean);
                ssim_by_pattern[res.motion_eval->name].push_back(res.motion_eval->report.ssim_mean);
            }
        }

        stage = "summary";
        auto mean_std = [](const std::vector<double>& v) {
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - m) * (x - m);
            return std::pair<double, double>{m, std::sqrt(var / static_cast<double>(v.size()))};
        };
        json aggregate;
        for (const auto& [name, values] : psnr_by_pattern) {
            auto [pm, ps] = mean_std(values);
            auto [sm, ss] = mean_std(ssim_by_pattern[name]);
            aggregate[name] = {{"psnr_mean", pm}, {"psnr_std", ps}, {"ssim_mean", sm}, {"ssim_std", ss}};
        }
        json summary{{"factor", args.factor},
                     {"folds", args.folds},
                     {"seed", args.seed},
                     {"aggregate", aggregate},
                     {"fold_results", folds_json}};
        write_json(summary, (out / "summary.json").string());
        std::cout << "wrote report to " << args.out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::ofstream marker(failed_marker.string());
        marker << "stage: " << stage << "\n" << e.what() << "\n";
        throw StageError(stage, e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual-guided k-space under-sampling pattern optimization"};
    app.require_subcommand(1);

    // gen-phantom
    auto* gen_phantom = app.add_subcommand("gen-phantom", "Generate a synthetic paired dataset");
    std::string gp_out = default_out_dir();
    int gp_subjects = 20, gp_slices = 6, gp_size = 64;
    std::uint64_t gp_seed = 0;
    gen_phantom->add_option("--out", gp_out, "Output directory");
    gen_phantom->add_option("--subjects", gp_subjects)->check(CLI::PositiveNumber);
    gen_phantom->add_option("--slices", gp_slices)->check(CLI::PositiveNumber);
    gen_phantom->add_option("--size", gp_size)->check(CLI::Range(32, 4096));
    gen_phantom->add_option("--seed", gp_seed);

    // generate-pattern
    auto* gen_pattern = app.add_subcommand("generate-pattern", "Write a baseline or learned mask");
    std::string pat_kind = "center", pat_out = "mask.pgm", pat_checkpoint;
    int pat_height = 192, pat_width = 0;
    double pat_r = 0.25, pat_sigma = 0.0, pat_r0 = 1.0;
    std::uint64_t pat_seed = 0;
    gen_pattern->add_option("--kind", pat_kind, "gaussian1d | center | poisson | learned");
    gen_pattern->add_option("--size", pat_height, "Square size (use --height/--width otherwise)");
    gen_pattern->add_option("--height", pat_height);
    gen_pattern->add_option("--width", pat_width, "Defaults to --height/--size");
    gen_pattern->add_option("--r", pat_r, "Under-sampling factor")->check(CLI::Range(0.0, 1.0));
    gen_pattern->add_option("--seed", pat_seed);
    gen_pattern->add_option("--sigma-rows", pat_sigma, "Gaussian row sigma (0 = M/6)");
    gen_pattern->add_option("--r0", pat_r0, "Poisson-disc base radius");
    gen_pattern->add_option("--checkpoint", pat_checkpoint, "Checkpoint for --kind learned");
    gen_pattern->add_option("--out", pat_out);

    // fit-translator
    auto* fit_cmd = app.add_subcommand("fit-translator", "Fit a cross-modality translator");
    DatasetArgs fit_data;
    fit_data.attach(fit_cmd);
    std::string fit_kind = "lut", fit_out = "translator.txt";
    int fit_bins = 256, fit_patch = 5;
    double fit_lambda = 1e-3;
    long fit_max_samples = 200000;
    std::uint64_t fit_seed = 0;
    fit_cmd->add_option("--kind", fit_kind, "identity | lut | ridge");
    fit_cmd->add_option("--bins", fit_bins)->check(CLI::Range(2, 65536));
    fit_cmd->add_option("--patch", fit_patch);
    fit_cmd->add_option("--lambda", fit_lambda);
    fit_cmd->add_option("--max-samples", fit_max_samples);
    fit_cmd->add_option("--seed", fit_seed);
    fit_cmd->add_option("--out", fit_out);

    // residual
    auto* residual_cmd = app.add_subcommand("residual", "Validation-set residual map");
    DatasetArgs res_data;
    res_data.attach(residual_cmd);
    std::string res_model = "translator.txt", res_out = default_out_dir();
    residual_cmd->add_option("--model", res_model, "Fitted translator file");
    residual_cmd->add_option("--out", res_out, "Output directory");

    // optimize
    auto* opt_cmd = app.add_subcommand("optimize", "Refine the probabilistic mask");
    DatasetArgs opt_data;
    opt_data.attach(opt_cmd);
    std::string opt_residual, opt_model, opt_checkpoint = "checkpoint.bin",
                                          opt_out = default_out_dir();
    double opt_r = 0.25;
    bool opt_resume = false;
    TrainConfig opt_train;
    opt_cmd->add_option("--residual", opt_residual, "Normalized residual volume (raw float32)");
    opt_cmd->add_option("--model", opt_model, "Translator file (residual computed on the fly)");
    opt_cmd->add_option("--r", opt_r)->check(CLI::Range(0.0, 1.0));
    opt_cmd->add_option("--sigma-p", opt_train.sigma_p);
    opt_cmd->add_option("--lr", opt_train.lr);
    opt_cmd->add_option("--batch", opt_train.batch_size)->check(CLI::PositiveNumber);
    opt_cmd->add_option("--min-epochs", opt_train.min_epochs);
    opt_cmd->add_option("--max-epochs", opt_train.max_epochs);
    opt_cmd->add_option("--patience", opt_train.patience);
    opt_cmd->add_option("--seed", opt_train.seed);
    opt_cmd->add_option("--checkpoint", opt_checkpoint);
    opt_cmd->add_flag("--resume", opt_resume, "Continue from the checkpoint");
    opt_cmd->add_option("--out", opt_out, "Output directory");

    // undersample
    auto* under_cmd = app.add_subcommand("undersample", "Retrospectively under-sample a volume");
    std::string und_volume, und_mask, und_out = "undersampled.craw";
    int und_slices = 0, und_height = 0, und_width = 0;
    under_cmd->add_option("--volume", und_volume)->required();
    under_cmd->add_option("--slices", und_slices)->required();
    under_cmd->add_option("--height", und_height)->required();
    under_cmd->add_option("--width", und_width)->required();
    under_cmd->add_option("--mask", und_mask)->required();
    under_cmd->add_option("--out", und_out);

    // reconstruct
    auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct under-sampled k-space");
    std::string rec_kspace, rec_mask, rec_out = "recon.raw", rec_kind = "zero_filled",
                                      rec_regularizer = "identity";
    int rec_slices = 0, rec_height = 0, rec_width = 0, rec_iters = 200;
    double rec_lambda = 0.0, rec_tol = 1e-10;
    recon_cmd->add_option("--kspace", rec_kspace)->required();
    recon_cmd->add_option("--slices", rec_slices)->required();
    recon_cmd->add_option("--height", rec_height)->required();
    recon_cmd->add_option("--width", rec_width)->required();
    recon_cmd->add_option("--mask", rec_mask)->required();
    recon_cmd->add_option("--recon", rec_kind, "zero_filled | regularized_ls");
    recon_cmd->add_option("--lambda", rec_lambda);
    recon_cmd->add_option("--regularizer", rec_regularizer, "identity | first_difference");
    recon_cmd->add_option("--cg-max-iters", rec_iters);
    recon_cmd->add_option("--cg-tol", rec_tol);
    recon_cmd->add_option("--out", rec_out);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Metrics for one mask on the test split");
    DatasetArgs eval_data;
    eval_data.attach(eval_cmd);
    std::string eval_mask, eval_out = default_out_dir(), eval_kind = "zero_filled",
                           eval_regularizer = "identity";
    double eval_lambda = 0.0;
    bool eval_standard_peak = false;
    eval_cmd->add_option("--mask", eval_mask)->required();
    eval_cmd->add_option("--recon", eval_kind, "zero_filled | regularized_ls");
    eval_cmd->add_option("--lambda", eval_lambda);
    eval_cmd->add_option("--regularizer", eval_regularizer);
    eval_cmd->add_flag("--psnr-standard", eval_standard_peak,
                       "Use the conventional max^2 peak in PSNR");
    eval_cmd->add_option("--out", eval_out, "Output directory");

    // augment-motion
    auto* motion_cmd = app.add_subcommand("augment-motion", "Rigid-motion augment a volume");
    std::string mot_volume, mot_out = "moved.raw", mot_log;
    int mot_slices = 0, mot_height = 0, mot_width = 0;
    double mot_t = 5.0, mot_r = 5.0;
    std::uint64_t mot_seed = 0;
    motion_cmd->add_option("--volume", mot_volume)->required();
    motion_cmd->add_option("--slices", mot_slices)->required();
    motion_cmd->add_option("--height", mot_height)->required();
    motion_cmd->add_option("--width", mot_width)->required();
    motion_cmd->add_option("--seed", mot_seed);
    motion_cmd->add_option("--t-bound", mot_t, "Max |translation| in pixels");
    motion_cmd->add_option("--r-bound", mot_r, "Max |rotation| in degrees");
    motion_cmd->add_option("--out", mot_out);
    motion_cmd->add_option("--log", mot_log, "Transform sidecar (default <out>.transforms.json)");

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "Full two-step run with reports");
    PipelineArgs pipe;
    pipe.out_dir = default_out_dir();
    pipe.data.attach(pipe_cmd);
    pipe_cmd->add_option("--r", pipe.factor, "Under-sampling factor");
    pipe_cmd->add_option("--translator", pipe.translator, "identity | lut | ridge | external");
    pipe_cmd->add_option("--lut-bins", pipe.lut_bins);
    pipe_cmd->add_option("--ridge-patch", pipe.ridge_patch);
    pipe_cmd->add_option("--ridge-lambda", pipe.ridge_lambda);
    pipe_cmd->add_option("--external-volume", pipe.external_volume,
                         "Pre-synthesized target volume, indexed by global slice position");
    pipe_cmd->add_option("--external-slices", pipe.external_slices);
    pipe_cmd->add_option("--external-height", pipe.external_height);
    pipe_cmd->add_option("--external-width", pipe.external_width);
    pipe_cmd->add_option("--recon", pipe.recon_kind, "zero_filled | regularized_ls");
    pipe_cmd->add_option("--recon-lambda", pipe.recon_lambda);
    pipe_cmd->add_option("--regularizer", pipe.regularizer);
    pipe_cmd->add_option("--baselines", pipe.baselines, "all | none");
    pipe_cmd->add_flag("--motion", pipe.motion, "Also evaluate under reference-image motion");
    pipe_cmd->add_option("--motion-t-bound", pipe.motion_t_bound);
    pipe_cmd->add_option("--motion-r-bound", pipe.motion_r_bound);
    pipe_cmd->add_option("--sigma-p", pipe.sigma_p);
    pipe_cmd->add_option("--lr", pipe.lr);
    pipe_cmd->add_option("--batch", pipe.batch_size)->check(CLI::PositiveNumber);
    pipe_cmd->add_option("--min-epochs", pipe.min_epochs);
    pipe_cmd->add_option("--max-epochs", pipe.max_epochs);
    pipe_cmd->add_option("--patience", pipe.patience);
    pipe_cmd->add_option("--gaussian-sigma-rows", pipe.gaussian_sigma_rows);
    pipe_cmd->add_option("--poisson-r0", pipe.poisson_r0);
    pipe_cmd->add_option("--folds", pipe.folds, "Seeded re-split emulation of k-fold runs");
    pipe_cmd->add_option("--seed", pipe.seed);
    pipe_cmd->add_option("--out", pipe.out_dir, "Report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen_phantom) return cmd_gen_phantom(gp_out, gp_subjects, gp_slices, gp_size, gp_seed);
        if (*gen_pattern) {
            int w = pat_width > 0 ? pat_width : pat_height;
            return cmd_generate_pattern(pat_kind, pat_height, w, pat_r, pat_seed, pat_sigma, pat_r0,
                                        pat_checkpoint, pat_out);
        }
        if (*fit_cmd)
            return cmd_fit_translator(fit_data, fit_kind, fit_bins, fit_patch, fit_lambda,
                                      fit_max_samples, fit_seed, fit_out);
        if (*residual_cmd) return cmd_residual(res_data, res_model, res_out);
        if (*opt_cmd)
            return cmd_optimize(opt_data, opt_residual, opt_model, opt_r, opt_train, opt_checkpoint,
                                opt_resume, opt_out);
        if (*under_cmd)
            return cmd_undersample(und_volume, und_slices, und_height, und_width, und_mask, und_out);
        if (*recon_cmd) {
            ReconConfig rc;
            rc.kind = parse_recon_kind(rec_kind);
            rc.lambda = rec_lambda;
            rc.regularizer = parse_regularizer(rec_regularizer);
            rc.cg_max_iters = rec_iters;
            rc.cg_tol = rec_tol;
            return cmd_reconstruct(rec_kspace, rec_slices, rec_height, rec_width, rec_mask, rc, rec_out);
        }
        if (*eval_cmd) {
            ReconConfig rc;
            rc.kind = parse_recon_kind(eval_kind);
            rc.lambda = eval_lambda;
            rc.regularizer = parse_regularizer(eval_regularizer);
            return cmd_evaluate(eval_data, eval_mask, rc, eval_standard_peak, eval_out);
        }
        if (*motion_cmd)
            return cmd_augment_motion(mot_volume, mot_slices, mot_height, mot_width, mot_seed, mot_t,
                                      mot_r, mot_out, mot_log);
        if (*pipe_cmd) return cmd_pipeline(pipe);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StageError& e) {
        std::cerr << "stage '" << e.stage << "' failed: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
