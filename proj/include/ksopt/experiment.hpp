#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ksopt/dataio.hpp"
#include "ksopt/metrics.hpp"
#include "ksopt/optimizer.hpp"
#include "ksopt/recon.hpp"
#include "ksopt/translator.hpp"
#include "ksopt/types.hpp"

namespace ksopt {

// One subject's preprocessed slices for the reference and target modalities.
struct SubjectSlices {
    std::string id;
    std::vector<Image2D> reference;
    std::vector<Image2D> target;
};

std::vector<SubjectSlices> load_subject_slices(const Manifest& manifest,
                                               const std::string& reference_tag,
                                               const std::string& target_tag, int crop);

std::vector<SubjectSlices> phantom_subject_slices(const std::vector<PhantomSubject>& phantoms);

struct DatasetSplit {
    PairedSliceSet train_pairs, val_pairs, test_pairs;
    std::vector<Image2D> train_targets, val_targets, test_targets;
};

DatasetSplit split_dataset(const std::vector<SubjectSlices>& subjects, const SplitSpec& split);

struct ExperimentConfig {
    double factor = 0.25;
    TranslatorKind translator = TranslatorKind::intensity_lut;
    int lut_bins = 256;
    int ridge_patch = 5;
    double ridge_lambda = 1e-3;
    long ridge_max_samples = 200000;
    std::string external_volume;  // pre-synthesized target volume for external translators
    int external_slices = 0, external_height = 0, external_width = 0;
    TrainConfig train;
    ReconConfig recon;
    bool baselines = true;
    double gaussian_sigma_rows = 0.0;  // 0 -> M/6
    double poisson_r0 = 1.0;
    bool motion = false;
    double motion_t_bound = 5.0;
    double motion_r_bound = 5.0;
    std::uint64_t seed = 0;  // derives split/pattern/motion streams
};

struct PatternEval {
    std::string name;
    BinaryMask mask;
    MetricReport report;
};

struct ExperimentResult {
    TranslatorModel model;
    ResidualMap residual;
    ResidualMap residual_norm;
    bool residual_degenerate = false;
    TrainResult trained;
    BinaryMask learned_mask;
    ProbMask learned_prob;
    std::vector<PatternEval> evals;  // learned first, then any baselines
    // Motion robustness: pattern re-derived from a motion-augmented residual
    // (translator and trained weights fixed), evaluated on the clean test set.
    std::optional<PatternEval> motion_eval;
    std::optional<double> motion_psnr_drop;
    std::map<std::string, std::uint64_t> seeds;  // effective per-stage seeds
};

// The full two-step run: fit translator on the training pairs, residual prior
// from the validation pairs, joint refinement of the weight map, deterministic
// top-k extraction, then retrospective evaluation on the test targets.
ExperimentResult run_experiment(const DatasetSplit& data, const ExperimentConfig& cfg);

// Retrospective under-sampling of each slice with one fixed mask + metrics.
MetricReport evaluate_pattern(const std::vector<Image2D>& targets, const BinaryMask& mask,
                              const ReconConfig& recon);

}  // namespace ksopt
