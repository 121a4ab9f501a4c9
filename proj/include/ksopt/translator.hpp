#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ksopt/types.hpp"

namespace ksopt {

enum class TranslatorKind { identity, intensity_lut, patch_ridge, external };

// Lightweight cross-modality translators. All map a 3-slice reference
// context to one target-modality slice; identity passes the center slice
// through, external reads pre-synthesized slices from a volume file.
struct TranslatorModel {
    TranslatorKind kind = TranslatorKind::identity;

    // intensity_lut: conditional target mean per reference-intensity bin
    int bins = 0;
    std::vector<double> lut;

    // patch_ridge: 3*k*k patch weights plus trailing bias
    int patch = 0;
    double lambda = 0.0;
    std::vector<double> weights;

    // external: pre-synthesized target volume
    std::string volume_path;
    int ext_slices = 0, ext_height = 0, ext_width = 0;

    std::string summary;  // free-form fitting metadata
};

struct PairedSlice {
    Image2D t1_prev, t1, t1_next;  // reference triplet (boundaries duplicated)
    Image2D tm;                    // target slice
    int index = -1;                // global slice position, used by external models
    int prev_index = -1;           // physical source slices of the triplet;
    int next_index = -1;           // equal to index at volume boundaries
};
using PairedSliceSet = std::vector<PairedSlice>;

// Builds pairs for one subject volume; boundary slices duplicate their single
// neighbor. base_index offsets the stored global indices.
PairedSliceSet make_paired_set(const std::vector<Image2D>& reference,
                               const std::vector<Image2D>& target, int base_index = 0);

TranslatorModel fit_intensity_lut(const PairedSliceSet& train, int bins = 256);

// Ridge-regularized linear regression from k x k reference patches (three
// slices, reflect padding) plus bias to the co-located target pixel.
TranslatorModel fit_patch_ridge(const PairedSliceSet& train, int k = 5, double lambda = 1e-3,
                                long max_samples = 200000, std::uint64_t seed = 0);

TranslatorModel make_external_translator(const std::string& volume_path, int slices, int height,
                                         int width);

Image2D translate(const TranslatorModel& model, const Image2D& prev, const Image2D& center,
                  const Image2D& next, int slice_index = -1);
Image2D translate(const TranslatorModel& model, const PairedSlice& pair);

// Mean over all validation slices of |F(translated) - F(target)| in k-space.
ResidualMap residual_map(const TranslatorModel& model, const PairedSliceSet& validation);

struct NormalizedResidual {
    ResidualMap map;
    bool degenerate = false;  // constant input mapped to all zeros
};

// Min-max normalization to [0, 1].
NormalizedResidual normalize_residual(const ResidualMap& r);

void save_translator(const TranslatorModel& model, const std::string& path);
TranslatorModel load_translator(const std::string& path);

}  // namespace ksopt
