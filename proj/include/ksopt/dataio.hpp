#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ksopt/types.hpp"

namespace ksopt {

// Raw scalar volume, slice-major row-major. Files store little-endian float32.
struct Volume {
    int slices = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Volume() = default;
    Volume(int s, int h, int w)
        : slices(s), height(h), width(w),
          data(static_cast<std::size_t>(s) * h * w, 0.0) {}

    double& at(int s, int r, int c) {
        return data[(static_cast<std::size_t>(s) * height + r) * width + c];
    }
    double at(int s, int r, int c) const {
        return data[(static_cast<std::size_t>(s) * height + r) * width + c];
    }
    Image2D slice(int s) const;
    void set_slice(int s, const Image2D& img);
};

struct VolumeInfo {
    std::string path;  // relative paths resolve against the manifest directory
    int slices = 0;
    int height = 0;
    int width = 0;
};

struct Subject {
    std::string id;
    std::map<std::string, VolumeInfo> volumes;  // modality tag -> volume
    double voxel_mm = 1.0;
};

struct Manifest {
    std::vector<Subject> subjects;
    std::string base_dir;  // set on load; not serialized
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);
std::string resolve_path(const Manifest& manifest, const std::string& path);

// Validates file size against dims and rejects non-finite samples.
Volume load_volume(const std::string& path, int slices, int height, int width);
Volume load_volume(const Manifest& manifest, const VolumeInfo& info);
void save_volume(const Volume& v, const std::string& path);

struct PreprocessResult {
    std::vector<Image2D> slices;
    bool degenerate = false;  // constant volume mapped to all zeros
};

// Center crop each slice, then min-max normalize with a single min/max over
// the whole cropped volume so inter-slice contrast is preserved.
PreprocessResult preprocess(const Volume& v, int crop = 192);

enum class Split { train, validation, test };

struct SplitSpec {
    std::uint64_t seed = 0;
    std::map<std::string, Split> assignment;
    std::vector<std::string> train, validation, test;  // in shuffled order
};

// Seeded shuffle; floor(n/5) validation, floor(n/5) test, remainder train.
SplitSpec split_subjects(const Manifest& manifest, std::uint64_t seed);

struct PhantomSubject {
    std::string id;
    Volume modality_a;  // reference-like contrast
    Volume modality_b;  // target-like contrast with modality-specific texture
};

// Desk-scale paired dataset: shared ellipse geometry per subject with smooth
// through-slice drift, rendered under two monotone contrast maps. Modality B
// additionally carries dataset-level sinusoidal texture and a per-slice
// stochastic field that no reference-driven translator can predict.
std::vector<PhantomSubject> gen_phantom_pairs(int n_subjects, int slices_per, int size,
                                              std::uint64_t seed);

// Writes volumes under dir as <id>_<tag>.raw and a manifest.json beside them.
Manifest write_phantom_dataset(const std::vector<PhantomSubject>& subjects, const std::string& dir);

// P5 graymaps with a comment header recording dims and achieved factor.
// Binary masks use maxval 255 (0/255); probabilistic masks use maxval 65535
// scaled so the grid maximum maps to 65535.
void export_mask_pgm(const BinaryMask& mask, const std::string& path);
void export_probmask_pgm(const ProbMask& p, const std::string& path);
BinaryMask load_mask_pgm(const std::string& path);
Grid2D<std::uint16_t> load_pgm16(const std::string& path);

}  // namespace ksopt
