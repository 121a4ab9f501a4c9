#include "ksopt/translator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "ksopt/dataio.hpp"
#include "ksopt/fourier.hpp"
#include "ksopt/rng.hpp"

namespace ksopt {

PairedSliceSet make_paired_set(const std::vector<Image2D>& reference,
                               const std::vector<Image2D>& target, int base_index) {
    if (reference.size() != target.size())
        throw std::invalid_argument("make_paired_set: modality slice counts differ");
    if (reference.empty()) throw std::invalid_argument("make_paired_set: empty volume");
    PairedSliceSet set;
    const int n = static_cast<int>(reference.size());
    for (int i = 0; i < n; ++i) {
        PairedSlice p;
        const int prev = std::max(0, i - 1), next = std::min(n - 1, i + 1);
        p.t1_prev = reference[static_cast<std::size_t>(prev)];
        p.t1 = reference[static_cast<std::size_t>(i)];
        p.t1_next = reference[static_cast<std::size_t>(next)];
        p.tm = target[static_cast<std::size_t>(i)];
        p.index = base_index + i;
        p.prev_index = base_index + prev;
        p.next_index = base_index + next;
        set.push_back(std::move(p));
    }
    return set;
}

namespace {

int bin_of(double v, int bins) {
    int b = static_cast<int>(std::floor(v * bins));
    return std::clamp(b, 0, bins - 1);
}

double bin_center(int b, int bins) { return (b + 0.5) / bins; }

// Symmetric reflection: -1 -> 0, n -> n-1.
int reflect(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
}

void gather_patch_row(const PairedSlice& pair, int r, int c, int k, std::vector<double>& row) {
    const int half = k / 2;
    row.clear();
    const Image2D* slices[3] = {&pair.t1_prev, &pair.t1, &pair.t1_next};
    for (const Image2D* s : slices)
        for (int dr = -half; dr <= half; ++dr)
            for (int dc = -half; dc <= half; ++dc)
                row.push_back(s->at(reflect(r + dr, s->height), reflect(c + dc, s->width)));
    row.push_back(1.0);  // bias
}

}  // namespace

TranslatorModel fit_intensity_lut(const PairedSliceSet& train, int bins) {
    if (train.empty()) throw std::invalid_argument("fit_intensity_lut: empty training set");
    if (bins < 2) throw std::invalid_argument("fit_intensity_lut: need at least 2 bins");
    std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<long> count(static_cast<std::size_t>(bins), 0);
    for (const auto& pair : train) {
        require_same_shape(pair.t1, pair.tm, "fit_intensity_lut");
        for (std::size_t i = 0; i < pair.t1.size(); ++i) {
            int b = bin_of(pair.t1.data[i], bins);
            sum[static_cast<std::size_t>(b)] += pair.tm.data[i];
            ++count[static_cast<std::size_t>(b)];
        }
    }
    TranslatorModel model;
    model.kind = TranslatorKind::intensity_lut;
    model.bins = bins;
    model.lut.assign(static_cast<std::size_t>(bins), 0.0);
    long populated = 0;
    for (int b = 0; b < bins; ++b)
        if (count[static_cast<std::size_t>(b)] > 0) {
            model.lut[static_cast<std::size_t>(b)] =
                sum[static_cast<std::size_t>(b)] / static_cast<double>(count[static_cast<std::size_t>(b)]);
            ++populated;
        }
    if (populated == 0) throw std::invalid_argument("fit_intensity_lut: no samples");
    // Fill empty bins from the nearest populated bin (ties prefer the left).
    for (int b = 0; b < bins; ++b) {
        if (count[static_cast<std::size_t>(b)] > 0) continue;
        int best = -1;
        long best_dist = bins + 1;
        for (int o = 0; o < bins; ++o) {
            if (count[static_cast<std::size_t>(o)] == 0) continue;
            long d = std::labs(o - b);
            if (d < best_dist) {
                best_dist = d;
                best = o;
            }
        }
        model.lut[static_cast<std::size_t>(b)] = model.lut[static_cast<std::size_t>(best)];
    }
    std::ostringstream meta;
    meta << "lut bins=" << bins << " populated=" << populated << " pairs=" << train.size();
    model.summary = meta.str();
    return model;
}

TranslatorModel fit_patch_ridge(const PairedSliceSet& train, int k, double lambda,
                                long max_samples, std::uint64_t seed) {
    if (train.empty()) throw std::invalid_argument("fit_patch_ridge: empty training set");
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("fit_patch_ridge: k must be odd");
    if (lambda < 0.0) throw std::invalid_argument("fit_patch_ridge: lambda must be nonnegative");

    const int dim = 3 * k * k + 1;
    const long total = std::accumulate(train.begin(), train.end(), 0L,
                                       [](long acc, const PairedSlice& p) {
                                           return acc + static_cast<long>(p.tm.size());
                                       });

    // Seeded pixel subsample when the design exceeds max_samples rows.
    std::vector<std::uint8_t> keep;
    if (max_samples > 0 && total > max_samples) {
        keep.assign(static_cast<std::size_t>(total), 0);
        std::vector<long> order(static_cast<std::size_t>(total));
        std::iota(order.begin(), order.end(), 0L);
        Rng rng(derive_seed(seed, 31));
        rng.shuffle(order);
        for (long i = 0; i < max_samples; ++i) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    }

    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(dim);
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(dim));
    long flat = 0, used = 0;
    for (const auto& pair : train) {
        require_same_shape(pair.t1, pair.tm, "fit_patch_ridge");
        for (int r = 0; r < pair.tm.height; ++r)
            for (int c = 0; c < pair.tm.width; ++c, ++flat) {
                if (!keep.empty() && !keep[static_cast<std::size_t>(flat)]) continue;
                gather_patch_row(pair, r, c, k, row);
                Eigen::Map<const Eigen::VectorXd> a(row.data(), dim);
                ata.selfadjointView<Eigen::Lower>().rankUpdate(a);
                atb += a * pair.tm.at(r, c);
                ++used;
            }
    }
    ata = ata.selfadjointView<Eigen::Lower>();

    Eigen::MatrixXd sys = ata + lambda * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd beta;
    if (lambda == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
        if (!lu.isInvertible())
            throw SingularSystemError("fit_patch_ridge: normal equations singular with lambda=0");
        beta = lu.solve(atb);
    } else {
        beta = Eigen::LDLT<Eigen::MatrixXd>(sys).solve(atb);
    }

    TranslatorModel model;
    model.kind = TranslatorKind::patch_ridge;
    model.patch = k;
    model.lambda = lambda;
    model.weights.assign(beta.data(), beta.data() + dim);
    std::ostringstream meta;
    meta << "ridge k=" << k << " lambda=" << lambda << " rows=" << used;
    model.summary = meta.str();
    return model;
}

TranslatorModel make_external_translator(const std::string& volume_path, int slices, int height,
                                         int width) {
    TranslatorModel model;
    model.kind = TranslatorKind::external;
    model.volume_path = volume_path;
    model.ext_slices = slices;
    model.ext_height = height;
    model.ext_width = width;
    return model;
}

Image2D translate(const TranslatorModel& model, const Image2D& prev, const Image2D& center,
                  const Image2D& next, int slice_index) {
    switch (model.kind) {
        case TranslatorKind::identity:
            return center;
        case TranslatorKind::intensity_lut: {
            Image2D out(center.height, center.width);
            const int bins = model.bins;
            for (std::size_t i = 0; i < center.size(); ++i) {
                double v = center.data[i];
                double pos = v * bins - 0.5;  // position in bin-center coordinates
                if (pos <= 0.0) {
                    out.data[i] = model.lut.front();
                } else if (pos >= bins - 1) {
                    out.data[i] = model.lut.back();
                } else {
                    int b = static_cast<int>(std::floor(pos));
                    double f = pos - b;
                    out.data[i] = (1.0 - f) * model.lut[static_cast<std::size_t>(b)] +
                                  f * model.lut[static_cast<std::size_t>(b) + 1];
                }
            }
            return out;
        }
        case TranslatorKind::patch_ridge: {
            PairedSlice tmp;
            tmp.t1_prev = prev;
            tmp.t1 = center;
            tmp.t1_next = next;
            Image2D out(center.height, center.width);
            std::vector<double> row;
            for (int r = 0; r < center.height; ++r)
                for (int c = 0; c < center.width; ++c) {
                    gather_patch_row(tmp, r, c, model.patch, row);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * model.weights[i];
                    out.at(r, c) = acc;
                }
            return out;
        }
        case TranslatorKind::external: {
            if (slice_index < 0 || slice_index >= model.ext_slices)
                throw IoError("external translator: slice index " + std::to_string(slice_index) +
                              " outside volume of " + std::to_string(model.ext_slices) + " slices");
            Volume v = load_volume(model.volume_path, model.ext_slices, model.ext_height,
                                   model.ext_width);
            return v.slice(slice_index);
        }
    }
    throw std::logic_error("translate: unknown translator kind");
}

Image2D translate(const TranslatorModel& model, const PairedSlice& pair) {
    return translate(model, pair.t1_prev, pair.t1, pair.t1_next, pair.index);
}

ResidualMap residual_map(const TranslatorModel& model, const PairedSliceSet& validation) {
    if (validation.empty()) throw std::invalid_argument("residual_map: empty validation set");
    ResidualMap r(validation.front().tm.height, validation.front().tm.width);
    for (const auto& pair : validation) {
        require_same_shape(pair.tm, r, "residual_map");
        Image2D synth = translate(model, pair);
        KSpace2D pred = fft2_centered(synth);
        KSpace2D truth = fft2_centered(pair.tm);
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] += std::abs(pred.data[i] - truth.data[i]);
    }
    const double inv = 1.0 / static_cast<double>(validation.size());
    for (auto& v : r.data) v *= inv;
    return r;
}

NormalizedResidual normalize_residual(const ResidualMap& r) {
    NormalizedResidual out;
    out.map = ResidualMap(r.height, r.width);
    auto [lo_it, hi_it] = std::minmax_element(r.data.begin(), r.data.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi <= lo) {
        out.degenerate = true;
        return out;
    }
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < r.size(); ++i) out.map.data[i] = (r.data[i] - lo) * scale;
    return out;
}

void save_translator(const TranslatorModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write translator model: " + path);
    out.precision(17);
    out << "ksopt-translator v1\n";
    switch (model.kind) {
        case TranslatorKind::identity:
            out << "kind identity\n";
            break;
        case TranslatorKind::intensity_lut:
            out << "kind intensity_lut\nbins " << model.bins << "\n";
            for (double v : model.lut) out << v << "\n";
            break;
        case TranslatorKind::patch_ridge:
            out << "kind patch_ridge\npatch " << model.patch << "\nlambda " << model.lambda
                << "\nweights " << model.weights.size() << "\n";
            for (double v : model.weights) out << v << "\n";
            break;
        case TranslatorKind::external:
            out << "kind external\npath " << model.volume_path << "\ndims " << model.ext_slices
                << " " << model.ext_height << " " << model.ext_width << "\n";
            break;
    }
    if (!model.summary.empty()) out << "summary " << model.summary << "\n";
    if (!out) throw IoError("short write on translator model: " + path);
}

TranslatorModel load_translator(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open translator model: " + path);
    std::string line;
    std::getline(in, line);
    if (line != "ksopt-translator v1") throw IoError("unrecognized translator file: " + path);
    std::string key, kind;
    in >> key >> kind;
    if (key != "kind") throw IoError("malformed translator file: " + path);
    TranslatorModel model;
    if (kind == "identity") {
        model.kind = TranslatorKind::identity;
    } else if (kind == "intensity_lut") {
        model.kind = TranslatorKind::intensity_lut;
        in >> key >> model.bins;
        model.lut.resize(static_cast<std::size_t>(model.bins));
        for (auto& v : model.lut) in >> v;
    } else if (kind == "patch_ridge") {
        model.kind = TranslatorKind::patch_ridge;
        std::size_t n = 0;
        in >> key >> model.patch >> key >> model.lambda >> key >> n;
        model.weights.resize(n);
        for (auto& v : model.weights) in >> v;
    } else if (kind == "external") {
        model.kind = TranslatorKind::external;
        in >> key >> model.volume_path >> key >> model.ext_slices >> model.ext_height >>
            model.ext_width;
    } else {
        throw IoError("unknown translator kind '" + kind + "' in " + path);
    }
    if (!in) throw IoError("truncated translator file: " + path);
    return model;
}

}  // namespace ksopt
