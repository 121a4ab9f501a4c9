#include "ksopt/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ksopt/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ksopt {

Image2D Volume::slice(int s) const {
    Image2D img(height, width);
    const std::size_t off = static_cast<std::size_t>(s) * height * width;
    std::copy(data.begin() + off, data.begin() + off + img.size(), img.data.begin());
    return img;
}

void Volume::set_slice(int s, const Image2D& img) {
    const std::size_t off = static_cast<std::size_t>(s) * height * width;
    std::copy(img.data.begin(), img.data.end(), data.begin() + off);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("manifest parse error in " + path + ": " + e.what());
    }
    Manifest m;
    m.base_dir = fs::path(path).parent_path().string();
    for (const auto& js : j.at("subjects")) {
        Subject s;
        s.id = js.at("id").get<std::string>();
        s.voxel_mm = js.value("voxel_mm", 1.0);
        for (const auto& [tag, jv] : js.at("volumes").items()) {
            VolumeInfo info;
            info.path = jv.at("path").get<std::string>();
            info.slices = jv.at("slices").get<int>();
            info.height = jv.at("height").get<int>();
            info.width = jv.at("width").get<int>();
            if (info.slices <= 0 || info.height <= 0 || info.width <= 0)
                throw IoError("manifest: non-positive dims for subject " + s.id + " modality " + tag);
            s.volumes[tag] = info;
        }
        m.subjects.push_back(std::move(s));
    }
    return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    json subjects = json::array();
    for (const auto& s : manifest.subjects) {
        json vols;
        for (const auto& [tag, info] : s.volumes)
            vols[tag] = {{"path", info.path},
                         {"slices", info.slices},
                         {"height", info.height},
                         {"width", info.width}};
        subjects.push_back({{"id", s.id}, {"voxel_mm", s.voxel_mm}, {"volumes", vols}});
    }
    json j = {{"subjects", subjects}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

std::string resolve_path(const Manifest& manifest, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute() || manifest.base_dir.empty()) return path;
    return (fs::path(manifest.base_dir) / p).string();
}

Volume load_volume(const std::string& path, int slices, int height, int width) {
    const std::size_t count = static_cast<std::size_t>(slices) * height * width;
    const std::uintmax_t expected = count * 4;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume: " + path);
    std::error_code ec;
    const std::uintmax_t actual = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat volume: " + path);
    if (actual != expected)
        throw IoError("volume size mismatch for " + path + ": expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(actual));

    std::vector<unsigned char> bytes(expected);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
    if (!in) throw IoError("short read on volume: " + path);

    Volume v(slices, height, width);
    const std::size_t per_slice = static_cast<std::size_t>(height) * width;
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        float f = std::bit_cast<float>(u);
        if (!std::isfinite(f))
            throw IoError("non-finite sample in " + path + " at slice " + std::to_string(i / per_slice) +
                          ", flat index " + std::to_string(i));
        v.data[i] = static_cast<double>(f);
    }
    return v;
}

Volume load_volume(const Manifest& manifest, const VolumeInfo& info) {
    return load_volume(resolve_path(manifest, info.path), info.slices, info.height, info.width);
}

void save_volume(const Volume& v, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write volume: " + path);
    std::vector<unsigned char> bytes(v.data.size() * 4);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v.data[i]));
        bytes[4 * i] = static_cast<unsigned char>(u & 0xff);
        bytes[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on volume: " + path);
}

PreprocessResult preprocess(const Volume& v, int crop) {
    if (crop <= 0) throw std::invalid_argument("preprocess: crop must be positive");
    if (v.height < crop || v.width < crop)
        throw std::invalid_argument("preprocess: slice " + std::to_string(v.height) + "x" +
                                    std::to_string(v.width) + " smaller than crop " + std::to_string(crop));
    const int r0 = (v.height - crop) / 2;
    const int c0 = (v.width - crop) / 2;

    PreprocessResult out;
    out.slices.reserve(static_cast<std::size_t>(v.slices));
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < v.slices; ++s) {
        Image2D img(crop, crop);
        for (int r = 0; r < crop; ++r)
            for (int c = 0; c < crop; ++c) {
                double val = v.at(s, r0 + r, c0 + c);
                img.at(r, c) = val;
                lo = std::min(lo, val);
                hi = std::max(hi, val);
            }
        out.slices.push_back(std::move(img));
    }
    if (hi <= lo) {
        out.degenerate = true;
        for (auto& img : out.slices) std::fill(img.data.begin(), img.data.end(), 0.0);
        return out;
    }
    const double scale = 1.0 / (hi - lo);
    for (auto& img : out.slices)
        for (auto& val : img.data) val = (val - lo) * scale;
    return out;
}

SplitSpec split_subjects(const Manifest& manifest, std::uint64_t seed) {
    const std::size_t n = manifest.subjects.size();
    if (n < 5) throw std::invalid_argument("split_subjects: need at least 5 subjects");
    std::vector<std::string> ids;
    ids.reserve(n);
    for (const auto& s : manifest.subjects) ids.push_back(s.id);
    Rng rng(derive_seed(seed, 11));
    rng.shuffle(ids);

    const std::size_t n_val = n / 5;
    const std::size_t n_test = n / 5;
    const std::size_t n_train = n - n_val - n_test;

    SplitSpec spec;
    spec.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::validation : Split::test);
        spec.assignment[ids[i]] = s;
        (s == Split::train ? spec.train : s == Split::validation ? spec.validation : spec.test)
            .push_back(ids[i]);
    }
    return spec;
}

namespace {

struct Ellipse {
    double cy, cx;          // center
    double ay, ax;          // semi-axes
    double angle;           // radians
    double tissue;          // label value in (0, 1]
    double dcy, dcx;        // per-slice center drift
    double day, dax;        // per-slice axis drift
    double dangle;          // per-slice rotation drift
};

// Anti-aliased coverage in [0, 1]; ~1 px transition band at the boundary.
double coverage(const Ellipse& e, double t, double y, double x) {
    double cy = e.cy + e.dcy * t, cx = e.cx + e.dcx * t;
    double ay = std::max(1.5, e.ay + e.day * t), ax = std::max(1.5, e.ax + e.dax * t);
    double ang = e.angle + e.dangle * t;
    double dy = y - cy, dx = x - cx;
    double u = std::cos(ang) * dx + std::sin(ang) * dy;
    double v = -std::sin(ang) * dx + std::cos(ang) * dy;
    double q = (u * u) / (ax * ax) + (v * v) / (ay * ay);
    double soft = std::min(ay, ax) / 2.4;  // ~1.2 px ramp in the quadratic form
    return std::clamp((1.0 - q) * soft, 0.0, 1.0);
}

// Texture frequencies shared by the whole dataset; phases vary per subject.
struct TextureSpec {
    std::vector<double> fr, fc, amp;
};

TextureSpec make_texture_spec(int size, std::uint64_t seed) {
    TextureSpec spec;
    Rng rng(derive_seed(seed, 21));
    const int n_comp = 6;
    for (int i = 0; i < n_comp; ++i) {
        // Mid-band radii so the spikes fall outside small centered blocks.
        double radius = rng.uniform(0.28, 0.44) * size;
        double ang = rng.uniform(0.0, M_PI);
        spec.fr.push_back(std::round(radius * std::sin(ang)));
        spec.fc.push_back(std::round(radius * std::cos(ang)));
        spec.amp.push_back(rng.uniform(0.05, 0.08));
    }
    return spec;
}

// Smooth per-slice random field with a decaying spectral envelope. Being
// independent of the geometry, it is unpredictable from modality A and gives
// the translation residual broad support across low/mid frequencies.
Image2D random_field(int size, double rms, std::uint64_t seed) {
    Rng rng(seed);
    Image2D field(size, size);
    const int n_waves = 40;
    for (int i = 0; i < n_waves; ++i) {
        double radius = std::abs(rng.uniform(-1.0, 1.0)) * 0.45 * size;
        double ang = rng.uniform(0.0, 2.0 * M_PI);
        double fr = radius * std::sin(ang) / size, fc = radius * std::cos(ang) / size;
        double phase = rng.uniform(0.0, 2.0 * M_PI);
        double amp = 1.0 / (1.0 + radius / 4.0);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c)
                field.at(r, c) += amp * std::sin(2.0 * M_PI * (fr * r + fc * c) + phase);
    }
    double ss = 0.0;
    for (double v : field.data) ss += v * v;
    double scale = rms / std::max(1e-12, std::sqrt(ss / static_cast<double>(field.size())));
    for (auto& v : field.data) v *= scale;
    return field;
}

}  // namespace

std::vector<PhantomSubject> gen_phantom_pairs(int n_subjects, int slices_per, int size,
                                              std::uint64_t seed) {
    if (size < 32) throw std::invalid_argument("gen_phantom_pairs: size must be >= 32");
    if (n_subjects < 1 || slices_per < 1)
        throw std::invalid_argument("gen_phantom_pairs: counts must be positive");

    const TextureSpec texture = make_texture_spec(size, seed);
    std::vector<PhantomSubject> subjects;
    subjects.reserve(static_cast<std::size_t>(n_subjects));

    for (int si = 0; si < n_subjects; ++si) {
        Rng rng(derive_seed(seed, 22, static_cast<std::uint64_t>(si)));
        PhantomSubject subj;
        {
            std::ostringstream id;
            id << "s" << (si < 100 ? (si < 10 ? "00" : "0") : "") << si;
            subj.id = id.str();
        }
        subj.modality_a = Volume(slices_per, size, size);
        subj.modality_b = Volume(slices_per, size, size);

        std::vector<Ellipse> ellipses;
        // Outer "head" ellipse, then 4..8 internal structures painted on top.
        {
            Ellipse head;
            head.cy = size * rng.uniform(0.46, 0.54);
            head.cx = size * rng.uniform(0.46, 0.54);
            head.ay = size * rng.uniform(0.34, 0.40);
            head.ax = size * rng.uniform(0.30, 0.38);
            head.angle = rng.uniform(0.0, M_PI);
            head.tissue = rng.uniform(0.16, 0.3);
            head.dcy = rng.uniform(-0.15, 0.15);
            head.dcx = rng.uniform(-0.15, 0.15);
            head.day = rng.uniform(-0.1, 0.1);
            head.dax = rng.uniform(-0.1, 0.1);
            head.dangle = rng.uniform(-0.008, 0.008);
            ellipses.push_back(head);
        }
        const int n_inner = 4 + static_cast<int>(rng.below(5));
        for (int e = 0; e < n_inner; ++e) {
            Ellipse el;
            el.cy = size * rng.uniform(0.3, 0.7);
            el.cx = size * rng.uniform(0.3, 0.7);
            el.ay = size * rng.uniform(0.05, 0.18);
            el.ax = size * rng.uniform(0.05, 0.18);
            el.angle = rng.uniform(0.0, M_PI);
            el.tissue = rng.uniform(0.35, 1.0);
            el.dcy = rng.uniform(-0.25, 0.25);
            el.dcx = rng.uniform(-0.25, 0.25);
            el.day = rng.uniform(-0.12, 0.12);
            el.dax = rng.uniform(-0.12, 0.12);
            el.dangle = rng.uniform(-0.015, 0.015);
            ellipses.push_back(el);
        }

        std::vector<double> phase(texture.fr.size());
        std::vector<double> amp_jitter(texture.fr.size());
        for (std::size_t i = 0; i < phase.size(); ++i) {
            phase[i] = rng.uniform(0.0, 2.0 * M_PI);
            amp_jitter[i] = rng.uniform(0.85, 1.15);
        }

        for (int s = 0; s < slices_per; ++s) {
            const double t = s - 0.5 * (slices_per - 1);  // drift centered mid-stack
            Image2D field = random_field(size, 0.015,
                                         derive_seed(seed, 23, (static_cast<std::uint64_t>(si) << 16) |
                                                                   static_cast<std::uint64_t>(s)));
            for (int r = 0; r < size; ++r) {
                for (int c = 0; c < size; ++c) {
                    double label = 0.0;  // painter's order with anti-aliased blending
                    for (const auto& el : ellipses) {
                        double cov = coverage(el, t, r + 0.5, c + 0.5);
                        label = (1.0 - cov) * label + cov * el.tissue;
                    }
                    if (label <= 0.0) continue;  // background stays exactly 0 in both

                    // Modality A: monotone increasing tissue contrast.
                    double a_val = 0.95 * std::pow(label, 0.85);
                    // Modality B: inverted/compressed contrast, forced to 0 at
                    // the support boundary, plus the modality-specific texture.
                    double envelope = std::clamp(label / 0.12, 0.0, 1.0);
                    double tex = 0.0;
                    for (std::size_t i = 0; i < texture.fr.size(); ++i)
                        tex += texture.amp[i] * amp_jitter[i] *
                               std::sin(2.0 * M_PI * (texture.fr[i] * r + texture.fc[i] * c) /
                                            static_cast<double>(size) +
                                        phase[i]);
                    double b_val = envelope * (0.86 - 0.58 * std::pow(label, 0.8) + tex + field.at(r, c));

                    subj.modality_a.at(s, r, c) = std::clamp(a_val, 0.0, 1.0);
                    subj.modality_b.at(s, r, c) = std::clamp(b_val, 0.0, 1.0);
                }
            }
        }
        subjects.push_back(std::move(subj));
    }
    return subjects;
}

Manifest write_phantom_dataset(const std::vector<PhantomSubject>& subjects, const std::string& dir) {
    fs::create_directories(dir);
    Manifest manifest;
    manifest.base_dir = dir;
    for (const auto& s : subjects) {
        Subject ms;
        ms.id = s.id;
        ms.voxel_mm = 1.0;
        const std::string a_name = s.id + "_A.raw";
        const std::string b_name = s.id + "_B.raw";
        save_volume(s.modality_a, (fs::path(dir) / a_name).string());
        save_volume(s.modality_b, (fs::path(dir) / b_name).string());
        ms.volumes["A"] = {a_name, s.modality_a.slices, s.modality_a.height, s.modality_a.width};
        ms.volumes["B"] = {b_name, s.modality_b.slices, s.modality_b.height, s.modality_b.width};
        manifest.subjects.push_back(std::move(ms));
    }
    save_manifest(manifest, (fs::path(dir) / "manifest.json").string());
    return manifest;
}

namespace {

void write_pgm_header(std::ofstream& out, int width, int height, int maxval, const std::string& comment) {
    out << "P5\n# " << comment << "\n" << width << " " << height << "\n" << maxval << "\n";
}

struct PgmData {
    int width = 0, height = 0, maxval = 0;
    std::vector<std::uint16_t> pixels;
};

PgmData read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open graymap: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw IoError("not a P5 graymap: " + path);
    auto next_token = [&]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw IoError("truncated graymap header: " + path);
    };
    PgmData pgm;
    pgm.width = std::stoi(next_token());
    pgm.height = std::stoi(next_token());
    pgm.maxval = std::stoi(next_token());
    in.get();  // single whitespace after maxval
    const std::size_t count = static_cast<std::size_t>(pgm.width) * pgm.height;
    pgm.pixels.resize(count);
    if (pgm.maxval > 255) {
        std::vector<unsigned char> bytes(count * 2);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!in) throw IoError("truncated graymap data: " + path);
        for (std::size_t i = 0; i < count; ++i)
            pgm.pixels[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
    } else {
        std::vector<unsigned char> bytes(count);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!in) throw IoError("truncated graymap data: " + path);
        for (std::size_t i = 0; i < count; ++i) pgm.pixels[i] = bytes[i];
    }
    return pgm;
}

}  // namespace

void export_mask_pgm(const BinaryMask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write graymap: " + path);
    std::ostringstream comment;
    comment << "binary mask " << mask.height << "x" << mask.width << " factor=" << mask.factor;
    write_pgm_header(out, mask.width, mask.height, 255, comment.str());
    std::vector<unsigned char> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on graymap: " + path);
}

void export_probmask_pgm(const ProbMask& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write graymap: " + path);
    double peak = *std::max_element(p.data.begin(), p.data.end());
    std::ostringstream comment;
    comment << "prob mask " << p.height << "x" << p.width << " factor=" << p.target_factor
            << " peak=" << peak;
    write_pgm_header(out, p.width, p.height, 65535, comment.str());
    std::vector<unsigned char> bytes(p.size() * 2);
    const double scale = peak > 0.0 ? 65535.0 / peak : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto q = static_cast<std::uint16_t>(std::lround(std::max(0.0, p.data[i]) * scale));
        bytes[2 * i] = static_cast<unsigned char>(q >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on graymap: " + path);
}

BinaryMask load_mask_pgm(const std::string& path) {
    PgmData pgm = read_pgm(path);
    if (pgm.maxval > 255) throw IoError("expected 8-bit binary-mask graymap: " + path);
    BinaryMask mask(pgm.height, pgm.width);
    long ones = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.data[i] = pgm.pixels[i] >= 128 ? 1 : 0;
        ones += mask.data[i];
    }
    mask.factor = static_cast<double>(ones) / static_cast<double>(mask.size());
    return mask;
}

Grid2D<std::uint16_t> load_pgm16(const std::string& path) {
    PgmData pgm = read_pgm(path);
    Grid2D<std::uint16_t> g(pgm.height, pgm.width);
    g.data = pgm.pixels;
    return g;
}

}  // namespace ksopt
