#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "ksopt/dataio.hpp"
#include "ksopt/fourier.hpp"
#include "ksopt/translator.hpp"
#include "test_util.hpp"

using namespace ksopt;

TEST_SUITE_BEGIN("translator");

namespace {

PairedSliceSet paired_from(const std::vector<Image2D>& ref, const std::vector<Image2D>& tgt) {
    return make_paired_set(ref, tgt);
}

std::vector<Image2D> random_slices(int n, int h, int w, unsigned seed) {
    std::vector<Image2D> out;
    for (int i = 0; i < n; ++i) out.push_back(oracle::random_image(h, w, seed + static_cast<unsigned>(i)));
    return out;
}

}  // namespace

TEST_CASE("lut: identity mapping is recovered within a bin width") {
    auto t1 = random_slices(4, 24, 24, 1);
    PairedSliceSet set = paired_from(t1, t1);  // TM == T1
    TranslatorModel lut = fit_intensity_lut(set, 256);
    Image2D out = translate(lut, set[1]);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::fabs(out.data[i] - set[1].t1.data[i]) <= 1.0 / 256.0 + 1e-12);
}

TEST_CASE("lut: flip mapping TM = 1 - T1 is recovered within a bin width") {
    auto t1 = random_slices(4, 24, 24, 7);
    std::vector<Image2D> tm;
    for (const auto& s : t1) {
        Image2D f(s.height, s.width);
        for (std::size_t i = 0; i < s.size(); ++i) f.data[i] = 1.0 - s.data[i];
        tm.push_back(f);
    }
    PairedSliceSet set = paired_from(t1, tm);
    TranslatorModel lut = fit_intensity_lut(set, 256);
    Image2D out = translate(lut, set[2]);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::fabs(out.data[i] - (1.0 - set[2].t1.data[i])) <= 1.0 / 256.0 + 1e-12);
}

TEST_CASE("lut: single-bin degenerate pair fills every bin by nearest-neighbor") {
    Image2D t1(8, 8), tm(8, 8);
    std::fill(t1.data.begin(), t1.data.end(), 0.5);
    std::fill(tm.data.begin(), tm.data.end(), 0.3);
    PairedSliceSet set = paired_from({t1}, {tm});
    TranslatorModel lut = fit_intensity_lut(set, 256);
    for (double v : lut.lut) CHECK(v == doctest::Approx(0.3));
    Image2D probe(1, 3);
    probe.data = {0.0, 0.5, 1.0};
    Image2D out = translate(lut, probe, probe, probe);
    for (double v : out.data) CHECK(v == doctest::Approx(0.3));
}

TEST_CASE("lut: empty training set throws") {
    CHECK_THROWS_AS(fit_intensity_lut({}, 256), std::invalid_argument);
}

TEST_CASE("lut: training loss is no worse than any perturbed bin assignment") {
    auto t1 = random_slices(3, 16, 16, 21);
    std::vector<Image2D> tm;
    for (const auto& s : t1) {
        Image2D f(s.height, s.width);
        for (std::size_t i = 0; i < s.size(); ++i)
            f.data[i] = 0.2 + 0.6 * s.data[i] * s.data[i];
        tm.push_back(f);
    }
    PairedSliceSet set = paired_from(t1, tm);
    TranslatorModel lut = fit_intensity_lut(set, 64);

    // L2 objective with per-bin-constant prediction (no interpolation): the
    // conditional mean is the unique minimizer, so any perturbation hurts.
    auto loss_with = [&](const std::vector<double>& table) {
        double total = 0.0;
        for (const auto& p : set)
            for (std::size_t i = 0; i < p.t1.size(); ++i) {
                int b = std::clamp(static_cast<int>(p.t1.data[i] * 64), 0, 63);
                double d = table[static_cast<std::size_t>(b)] - p.tm.data[i];
                total += d * d;
            }
        return total;
    };
    double base = loss_with(lut.lut);
    std::mt19937_64 eng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> perturbed = lut.lut;
        std::size_t b = eng() % perturbed.size();
        perturbed[b] += std::uniform_real_distribution<double>(-0.2, 0.2)(eng);
        CHECK(loss_with(perturbed) >= base - 1e-12);
    }
}

TEST_CASE("ridge: exact linear generative model is recovered") {
    // TM = 0.5 * center pixel of T1
    auto t1 = random_slices(6, 20, 20, 31);
    std::vector<Image2D> tm;
    for (const auto& s : t1) {
        Image2D f(s.height, s.width);
        for (std::size_t i = 0; i < s.size(); ++i) f.data[i] = 0.5 * s.data[i];
        tm.push_back(f);
    }
    PairedSliceSet set = paired_from(t1, tm);
    TranslatorModel model = fit_patch_ridge(set, 3, 1e-10, 0, 0);
    const int dim = 3 * 9 + 1;
    REQUIRE(static_cast<int>(model.weights.size()) == dim);
    // center-pixel coordinate of the middle slice patch: slice 1, offset (0,0)
    const int center_idx = 9 + 4;
    for (int i = 0; i < dim; ++i) {
        if (i == center_idx)
            CHECK(std::fabs(model.weights[static_cast<std::size_t>(i)] - 0.5) < 1e-6);
        else
            CHECK(std::fabs(model.weights[static_cast<std::size_t>(i)]) < 1e-6);
    }
    Image2D out = translate(model, set[3]);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::fabs(out.data[i] - tm[3].data[i]) < 1e-5);
}

TEST_CASE("ridge: huge lambda shrinks weights to the bias") {
    auto t1 = random_slices(4, 16, 16, 41);
    std::vector<Image2D> tm;
    double mean_tm = 0.0;
    for (const auto& s : t1) {
        Image2D f(s.height, s.width);
        for (std::size_t i = 0; i < s.size(); ++i) {
            f.data[i] = 0.25 + 0.5 * s.data[i];
            mean_tm += f.data[i];
        }
        tm.push_back(f);
    }
    mean_tm /= 4.0 * 16.0 * 16.0;
    PairedSliceSet set = paired_from(t1, tm);
    TranslatorModel model = fit_patch_ridge(set, 3, 1e9, 0, 0);
    for (std::size_t i = 0; i + 1 < model.weights.size(); ++i)
        CHECK(std::fabs(model.weights[i]) < 1e-3);
    // bias is also shrunk at lambda=1e9 with ~3k rows; it only needs to move
    // toward the target mean rather than stay at zero
    CHECK(model.weights.back() > 0.0);
    CHECK(model.weights.back() < mean_tm);
}

TEST_CASE("ridge: matches a dense normal-equations oracle on a tiny system") {
    auto t1 = random_slices(1, 5, 4, 51);
    auto tm = random_slices(1, 5, 4, 61);
    PairedSliceSet set = paired_from(t1, tm);
    const int k = 3, dim = 3 * k * k + 1;
    const double lambda = 1e-3;
    TranslatorModel model = fit_patch_ridge(set, k, lambda, 0, 0);

    // dense oracle with explicit patch extraction
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
        return i;
    };
    const int rows = 20;
    Eigen::MatrixXd a(rows, dim);
    Eigen::VectorXd b(rows);
    int row = 0;
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c, ++row) {
            int col = 0;
            for (const Image2D* s : {&set[0].t1_prev, &set[0].t1, &set[0].t1_next})
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc)
                        a(row, col++) = s->at(reflect(r + dr, 5), reflect(c + dc, 4));
            a(row, col) = 1.0;
            b(row) = set[0].tm.at(r, c);
        }
    Eigen::MatrixXd sys = a.transpose() * a + lambda * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd beta = sys.ldlt().solve(a.transpose() * b);
    for (int i = 0; i < dim; ++i)
        CHECK(std::fabs(model.weights[static_cast<std::size_t>(i)] - beta(i)) < 1e-10);
}

TEST_CASE("ridge: normal-equation residual is tiny") {
    auto t1 = random_slices(2, 12, 12, 71);
    auto tm = random_slices(2, 12, 12, 81);
    PairedSliceSet set = paired_from(t1, tm);
    const int k = 3, dim = 3 * k * k + 1;
    const double lambda = 1e-3;
    TranslatorModel model = fit_patch_ridge(set, k, lambda, 0, 0);

    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
        return i;
    };
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(dim);
    for (const auto& p : set)
        for (int r = 0; r < 12; ++r)
            for (int c = 0; c < 12; ++c) {
                Eigen::VectorXd row(dim);
                int col = 0;
                for (const Image2D* s : {&p.t1_prev, &p.t1, &p.t1_next})
                    for (int dr = -1; dr <= 1; ++dr)
                        for (int dc = -1; dc <= 1; ++dc)
                            row(col++) = s->at(reflect(r + dr, 12), reflect(c + dc, 12));
                row(col) = 1.0;
                ata += row * row.transpose();
                atb += row * p.tm.at(r, c);
            }
    Eigen::Map<const Eigen::VectorXd> beta(model.weights.data(), dim);
    Eigen::VectorXd resid =
        (ata + lambda * Eigen::MatrixXd::Identity(dim, dim)) * beta - atb;
    CHECK(resid.norm() <= 1e-8 * atb.norm());
}

TEST_CASE("ridge: even patch size throws") {
    auto t1 = random_slices(1, 8, 8, 91);
    CHECK_THROWS_AS(fit_patch_ridge(paired_from(t1, t1), 4, 1e-3, 0, 0), std::invalid_argument);
}

TEST_CASE("ridge: forcing lambda 0 on a singular system throws") {
    // constant reference slices make every patch column collinear
    Image2D t1(8, 8), tm(8, 8);
    std::fill(t1.data.begin(), t1.data.end(), 0.5);
    std::fill(tm.data.begin(), tm.data.end(), 0.3);
    PairedSliceSet set = paired_from({t1}, {tm});
    CHECK_THROWS_AS(fit_patch_ridge(set, 3, 0.0, 0, 0), SingularSystemError);
}

TEST_CASE("identity translator returns the center slice") {
    auto t1 = random_slices(3, 10, 10, 95);
    auto tm = random_slices(3, 10, 10, 96);
    PairedSliceSet set = paired_from(t1, tm);
    TranslatorModel model;  // identity by default
    Image2D out = translate(model, set[1]);
    CHECK(out.data == set[1].t1.data);
}

TEST_CASE("boundary slices duplicate their single neighbor") {
    auto t1 = random_slices(3, 6, 6, 97);
    auto tm = random_slices(3, 6, 6, 98);
    PairedSliceSet set = make_paired_set(t1, tm, 100);
    CHECK(set[0].t1_prev.data == t1[0].data);
    CHECK(set[0].prev_index == 100);
    CHECK(set[2].t1_next.data == t1[2].data);
    CHECK(set[2].next_index == 102);
    CHECK(set[1].prev_index == 100);
    CHECK(set[1].next_index == 102);
}

TEST_CASE("residual: perfect translator gives a zero map") {
    auto t1 = random_slices(3, 16, 16, 99);
    PairedSliceSet set = paired_from(t1, t1);
    TranslatorModel model;  // identity translator, TM == T1
    ResidualMap r = residual_map(model, set);
    for (double v : r.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("residual: sinusoid discrepancy shows two conjugate spikes") {
    const int n = 32;
    const double amp = 0.25;
    const int fr = 5, fc = 9;
    Image2D t1 = oracle::random_image(n, n, 101);
    Image2D tm(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            tm.at(r, c) = t1.at(r, c) + amp * std::sin(2.0 * M_PI * (fr * r + fc * c) / n);
    PairedSliceSet set = paired_from({t1}, {tm});
    TranslatorModel model;  // identity
    ResidualMap r = residual_map(model, set);
    const double spike = amp * n / 2.0;  // amp * sqrt(MN) / 2 for n x n
    for (int kr = 0; kr < n; ++kr)
        for (int kc = 0; kc < n; ++kc) {
            bool pos = kr == dc_row(n) + fr && kc == dc_col(n) + fc;
            bool neg = kr == dc_row(n) - fr && kc == dc_col(n) - fc;
            if (pos || neg)
                CHECK(r.at(kr, kc) == doctest::Approx(spike).epsilon(1e-9));
            else
                CHECK(r.at(kr, kc) < 1e-9);
        }
}

TEST_CASE("residual: mean over two slices equals the mean of single-slice maps") {
    auto t1 = random_slices(2, 12, 12, 103);
    auto tm = random_slices(2, 12, 12, 104);
    PairedSliceSet both = paired_from(t1, tm);
    TranslatorModel model;  // identity
    ResidualMap r_both = residual_map(model, both);
    ResidualMap r0 = residual_map(model, {both[0]});
    ResidualMap r1 = residual_map(model, {both[1]});
    for (std::size_t i = 0; i < r_both.size(); ++i)
        CHECK(std::fabs(r_both.data[i] - 0.5 * (r0.data[i] + r1.data[i])) < 1e-14);
}

TEST_CASE("residual: invariant to validation order") {
    auto t1 = random_slices(4, 10, 10, 105);
    auto tm = random_slices(4, 10, 10, 106);
    PairedSliceSet set = paired_from(t1, tm);
    TranslatorModel model;
    ResidualMap fwd = residual_map(model, set);
    PairedSliceSet rev(set.rbegin(), set.rend());
    ResidualMap bwd = residual_map(model, rev);
    for (std::size_t i = 0; i < fwd.size(); ++i)
        CHECK(std::fabs(fwd.data[i] - bwd.data[i]) < 1e-13);
}

TEST_CASE("normalize_residual") {
    SUBCASE("affine map") {
        ResidualMap r(2, 2);
        r.data = {2.0, 6.0, 10.0, 4.0};
        NormalizedResidual n = normalize_residual(r);
        CHECK_FALSE(n.degenerate);
        CHECK(n.map.data[0] == 0.0);
        CHECK(n.map.data[1] == doctest::Approx(0.5));
        CHECK(n.map.data[2] == 1.0);
    }
    SUBCASE("constant map flags degeneracy") {
        ResidualMap r(3, 3);
        std::fill(r.data.begin(), r.data.end(), 4.2);
        NormalizedResidual n = normalize_residual(r);
        CHECK(n.degenerate);
        for (double v : n.map.data) CHECK(v == 0.0);
    }
    SUBCASE("range and idempotence") {
        Image2D rnd = oracle::random_image(16, 16, 107, 0.5, 9.0);
        ResidualMap r(16, 16);
        r.data = rnd.data;
        NormalizedResidual n1 = normalize_residual(r);
        for (double v : n1.map.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        NormalizedResidual n2 = normalize_residual(n1.map);
        for (std::size_t i = 0; i < n1.map.size(); ++i)
            CHECK(n2.map.data[i] == doctest::Approx(n1.map.data[i]).epsilon(1e-14));
    }
}

TEST_CASE("model save/load round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "ksopt_translator_test";
    fs::create_directories(dir);

    auto t1 = random_slices(2, 12, 12, 108);
    auto tm = random_slices(2, 12, 12, 109);
    PairedSliceSet set = paired_from(t1, tm);

    TranslatorModel lut = fit_intensity_lut(set, 64);
    save_translator(lut, (dir / "lut.txt").string());
    TranslatorModel lut2 = load_translator((dir / "lut.txt").string());
    CHECK(lut2.kind == TranslatorKind::intensity_lut);
    CHECK(lut2.bins == 64);
    for (std::size_t i = 0; i < lut.lut.size(); ++i)
        CHECK(lut2.lut[i] == doctest::Approx(lut.lut[i]).epsilon(1e-15));

    TranslatorModel ridge = fit_patch_ridge(set, 3, 1e-3, 0, 0);
    save_translator(ridge, (dir / "ridge.txt").string());
    TranslatorModel ridge2 = load_translator((dir / "ridge.txt").string());
    CHECK(ridge2.kind == TranslatorKind::patch_ridge);
    CHECK(ridge2.patch == 3);
    for (std::size_t i = 0; i < ridge.weights.size(); ++i)
        CHECK(ridge2.weights[i] == doctest::Approx(ridge.weights[i]).epsilon(1e-15));

    fs::remove_all(dir);
}

TEST_CASE("external translator loads slices by index and validates them") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "ksopt_external_test";
    fs::create_directories(dir);
    Volume v(3, 8, 8);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<double>(i % 7) / 7.0;
    save_volume(v, (dir / "ext.raw").string());

    TranslatorModel model = make_external_translator((dir / "ext.raw").string(), 3, 8, 8);
    Image2D dummy(8, 8);
    Image2D out = translate(model, dummy, dummy, dummy, 2);
    Image2D expect = v.slice(2);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(static_cast<float>(out.data[i]) == static_cast<float>(expect.data[i]));
    CHECK_THROWS_AS(translate(model, dummy, dummy, dummy, 5), IoError);
    CHECK_THROWS_AS(translate(model, dummy, dummy, dummy, -1), IoError);
    fs::remove_all(dir);
}

TEST_SUITE_END();
