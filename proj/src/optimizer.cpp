#include "ksopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ksopt/fourier.hpp"
#include "ksopt/probmask.hpp"
#include "ksopt/rng.hpp"

namespace ksopt {

WeightMap init_weights(int height, int width, std::uint64_t seed) {
    WeightMap w(height, width);
    Rng rng(seed);
    double mean = 0.0;
    for (auto& v : w.data) {
        v = rng.uniform(-0.1, 0.1);
        mean += v;
    }
    mean /= static_cast<double>(w.size());
    for (auto& v : w.data) v -= mean;
    return w;
}

double forward_loss(const WeightMap& w, const ResidualMap& r_norm,
                    const std::vector<const Image2D*>& batch, const ThresholdMatrix& th,
                    const TrainConfig& cfg, ForwardCache* cache) {
    if (batch.empty()) throw std::invalid_argument("forward_loss: empty batch");
    require_same_shape(w, r_norm, "forward_loss");
    require_same_shape(w, th, "forward_loss");

    RealGrid mass = adjusted_mass(w, r_norm);
    ProbMask p = scale_to_factor(mass, cfg.factor);
    RealGrid soft = soft_binarize(p, th, cfg.sigma_p);
    const double mass_mean =
        std::accumulate(mass.data.begin(), mass.data.end(), 0.0) / static_cast<double>(mass.size());

    if (cache) {
        cache->height = w.height;
        cache->width = w.width;
        cache->factor = cfg.factor;
        cache->sigma_p = cfg.sigma_p;
        cache->mass = mass;
        cache->mass_mean = mass_mean;
        cache->soft = soft;
        cache->active.assign(w.size(), 0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            bool relu_on = std::clamp(w.data[i], -1.0, 1.0) + r_norm.data[i] > 0.0;
            bool clip_on = w.data[i] > -1.0 && w.data[i] < 1.0;
            cache->active[i] = relu_on && clip_on;
        }
        cache->spectra.clear();
        cache->recon.clear();
        cache->batch = batch;
    }

    const double n = static_cast<double>(batch.size());
    const double mn = static_cast<double>(w.size());
    double loss = 0.0;
    for (const Image2D* img : batch) {
        require_same_shape(*img, w, "forward_loss");
        KSpace2D spectrum = fft2_centered(*img);
        KSpace2D masked(spectrum.height, spectrum.width);
        for (std::size_t i = 0; i < spectrum.size(); ++i)
            masked.data[i] = soft.data[i] * spectrum.data[i];
        ComplexImage2D rec = ifft2_centered(masked);
        double sse = 0.0;
        for (std::size_t i = 0; i < rec.size(); ++i) {
            double d = std::abs(rec.data[i]) - img->data[i];
            sse += d * d;
        }
        loss += sse / mn;
        if (cache) {
            cache->spectra.push_back(std::move(spectrum));
            cache->recon.push_back(std::move(rec));
        }
    }
    return loss / (2.0 * n);
}

RealGrid grad_w(const ForwardCache& cache) {
    const std::size_t mn = cache.mass.size();
    const double n = static_cast<double>(cache.batch.size());

    // d loss / d soft-mask, accumulated over the batch via one FFT per image:
    // with z = F^-1(soft * Y) and u = ((|z|-x)/|z|) * z,
    // dL/dM = sum_i Re(Y_i * conj(F(u_i))) / (n*MN).
    RealGrid g_soft(cache.height, cache.width);
    for (std::size_t b = 0; b < cache.batch.size(); ++b) {
        const Image2D& x = *cache.batch[b];
        const ComplexImage2D& z = cache.recon[b];
        ComplexImage2D u(cache.height, cache.width);
        for (std::size_t i = 0; i < mn; ++i) {
            double mag = std::abs(z.data[i]);
            if (mag == 0.0) continue;  // subgradient 0 at the magnitude kink
            u.data[i] = ((mag - x.data[i]) / mag) * z.data[i];
        }
        KSpace2D fu = fft2_centered(u);
        for (std::size_t i = 0; i < mn; ++i)
            g_soft.data[i] += (cache.spectra[b].data[i] * std::conj(fu.data[i])).real();
    }
    const double scale = 1.0 / (n * static_cast<double>(mn));
    for (auto& v : g_soft.data) v *= scale;

    // Through the sigmoid: dM/dP = sigma_p * s * (1 - s).
    RealGrid g_p(cache.height, cache.width);
    for (std::size_t i = 0; i < mn; ++i) {
        double s = cache.soft.data[i];
        g_p.data[i] = g_soft.data[i] * cache.sigma_p * s * (1.0 - s);
    }

    // Through the scaling P = R*m/mean(m):
    // dP_j/dm_i = R*(delta_ij*mean - m_j/MN)/mean^2.
    double coupled = 0.0;
    for (std::size_t i = 0; i < mn; ++i) coupled += g_p.data[i] * cache.mass.data[i];
    const double mbar = cache.mass_mean;
    RealGrid g_w(cache.height, cache.width);
    for (std::size_t i = 0; i < mn; ++i) {
        double gm = cache.factor * (g_p.data[i] * mbar - coupled / static_cast<double>(mn)) / (mbar * mbar);
        g_w.data[i] = cache.active[i] ? gm : 0.0;
    }
    return g_w;
}

void adam_step(TrainState& state, const RealGrid& grad, const TrainConfig& cfg) {
    require_same_shape(state.w, grad, "adam_step");
    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < state.w.size(); ++i) {
        double g = grad.data[i];
        state.moment1.data[i] = b1 * state.moment1.data[i] + (1.0 - b1) * g;
        state.moment2.data[i] = b2 * state.moment2.data[i] + (1.0 - b2) * g * g;
        double m_hat = state.moment1.data[i] / corr1;
        double v_hat = state.moment2.data[i] / corr2;
        state.w.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

ProbMask prob_mask_from_weights(const WeightMap& w, const ResidualMap& r_norm, double factor) {
    return scale_to_factor(adjusted_mass(w, r_norm), factor);
}

TrainResult train(const std::vector<Image2D>& train_set, const std::vector<Image2D>& val_set,
                  const ResidualMap& r_norm, const TrainConfig& cfg, const TrainState* resume) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: training and validation sets must be nonempty");
    const int h = r_norm.height, wdt = r_norm.width;

    TrainResult result;
    TrainState& state = result.state;
    if (resume) {
        state = *resume;
    } else {
        state.seed = cfg.seed;
        state.w = init_weights(h, wdt, derive_seed(cfg.seed, 41));
        state.moment1 = RealGrid(h, wdt);
        state.moment2 = RealGrid(h, wdt);
    }
    const int first_epoch = static_cast<int>(state.epoch) + 1;

    // Fixed validation threshold: model selection is deterministic even
    // though training thresholds are resampled each step.
    const ThresholdMatrix val_th = make_threshold(h, wdt, derive_seed(cfg.seed, 42));
    std::vector<const Image2D*> val_batch;
    for (const auto& img : val_set) val_batch.push_back(&img);

    std::vector<std::size_t> order(train_set.size());

    int stale = 0;
    for (int epoch = first_epoch; epoch <= cfg.max_epochs; ++epoch) {
        // each epoch's permutation is a pure function of (seed, epoch) so a
        // resumed run replays the exact trajectory
        std::iota(order.begin(), order.end(), 0u);
        Rng shuffle_rng(derive_seed(cfg.seed, 43, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        long steps = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const Image2D*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i)
                batch.push_back(&train_set[order[i]]);
            ThresholdMatrix th =
                make_threshold(h, wdt, derive_seed(cfg.seed, 44, static_cast<std::uint64_t>(state.step)));
            ForwardCache cache;
            epoch_loss += forward_loss(state.w, r_norm, batch, th, cfg, &cache);
            RealGrid g = grad_w(cache);
            adam_step(state, g, cfg);
            ++steps;
        }
        state.epoch = epoch;

        const double val_loss = forward_loss(state.w, r_norm, val_batch, val_th, cfg);
        ProbMask p = prob_mask_from_weights(state.w, r_norm, cfg.factor);
        const double mean_p =
            std::accumulate(p.data.begin(), p.data.end(), 0.0) / static_cast<double>(p.size());

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(steps);
        stats.val_loss = val_loss;
        stats.mean_p = mean_p;
        stats.improved = val_loss < state.best_val;
        result.log.epochs.push_back(stats);

        if (stats.improved) {
            state.best_val = val_loss;
            state.best_mask = p;
            stale = 0;
        } else {
            ++stale;
        }
        if (epoch >= cfg.min_epochs && stale >= cfg.patience) break;
    }

    result.best_mask = state.best_mask;
    return result;
}

namespace {

constexpr char kCheckpointMagic[] = "ksoptckpt1";

void write_grid(std::ofstream& out, const std::vector<double>& data) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

void read_grid(std::ifstream& in, std::vector<double>& data) {
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

std::uint64_t config_hash(const TrainConfig& cfg) {
    std::uint64_t hsh = mix64(0xabcdef);
    auto fold = [&hsh](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        hsh = mix64(hsh ^ bits);
    };
    fold(cfg.factor);
    fold(cfg.sigma_p);
    fold(cfg.lr);
    fold(cfg.beta1);
    fold(cfg.beta2);
    fold(cfg.epsilon);
    fold(static_cast<double>(cfg.batch_size));
    fold(static_cast<double>(cfg.min_epochs));
    fold(static_cast<double>(cfg.max_epochs));
    fold(static_cast<double>(cfg.patience));
    fold(static_cast<double>(cfg.seed));
    return hsh;
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    auto put64 = [&out](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto putd = [&out](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put64(static_cast<std::uint64_t>(state.w.height));
    put64(static_cast<std::uint64_t>(state.w.width));
    put64(static_cast<std::uint64_t>(state.step));
    put64(static_cast<std::uint64_t>(state.epoch));
    put64(state.seed);
    put64(config_hash(cfg));
    putd(cfg.factor);
    putd(cfg.sigma_p);
    putd(cfg.lr);
    putd(cfg.beta1);
    putd(cfg.beta2);
    putd(cfg.epsilon);
    put64(static_cast<std::uint64_t>(cfg.batch_size));
    put64(static_cast<std::uint64_t>(cfg.min_epochs));
    put64(static_cast<std::uint64_t>(cfg.max_epochs));
    put64(static_cast<std::uint64_t>(cfg.patience));
    put64(cfg.seed);
    putd(state.best_val);
    putd(state.best_mask.target_factor);
    put64(static_cast<std::uint64_t>(state.best_mask.height));
    put64(static_cast<std::uint64_t>(state.best_mask.width));
    write_grid(out, state.w.data);
    write_grid(out, state.moment1.data);
    write_grid(out, state.moment2.data);
    if (state.best_mask.height > 0) write_grid(out, state.best_mask.data);
    if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError("unrecognized checkpoint file: " + path);
    auto get64 = [&in] {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto getd = [&in] {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    Checkpoint ck;
    const int h = static_cast<int>(get64());
    const int w = static_cast<int>(get64());
    ck.state.step = static_cast<long>(get64());
    ck.state.epoch = static_cast<long>(get64());
    ck.state.seed = get64();
    const std::uint64_t stored_hash = get64();
    ck.cfg.factor = getd();
    ck.cfg.sigma_p = getd();
    ck.cfg.lr = getd();
    ck.cfg.beta1 = getd();
    ck.cfg.beta2 = getd();
    ck.cfg.epsilon = getd();
    ck.cfg.batch_size = static_cast<int>(get64());
    ck.cfg.min_epochs = static_cast<int>(get64());
    ck.cfg.max_epochs = static_cast<int>(get64());
    ck.cfg.patience = static_cast<int>(get64());
    ck.cfg.seed = get64();
    ck.state.best_val = getd();
    const double best_factor = getd();
    const int bh = static_cast<int>(get64());
    const int bw = static_cast<int>(get64());
    ck.state.w = WeightMap(h, w);
    ck.state.moment1 = RealGrid(h, w);
    ck.state.moment2 = RealGrid(h, w);
    read_grid(in, ck.state.w.data);
    read_grid(in, ck.state.moment1.data);
    read_grid(in, ck.state.moment2.data);
    if (bh > 0) {
        ck.state.best_mask = ProbMask(bh, bw);
        ck.state.best_mask.target_factor = best_factor;
        read_grid(in, ck.state.best_mask.data);
    }
    if (!in) throw IoError("truncated checkpoint file: " + path);
    if (stored_hash != config_hash(ck.cfg))
        throw IoError("checkpoint config hash mismatch: " + path);
    return ck;
}

}  // namespace ksopt
