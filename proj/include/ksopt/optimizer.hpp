#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ksopt/types.hpp"

namespace ksopt {

struct TrainConfig {
    double factor = 0.25;   // target under-sampling factor R
    double sigma_p = 5.0;   // sigmoid slope
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 16;
    int min_epochs = 50;
    int max_epochs = 200;
    int patience = 10;      // epochs without validation improvement after min_epochs
    std::uint64_t seed = 0;
};

// Uniform [-0.1, 0.1], then mean-subtracted so the empirical mean is exactly 0.
WeightMap init_weights(int height, int width, std::uint64_t seed);

// Intermediates of one forward pass, kept for the analytic backward pass.
struct ForwardCache {
    int height = 0, width = 0;
    double factor = 0.0, sigma_p = 0.0;
    RealGrid mass;           // m = ReLU(clip(w) + r_norm)
    double mass_mean = 0.0;
    RealGrid soft;           // sigmoid(sigma_p * (P - th))
    std::vector<std::uint8_t> active;  // ReLU and clip both pass
    std::vector<KSpace2D> spectra;     // F(x_i)
    std::vector<ComplexImage2D> recon; // F^-1(soft * F(x_i))
    std::vector<const Image2D*> batch;
};

// loss = (1/2n) sum_i mean((|F^-1(Msoft * F(x_i))| - x_i)^2).
double forward_loss(const WeightMap& w, const ResidualMap& r_norm,
                    const std::vector<const Image2D*>& batch, const ThresholdMatrix& th,
                    const TrainConfig& cfg, ForwardCache* cache = nullptr);

// Exact gradient of forward_loss with respect to w, from the cache.
RealGrid grad_w(const ForwardCache& cache);

struct TrainState {
    WeightMap w;
    RealGrid moment1, moment2;
    long step = 0;
    long epoch = 0;
    std::uint64_t seed = 0;
    double best_val = std::numeric_limits<double>::infinity();
    ProbMask best_mask;
};

// Bias-corrected Adam update; increments step.
void adam_step(TrainState& state, const RealGrid& grad, const TrainConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;  // mean over the epoch's steps
    double val_loss = 0.0;
    double mean_p = 0.0;      // mean of P after the epoch, equals R by construction
    bool improved = false;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    TrainState state;
    ProbMask best_mask;  // probabilistic mask at the best validation epoch
    TrainLog log;
};

// Epochs over seeded shuffles; threshold matrix resampled per step; validation
// loss uses one fixed threshold matrix so model selection is deterministic.
// Runs at least min_epochs; stops at max_epochs or after `patience` epochs
// without strict validation improvement. Passing a resume state continues the
// trajectory from its recorded epoch/step counters.
TrainResult train(const std::vector<Image2D>& train_set, const std::vector<Image2D>& val_set,
                  const ResidualMap& r_norm, const TrainConfig& cfg,
                  const TrainState* resume = nullptr);

// P derived from the current weights and prior (the inference-time quantity).
ProbMask prob_mask_from_weights(const WeightMap& w, const ResidualMap& r_norm, double factor);

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::string& path);
struct Checkpoint {
    TrainState state;
    TrainConfig cfg;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ksopt
