#pragma once

// Exact gradients of the masked MSE through the FlowMixer graph, optimizers,
// windowing and the training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flowmixer/datagen.hpp"
#include "flowmixer/model.hpp"

namespace flowmixer::training {

using linalg::Matrix;
using model::FlowMixer;
using model::Gradients;
using model::MixerConfig;
using model::MixerWeights;

enum class Optimizer { sgd_momentum, adamw };
std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
    Optimizer optimizer = Optimizer::adamw;
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    double plateau_factor = 0.1;
    std::size_t plateau_patience = 5;
    std::size_t early_stop_patience = 10;
    std::uint64_t seed = 0;
    std::size_t stride = 1;
    /// Per-epoch cap on training windows (random subset, 0 = all).
    std::size_t max_train_windows = 0;
    /// Cap on validation windows (evenly spaced subset, 0 = all).
    std::size_t max_val_windows = 0;
    bool verbose = false;

    void validate() const;
    /// Reads the [train] section (batch, optim, init_lr, w_decay, ...).
    static TrainConfig from_config(const Config& c, const std::string& section = "train");
    void to_config(Config& c, const std::string& section = "train") const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_mse = 0;
    double val_mse = 0;
    double lr = 0;
    double seconds = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val = 0;
    void write_csv(const std::filesystem::path& path) const;
};

/// Mean squared error over output rows [offset, offset + h) and all features.
double loss_masked_mse(const Matrix& pred, const Matrix& target, std::size_t h, std::size_t offset = 0);

struct LossGrad {
    double loss = 0;
    Gradients grads;
};

/// Loss and exact gradients for one instance. Dropout masks are drawn from rng
/// when the config has dropout and rng is given.
LossGrad backward(const Matrix& x, const Matrix& target, const FlowMixer& m, std::size_t h,
                  std::mt19937_64* rng = nullptr);

/// Mean loss and averaged gradients over a batch sharing one built mixing.
LossGrad backward_batch(const std::vector<const Matrix*>& xs, const std::vector<const Matrix*>& targets,
                        const FlowMixer& m, std::mt19937_64* rng = nullptr);

struct OptimizerState {
    std::vector<std::vector<double>> m1;  // momentum / first moment
    std::vector<std::vector<double>> m2;  // second moment
    std::uint64_t t = 0;
};

void sgd_momentum_step(MixerWeights& w, const Gradients& g, OptimizerState& s, const TrainConfig& cfg, double lr);
void adamw_step(MixerWeights& w, const Gradients& g, OptimizerState& s, const TrainConfig& cfg, double lr);
/// Keeps every normalization scale at least 1e-4 away from zero.
void clamp_affine(MixerWeights& w);

struct Window {
    Matrix x;
    Matrix target;  // n_t rows, forecast rows filled, the rest zero
};

/// Chronological windows: x = rows [s, s+n_t), target = the h rows after it placed
/// at rows [0, h) and zero-padded to n_t rows.
std::vector<Window> sliding_windows(const Matrix& series, std::size_t n_t, std::size_t h, std::size_t stride);
/// Start rows of all windows whose input begins at or after `first_input` and whose
/// target lies in [target_lo, target_hi).
std::vector<std::size_t> window_starts(std::size_t target_lo, std::size_t target_hi, std::size_t n_t, std::size_t h,
                                       std::size_t stride, std::size_t first_input = 0);
Window make_window(const Matrix& series, std::size_t start, const MixerConfig& c);

/// Windows whose targets lie in one split; inputs may reach back into the previous one.
std::vector<std::size_t> split_windows(const datagen::SeriesDataset& ds, datagen::Split split, const MixerConfig& c,
                                       std::size_t stride);

/// Mean masked MSE of the model over the given windows.
double evaluate(const FlowMixer& m, const Matrix& series, const std::vector<std::size_t>& starts);

struct TrainResult {
    FlowMixer model;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const datagen::SeriesDataset& ds, const MixerConfig& mc, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

/// Feeds forecasts back as inputs until `steps` rows have been produced.
Matrix rollout(const FlowMixer& m, const Matrix& history, std::size_t steps);

}  // namespace flowmixer::training
