#pragma once

#include "spectral_forge/core.hpp"
#include "spectral_forge/nn.hpp"

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectral_forge::train {

/// Raised when the loss becomes non-finite during optimization.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::size_t batch_size = 38;
    double lr = 0.0015;
    std::size_t max_epochs = 1500;
    std::size_t patience = 55;
    double weight_decay = 0.001;
    double dropout = 0.10;
    double huber_delta = nn::kDefaultHuberDelta;
    /// Share of original training samples held out for early stopping.
    double val_fraction = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
};

/// 0.01 * batch_size / 256.
double heuristic_lr(std::size_t batch_size);

/// Per-target z-scoring with the mean and sample standard deviation.
struct TargetScaler {
    TargetRow mean{};
    TargetRow std{};

    static TargetScaler fit(const TargetMatrix& y);
    TargetMatrix transform(const TargetMatrix& y) const;
    TargetMatrix inverse(const TargetMatrix& z) const;
    TargetRow inverse_row(std::span<const double> z) const;
};

/// Tracks the best validation loss. An epoch improves only when its loss is
/// strictly below the best so far; training stops after `patience`
/// consecutive epochs without improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience);

    /// Records an epoch (1-based). Returns true when it improved on the best,
    /// in which case `params` is copied as the new snapshot.
    bool observe(std::size_t epoch, double loss, std::span<const nn::Tensor> params = {});

    bool should_stop() const noexcept { return stale_ >= patience_; }
    std::size_t patience() const noexcept { return patience_; }
    double best_loss() const noexcept { return best_loss_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    const std::vector<nn::Tensor>& best_params() const noexcept { return best_params_; }

private:
    std::size_t patience_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t stale_ = 0;
    std::vector<nn::Tensor> best_params_;
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    double wall_seconds = 0.0;

    std::size_t epochs() const noexcept { return train_loss.size(); }
    /// `epochs`, `train_loss`, `val_loss`, `best_epoch`, `stopped_early`.
    /// Wall time is left out so reruns serialize identically.
    std::string to_json() const;
};

struct InnerSplit {
    Dataset train;
    Dataset val;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

/// Holds out ceil(val_fraction * n) original samples for validation.
InnerSplit inner_split(const Dataset& data, double val_fraction, std::uint64_t seed);

struct TrainedModel {
    nn::ModelSpec spec;
    nn::ModelState state;
    TrainReport report;
};

/// Mini-batch AdamW on the Huber loss of z-scored targets. Returns the
/// parameters of the epoch with the lowest validation loss.
TrainedModel train_model(const nn::ModelSpec& spec, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg, const TargetScaler& scaler);

/// Mean Huber loss of the model on `data`, eval mode, scaled targets.
double evaluate_loss(const nn::ModelSpec& spec, const nn::ModelState& state, const Dataset& data,
                     const TargetScaler& scaler, double huber_delta);

/// Eval-mode forward pass followed by inverse target scaling.
TargetMatrix predict(const nn::ModelState& state, const nn::ModelSpec& spec, const SpectralMatrix& x,
                     const TargetScaler& scaler);

/// Copies a spectral matrix into a [rows, cols] tensor.
nn::Tensor to_tensor(const SpectralMatrix& x);

}  // namespace spectral_forge::train
