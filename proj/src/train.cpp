#include "spectral_forge/train.hpp"

#include "spectral_forge/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace spectral_forge::train {

namespace {

constexpr std::size_t kEvalChunk = 256;

nn::Tensor gather_rows(const SpectralMatrix& x, std::span<const std::size_t> rows) {
    const std::size_t f = x.cols();
    nn::Tensor t({rows.size(), f});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = x.row(rows[i]);
        std::copy(r.begin(), r.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * f));
    }
    return t;
}

nn::Tensor gather_targets(const TargetMatrix& z, std::span<const std::size_t> rows) {
    nn::Tensor t({rows.size(), kTargetCount});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(z[rows[i]].begin(), z[rows[i]].end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * kTargetCount));
    }
    return t;
}

/// Eval-mode outputs for every row, in chunks.
nn::Tensor forward_all(nn::Network& net, const SpectralMatrix& x) {
    nn::Tensor out({x.rows(), net.spec().output_dim});
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < x.rows(); start += kEvalChunk) {
        const std::size_t end = std::min(x.rows(), start + kEvalChunk);
        rows.resize(end - start);
        std::iota(rows.begin(), rows.end(), start);
        const auto y = net.forward(gather_rows(x, rows), nn::Mode::Eval);
        std::copy(y.data.begin(), y.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * net.spec().output_dim));
    }
    return out;
}

double loss_on(nn::Network& net, const SpectralMatrix& x, const TargetMatrix& z, double delta) {
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return nn::huber_loss(forward_all(net, x), gather_targets(z, all), delta).value;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("train.batch_size must be at least 1");
    if (!(lr > 0.0)) throw ValidationError("train.lr must be positive");
    if (max_epochs < 1) throw ValidationError("train.max_epochs must be at least 1");
    if (patience < 1) throw ValidationError("train.patience must be at least 1");
    if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("train.dropout must lie in [0, 1)");
    if (!(huber_delta > 0.0)) throw ValidationError("train.huber_delta must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("train.val_fraction must lie in (0, 1)");
}

double heuristic_lr(std::size_t batch_size) {
    if (batch_size < 1) throw ValidationError("batch size must be at least 1");
    return 0.01 * static_cast<double>(batch_size) / 256.0;
}

TargetScaler TargetScaler::fit(const TargetMatrix& y) {
    if (y.rows() < 2) throw ValidationError("target scaling needs at least 2 training samples");
    TargetScaler s;
    const double n = static_cast<double>(y.rows());
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        double sum = 0.0;
        for (const auto& r : y.values()) sum += r[t];
        s.mean[t] = sum / n;
        double ss = 0.0;
        for (const auto& r : y.values()) ss += (r[t] - s.mean[t]) * (r[t] - s.mean[t]);
        s.std[t] = std::sqrt(ss / (n - 1.0));
        if (!(s.std[t] > 0.0)) {
            throw ValidationError(std::string("training targets for ") + kTargetNames[t] + " are constant");
        }
    }
    return s;
}

TargetMatrix TargetScaler::transform(const TargetMatrix& y) const {
    std::vector<TargetRow> out(y.values().begin(), y.values().end());
    for (auto& r : out) {
        for (std::size_t t = 0; t < kTargetCount; ++t) r[t] = (r[t] - mean[t]) / std[t];
    }
    return TargetMatrix(std::move(out));
}

TargetRow TargetScaler::inverse_row(std::span<const double> z) const {
    TargetRow r{};
    for (std::size_t t = 0; t < kTargetCount; ++t) r[t] = z[t] * std[t] + mean[t];
    return r;
}

TargetMatrix TargetScaler::inverse(const TargetMatrix& z) const {
    std::vector<TargetRow> out;
    out.reserve(z.rows());
    for (const auto& r : z.values()) out.push_back(inverse_row(r));
    return TargetMatrix(std::move(out));
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
    if (patience < 1) throw ValidationError("patience must be at least 1");
}

bool EarlyStopper::observe(std::size_t epoch, double loss, std::span<const nn::Tensor> params) {
    if (loss < best_loss_) {
        best_loss_ = loss;
        best_epoch_ = epoch;
        stale_ = 0;
        best_params_.assign(params.begin(), params.end());
        return true;
    }
    ++stale_;
    return false;
}

std::string TrainReport::to_json() const {
    const nlohmann::json doc = {{"epochs", epochs()},
                                {"train_loss", train_loss},
                                {"val_loss", val_loss},
                                {"best_epoch", best_epoch},
                                {"stopped_early", stopped_early}};
    return doc.dump(2);
}

InnerSplit inner_split(const Dataset& data, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ValidationError("validation fraction must lie in (0, 1)");
    }
    const std::size_t n = data.size();
    // The small epsilon keeps products such as 0.15 * 32 = 4.800000000000001 at 5.
    const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n) - 1e-9));
    if (n_val == 0 || n_val >= n) {
        throw ValidationError("inner split of " + std::to_string(n) + " samples at fraction " +
                              std::to_string(val_fraction) + " leaves an empty part");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    InnerSplit s;
    s.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(s.val_indices.begin(), s.val_indices.end());
    std::sort(s.train_indices.begin(), s.train_indices.end());
    s.train = data.select(s.train_indices);
    s.val = data.select(s.val_indices);
    return s;
}

TrainedModel train_model(const nn::ModelSpec& spec, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg, const TargetScaler& scaler) {
    cfg.validate();
    spec.validate();
    if (spec.output_dim != kTargetCount) throw ValidationError("model must output one value per target");
    if (train.size() == 0 || val.size() == 0) throw ValidationError("training and validation sets must be nonempty");
    if (train.x.cols() != spec.input_len || val.x.cols() != spec.input_len) {
        throw ValidationError("spectra have " + std::to_string(train.x.cols()) + " features but the model expects " +
                              std::to_string(spec.input_len));
    }
    const auto started = std::chrono::steady_clock::now();

    nn::Network net(spec, derive_seed(cfg.seed, "init"));
    nn::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, net.state().params);
    EarlyStopper stopper(cfg.patience);

    const TargetMatrix z_train = scaler.transform(train.y);
    const TargetMatrix z_val = scaler.transform(val.y);
    const std::size_t n = train.size();

    TrainReport report;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", {epoch}));
        shuffle_rng.shuffle(std::span<std::size_t>(order));

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            const auto x = gather_rows(train.x, rows);
            const auto y = gather_targets(z_train, rows);
            const auto out = net.forward(x, nn::Mode::Train, derive_seed(cfg.seed, "dropout", {epoch, batch_index}));
            const auto loss = nn::huber_loss(out, y, cfg.huber_delta);
            if (!std::isfinite(loss.value)) {
                throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index));
            }
            net.backward(loss.grad, false);
            opt.step(net.state().params, net.state().grads);
            epoch_loss += loss.value * static_cast<double>(rows.size());
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(n));

        const double val_loss = loss_on(net, val.x, z_val, cfg.huber_delta);
        if (!std::isfinite(val_loss)) {
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        report.val_loss.push_back(val_loss);
        stopper.observe(epoch, val_loss, net.state().params);
        if (stopper.should_stop()) {
            report.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    TrainedModel model{spec, std::move(net.state()), std::move(report)};
    model.state.params = stopper.best_params();
    model.state.zero_grad();
    return model;
}

double evaluate_loss(const nn::ModelSpec& spec, const nn::ModelState& state, const Dataset& data,
                     const TargetScaler& scaler, double huber_delta) {
    nn::Network net(spec, state);
    return loss_on(net, data.x, scaler.transform(data.y), huber_delta);
}

TargetMatrix predict(const nn::ModelState& state, const nn::ModelSpec& spec, const SpectralMatrix& x,
                     const TargetScaler& scaler) {
    if (x.cols() != spec.input_len) {
        throw ValidationError("spectra have " + std::to_string(x.cols()) + " features but the model expects " +
                              std::to_string(spec.input_len));
    }
    nn::Network net(spec, state);
    const auto z = forward_all(net, x);
    std::vector<TargetRow> rows;
    rows.reserve(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        rows.push_back(scaler.inverse_row(std::span<const double>(z.data.data() + i * kTargetCount, kTargetCount)));
    }
    return TargetMatrix(std::move(rows));
}

nn::Tensor to_tensor(const SpectralMatrix& x) {
    return nn::Tensor({x.rows(), x.cols()}, std::vector<double>(x.data().begin(), x.data().end()));
}

}  // namespace spectral_forge::train
