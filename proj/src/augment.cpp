#include "spectral_forge/augment.hpp"

#include "spectral_forge/rng.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace spectral_forge::augment {

void AugmentConfig::validate() const {
    if (factor < 1) throw ValidationError("augment.factor must be at least 1");
    if (!(offset_scale >= 0) || !(mult_scale >= 0) || !(slope_scale >= 0)) {
        throw ValidationError("augment scales must be non-negative");
    }
}

double index_axis(std::size_t i, std::size_t n) noexcept {
    if (n < 2) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

void apply_artefact(const Artefact& a, std::span<const double> in, std::span<double> out) noexcept {
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.multiplier * in[i] + a.offset + a.slope * index_axis(i, n);
}

double global_std(const SpectralMatrix& x) {
    const auto d = x.data();
    if (d.empty()) return 0.0;
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(d.size()));
}

Dataset augment(const Dataset& train, const AugmentConfig& cfg) {
    cfg.validate();
    if (cfg.factor == 1) return train;

    const std::size_t n = train.size();
    const std::size_t f = train.x.cols();
    const double sigma_x = global_std(train.x);

    std::vector<double> data(cfg.factor * n * f);
    std::vector<std::string> ids;
    std::vector<TargetRow> targets;
    ids.reserve(cfg.factor * n);
    targets.reserve(cfg.factor * n);

    std::copy(train.x.data().begin(), train.x.data().end(), data.begin());
    ids.assign(train.x.sample_ids().begin(), train.x.sample_ids().end());
    targets.assign(train.y.values().begin(), train.y.values().end());

    std::size_t out_row = n;
    for (std::size_t r = 0; r < n; ++r) {
        const auto source = train.x.row(r);
        for (std::size_t v = 1; v < cfg.factor; ++v, ++out_row) {
            Rng rng(derive_seed(cfg.seed, "augment", {r, v}));
            Artefact a;
            a.offset = rng.normal(0.0, cfg.offset_scale * sigma_x);
            a.multiplier = rng.normal(1.0, cfg.mult_scale);
            a.slope = rng.normal(0.0, cfg.slope_scale * sigma_x);
            apply_artefact(a, source, std::span<double>(data.data() + out_row * f, f));
            ids.push_back(train.x.sample_ids()[r] + "#aug" + std::to_string(v));
            targets.push_back(train.y[r]);
        }
    }
    return Dataset(SpectralMatrix(train.x.axis(), std::move(data), std::move(ids)), TargetMatrix(std::move(targets)));
}

}  // namespace spectral_forge::augment
