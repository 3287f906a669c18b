#pragma once

#include "spectral_forge/core.hpp"

#include <cstdint>

namespace spectral_forge::augment {

/// Scales are relative: offsets and slopes are multiples of the global
/// standard deviation of the training matrix, the multiplier is 1 + N(0, mult).
struct AugmentConfig {
    std::size_t factor = 50;
    double offset_scale = 0.10;
    double mult_scale = 0.05;
    double slope_scale = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-row artefact draw. A variant is m * x + o + s * t with t the channel
/// index mapped linearly onto [-1, 1].
struct Artefact {
    double offset = 0.0;
    double multiplier = 1.0;
    double slope = 0.0;
};

/// Position of channel i on [-1, 1].
double index_axis(std::size_t i, std::size_t n) noexcept;

void apply_artefact(const Artefact& a, std::span<const double> in, std::span<double> out) noexcept;

/// Population standard deviation over every entry of the matrix.
double global_std(const SpectralMatrix& x);

/// Returns factor x n rows: the n originals first, then for each source row
/// (in order) its factor - 1 variants. Variant v of row r draws from the
/// stream derive_seed(seed, "augment", {r, v}), so results do not depend on
/// evaluation order.
Dataset augment(const Dataset& train, const AugmentConfig& cfg);

}  // namespace spectral_forge::augment
