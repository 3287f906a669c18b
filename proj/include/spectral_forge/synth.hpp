#pragma once

#include "spectral_forge/core.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace spectral_forge::synth {

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

/// Artefact magnitudes. Offset and slope are multiples of the mean absolute
/// intensity of the matrix they are applied to; the multiplier is
/// 1 + N(0, mult).
struct ArtefactScales {
    double offset = 0.1;
    double mult = 0.1;
    double slope = 0.1;

    static ArtefactScales uniform(double s) { return {s, s, s}; }
};

struct SynthConfig {
    std::size_t n_samples = 39;
    std::size_t n_features = 427;
    double axis_first = 1891.58;
    double axis_last = 580.109;
    std::array<Range, kTargetCount> ranges{{{70.0, 80.0}, {10.0, 20.0}, {2.0, 8.0}}};
    /// Per-channel noise standard deviation relative to the mean clean intensity.
    double noise_std = 0.01;
    ArtefactScales artefacts;
    /// Adds a fourth "other constituents" spectrum weighted by the remainder
    /// to the sum of the range upper bounds, so the four weights of every
    /// sample have a constant total.
    bool balance_component = true;
    std::uint64_t seed = 0;

    /// 39 x 427 over 1891.58 to 580.109 cm^-1.
    static SynthConfig ingaas();
    /// 39 x 1971 over 4001.81 to 202.533 cm^-1.
    static SynthConfig ftraman();

    void validate() const;
};

struct Peak {
    double center = 0.0;  // channel index
    double width = 1.0;   // standard deviation in channels
    double amplitude = 1.0;
};

/// Pure-component spectra, each a sum of Gaussian peaks.
struct ComponentBasis {
    std::vector<std::string> names;
    std::vector<std::vector<Peak>> peaks;
    std::vector<std::vector<double>> spectra;
};

/// Seeded basis: 4 to 8 peaks per component, redrawn until the spectra are
/// well-conditioned as vectors.
ComponentBasis make_basis(const SynthConfig& cfg);

struct SynthDataset {
    Dataset data;
    ComponentBasis basis;
    /// Mean clean intensity; the reference for noise and artefact scales.
    double amplitude = 0.0;
    SynthConfig config;

    /// Config, amplitude, and basis peaks and spectra as a JSON document.
    std::string truth_json() const;
};

/// Targets uniform in their ranges, spectra the target-weighted basis sum,
/// then artefacts, then Gaussian noise. Pure function of the config.
SynthDataset generate(const SynthConfig& cfg);

/// x' = m * x + o + s * t per row, t the channel index mapped onto [-1, 1].
/// Row r draws from derive_seed(seed, "artefact", {r}).
SpectralMatrix inject_artefacts(const SpectralMatrix& x, const ArtefactScales& scales, std::uint64_t seed);

}  // namespace spectral_forge::synth
