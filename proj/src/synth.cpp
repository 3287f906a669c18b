#include "spectral_forge/synth.hpp"

#include "spectral_forge/augment.hpp"
#include "spectral_forge/rng.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <numeric>

namespace spectral_forge::synth {

namespace {

constexpr double kMinSingularValue = 0.05;
constexpr int kMaxBasisAttempts = 64;

double mean_abs(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s / static_cast<double>(v.size());
}

std::vector<double> render(const std::vector<Peak>& peaks, std::size_t n) {
    std::vector<double> out(n, 0.0);
    for (const auto& p : peaks) {
        for (std::size_t i = 0; i < n; ++i) {
            const double z = (static_cast<double>(i) - p.center) / p.width;
            out[i] += p.amplitude * std::exp(-0.5 * z * z);
        }
    }
    return out;
}

/// Smallest singular value of the column-normalized basis matrix.
double conditioning(const std::vector<std::vector<double>>& spectra) {
    const auto n = static_cast<Eigen::Index>(spectra.front().size());
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(spectra.size()));
    for (std::size_t c = 0; c < spectra.size(); ++c) {
        // Copy first so the norm is taken over Eigen's aligned storage.
        m.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(spectra[c].data(), n);
        m.col(static_cast<Eigen::Index>(c)).normalize();
    }
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues().minCoeff();
}

}  // namespace

SynthConfig SynthConfig::ingaas() { return SynthConfig{}; }

SynthConfig SynthConfig::ftraman() {
    SynthConfig c;
    c.n_features = 1971;
    c.axis_first = 4001.81;
    c.axis_last = 202.533;
    return c;
}

void SynthConfig::validate() const {
    if (n_samples < 1) throw ValidationError("synth.n_samples must be at least 1");
    if (n_features < 3) throw ValidationError("synth.n_features must be at least 3");
    if (!(axis_first != axis_last)) throw ValidationError("synth axis range is empty");
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        if (!(ranges[t].hi > ranges[t].lo)) {
            throw ValidationError(std::string("synth range for ") + kTargetNames[t] + " is empty");
        }
    }
    if (!(noise_std >= 0.0)) throw ValidationError("synth.noise_std must be non-negative");
    if (!(artefacts.offset >= 0.0 && artefacts.mult >= 0.0 && artefacts.slope >= 0.0)) {
        throw ValidationError("synth artefact scales must be non-negative");
    }
}

ComponentBasis make_basis(const SynthConfig& cfg) {
    const std::size_t n = cfg.n_features;
    const std::size_t count = kTargetCount + (cfg.balance_component ? 1 : 0);
    const double span = static_cast<double>(n - 1);

    ComponentBasis basis;
    for (int attempt = 0; attempt < kMaxBasisAttempts; ++attempt) {
        basis = {};
        for (std::size_t c = 0; c < count; ++c) {
            Rng rng(derive_seed(cfg.seed, "basis", {static_cast<std::uint64_t>(attempt), c}));
            const auto n_peaks = 4 + static_cast<std::size_t>(rng.below(5));
            std::vector<Peak> peaks;
            for (std::size_t p = 0; p < n_peaks; ++p) {
                Peak peak;
                peak.center = rng.uniform(0.05 * span, 0.95 * span);
                peak.width = std::max(1.0, rng.uniform(0.01, 0.04) * static_cast<double>(n));
                peak.amplitude = rng.uniform(0.3, 1.0);
                peaks.push_back(peak);
            }
            basis.names.push_back(c < kTargetCount ? kTargetNames[c] : "balance");
            basis.spectra.push_back(render(peaks, n));
            basis.peaks.push_back(std::move(peaks));
        }
        if (conditioning(basis.spectra) > kMinSingularValue) return basis;
    }
    throw ValidationError("could not draw a well-conditioned basis for " + std::to_string(n) + " features");
}

SpectralMatrix inject_artefacts(const SpectralMatrix& x, const ArtefactScales& scales, std::uint64_t seed) {
    if (!(scales.offset >= 0.0 && scales.mult >= 0.0 && scales.slope >= 0.0)) {
        throw ValidationError("artefact scales must be non-negative");
    }
    const double ref = mean_abs(x.data());
    std::vector<double> data(x.data().size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        Rng rng(derive_seed(seed, "artefact", {r}));
        augment::Artefact a;
        a.offset = rng.normal(0.0, scales.offset * ref);
        a.multiplier = rng.normal(1.0, scales.mult);
        a.slope = rng.normal(0.0, scales.slope * ref);
        augment::apply_artefact(a, x.row(r), std::span<double>(data.data() + r * x.cols(), x.cols()));
    }
    return x.with_data(std::move(data));
}

SynthDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset out;
    out.config = cfg;
    out.basis = make_basis(cfg);

    const std::size_t n = cfg.n_samples;
    const std::size_t f = cfg.n_features;
    double total = 0.0;
    for (const auto& r : cfg.ranges) total += r.hi;

    std::vector<TargetRow> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed, "targets", {i}));
        for (std::size_t t = 0; t < kTargetCount; ++t) targets[i][t] = rng.uniform(cfg.ranges[t].lo, cfg.ranges[t].hi);
    }

    std::vector<double> clean(n * f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = clean.data() + i * f;
        double remainder = total;
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            remainder -= targets[i][t];
            for (std::size_t c = 0; c < f; ++c) row[c] += targets[i][t] * out.basis.spectra[t][c];
        }
        if (cfg.balance_component) {
            for (std::size_t c = 0; c < f; ++c) row[c] += remainder * out.basis.spectra[kTargetCount][c];
        }
    }
    out.amplitude = mean_abs(clean);

    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "S%03zu", i + 1);
        ids[i] = buf;
    }
    const auto axis = WavenumberAxis::linspace(cfg.axis_first, cfg.axis_last, f);
    SpectralMatrix x(axis, std::move(clean), ids);

    const auto& a = cfg.artefacts;
    if (a.offset > 0.0 || a.mult > 0.0 || a.slope > 0.0) x = inject_artefacts(x, a, derive_seed(cfg.seed, "artefacts"));

    if (cfg.noise_std > 0.0) {
        std::vector<double> noisy(x.data().begin(), x.data().end());
        const double sd = cfg.noise_std * out.amplitude;
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng(derive_seed(cfg.seed, "noise", {i}));
            for (std::size_t c = 0; c < f; ++c) noisy[i * f + c] += rng.normal(0.0, sd);
        }
        x = x.with_data(std::move(noisy));
    }
    out.data = Dataset(std::move(x), TargetMatrix(std::move(targets)));
    return out;
}

std::string SynthDataset::truth_json() const {
    nlohmann::json ranges = nlohmann::json::object();
    for (std::size_t t = 0; t < kTargetCount; ++t) ranges[kTargetNames[t]] = {config.ranges[t].lo, config.ranges[t].hi};
    nlohmann::json components = nlohmann::json::array();
    for (std::size_t c = 0; c < basis.names.size(); ++c) {
        nlohmann::json peaks = nlohmann::json::array();
        for (const auto& p : basis.peaks[c]) {
            peaks.push_back({{"center", p.center}, {"width", p.width}, {"amplitude", p.amplitude}});
        }
        components.push_back({{"name", basis.names[c]}, {"peaks", std::move(peaks)}, {"spectrum", basis.spectra[c]}});
    }
    const nlohmann::json doc = {
        {"schema", 1},
        {"config",
         {{"n_samples", config.n_samples},
          {"n_features", config.n_features},
          {"axis_first", config.axis_first},
          {"axis_last", config.axis_last},
          {"ranges", std::move(ranges)},
          {"noise_std", config.noise_std},
          {"offset_scale", config.artefacts.offset},
          {"mult_scale", config.artefacts.mult},
          {"slope_scale", config.artefacts.slope},
          {"balance_component", config.balance_component},
          {"seed", config.seed}}},
        {"amplitude", amplitude},
        {"basis", std::move(components)}};
    return doc.dump(2);
}

}  // namespace spectral_forge::synth
