#include "spectral_forge/augment.hpp"
#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/synth.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace spectral_forge;

namespace {

Dataset small(std::size_t rows, std::size_t cols = 60) {
    synth::SynthConfig c;
    c.n_samples = rows;
    c.n_features = cols;
    c.seed = 21;
    return synth::generate(c).data;
}

}  // namespace

TEST_CASE("augment factor 1 is the identity") {
    auto d = small(8);
    augment::AugmentConfig cfg;
    cfg.factor = 1;
    auto out = augment::augment(d, cfg);
    CHECK(out.x == d.x);
    CHECK(out.y == d.y);
}

TEST_CASE("augment factor 50 on 32 rows") {
    auto d = small(32);
    auto out = augment::augment(d, {});
    CHECK(out.x.rows() == 1600);
    CHECK(out.y.rows() == 1600);
    for (std::size_t r = 0; r < 32; ++r) {
        CHECK(out.y[r] == d.y[r]);
        // Variants of source r follow the originals, in source order.
        CHECK(out.y[32 + r * 49] == d.y[r]);
        CHECK(out.y[32 + r * 49 + 48] == d.y[r]);
    }
    auto again = augment::augment(d, {});
    CHECK(again.x == out.x);
}

TEST_CASE("offset-only variants share the SNV of their source") {
    auto d = small(4);
    augment::AugmentConfig cfg;
    cfg.factor = 5;
    cfg.mult_scale = 0.0;
    cfg.slope_scale = 0.0;
    cfg.offset_scale = 0.5;
    auto out = augment::augment(d, cfg);
    for (std::size_t r = 0; r < 4; ++r) {
        auto ref = preprocess::snv(d.x.row(r));
        for (std::size_t v = 0; v < 4; ++v) {
            auto got = preprocess::snv(out.x.row(4 + r * 4 + v));
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(got[i] - ref[i]) <= 1e-10);
        }
    }
}

TEST_CASE("artefact application") {
    std::vector<double> in{1, 2, 3}, out(3);
    augment::apply_artefact({0.5, 2.0, 1.0}, in, out);
    CHECK(out[0] == doctest::Approx(2.0 * 1 + 0.5 - 1.0));
    CHECK(out[1] == doctest::Approx(2.0 * 2 + 0.5));
    CHECK(out[2] == doctest::Approx(2.0 * 3 + 0.5 + 1.0));
    CHECK(augment::index_axis(0, 5) == -1.0);
    CHECK(augment::index_axis(4, 5) == 1.0);
}

TEST_CASE("augment config validation") {
    augment::AugmentConfig cfg;
    cfg.factor = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.factor = 2;
    cfg.offset_scale = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("synth defaults") {
    auto s = synth::generate(synth::SynthConfig::ingaas());
    CHECK(s.data.x.rows() == 39);
    CHECK(s.data.x.cols() == 427);
    CHECK(s.data.y.rows() == 39);
    for (double w : s.data.y.column(0)) CHECK((w >= 70.0 && w <= 80.0));
    CHECK(s.data.x.axis()[0] == 1891.58);
    CHECK(s.data.x.axis()[426] == doctest::Approx(580.109));
    auto again = synth::generate(synth::SynthConfig::ingaas());
    CHECK(again.data.x == s.data.x);
    CHECK(again.data.y == s.data.y);
    CHECK(synth::generate(synth::SynthConfig::ftraman()).data.x.cols() == 1971);
}

TEST_CASE("clean synthetic targets are linearly recoverable") {
    auto c = synth::SynthConfig::ingaas();
    c.noise_std = 0.0;
    c.artefacts = synth::ArtefactScales::uniform(0.0);
    auto s = synth::generate(c);
    // Regress each target on the basis projections of the spectra.
    const auto& b = s.basis.spectra;
    std::vector<std::vector<double>> design;
    for (std::size_t r = 0; r < s.data.x.rows(); ++r) {
        std::vector<double> feats{1.0};
        for (const auto& comp : b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < comp.size(); ++i) dot += comp[i] * s.data.x(r, i);
            feats.push_back(dot);
        }
        design.push_back(feats);
    }
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        auto y = s.data.y.column(t);
        auto coef = oracle::lstsq(design, y);
        double ss_res = 0.0, ss_tot = 0.0, m = oracle::mean(y);
        for (std::size_t r = 0; r < y.size(); ++r) {
            double p = 0.0;
            for (std::size_t j = 0; j < coef.size(); ++j) p += coef[j] * design[r][j];
            ss_res += (y[r] - p) * (y[r] - p);
            ss_tot += (y[r] - m) * (y[r] - m);
        }
        CHECK(1.0 - ss_res / ss_tot == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("basis spectra are nonnegative and independent") {
    auto s = synth::generate(synth::SynthConfig::ingaas());
    for (const auto& comp : s.basis.spectra)
        for (double v : comp) CHECK(v >= 0.0);
    // Gram matrix of the basis is solvable.
    const auto& b = s.basis.spectra;
    std::vector<std::vector<double>> g(b.size(), std::vector<double>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            for (std::size_t k = 0; k < b[i].size(); ++k) g[i][j] += b[i][k] * b[j][k];
    CHECK_NOTHROW(oracle::solve(g, std::vector<double>(b.size(), 1.0)));
}

TEST_CASE("inject artefacts") {
    auto c = synth::SynthConfig::ingaas();
    c.noise_std = 0.0;
    c.artefacts = synth::ArtefactScales::uniform(0.0);
    auto clean = synth::generate(c).data.x;
    CHECK(synth::inject_artefacts(clean, synth::ArtefactScales::uniform(0.0), 5) == clean);

    auto off = synth::inject_artefacts(clean, {0.3, 0.0, 0.0}, 5);
    auto slope = synth::inject_artefacts(clean, {0.0, 0.0, 0.3}, 5);
    for (std::size_t r = 0; r < clean.rows(); ++r) {
        auto a = preprocess::snv(clean.row(r));
        auto b = preprocess::snv(off.row(r));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-10);
        auto la = preprocess::linear_baseline(clean.row(r));
        auto lb = preprocess::linear_baseline(slope.row(r));
        for (std::size_t i = 0; i < la.size(); ++i) CHECK(std::fabs(la[i] - lb[i]) <= 1e-9);
    }
}

TEST_CASE("truth json names the basis") {
    auto s = synth::generate(synth::SynthConfig::ingaas());
    auto j = s.truth_json();
    CHECK(j.find("water") != std::string::npos);
    CHECK(j.find("amplitude") != std::string::npos);
}
