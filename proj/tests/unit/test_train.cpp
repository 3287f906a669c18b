#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/rng.hpp"
#include "spectral_forge/synth.hpp"
#include "spectral_forge/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace spectral_forge;
using namespace spectral_forge::train;

namespace {

Dataset clean_data(std::size_t rows, std::size_t cols) {
    synth::SynthConfig c;
    c.n_samples = rows;
    c.n_features = cols;
    c.noise_std = 0.0;
    c.artefacts = synth::ArtefactScales::uniform(0.0);
    c.seed = 3;
    return synth::generate(c).data;
}

}  // namespace

TEST_CASE("heuristic learning rate") {
    CHECK(heuristic_lr(38) == 0.001484375);
    CHECK(heuristic_lr(256) == 0.01);
    CHECK(heuristic_lr(1) == 3.90625e-5);
}

TEST_CASE("inner split") {
    auto d = clean_data(32, 20);
    auto s = inner_split(d, 0.15, 4);
    CHECK(s.val.size() == 5);
    CHECK(s.train.size() == 27);
    auto again = inner_split(d, 0.15, 4);
    CHECK(again.val_indices == s.val_indices);
    std::vector<std::size_t> all = s.train_indices;
    all.insert(all.end(), s.val_indices.begin(), s.val_indices.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(32);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    CHECK_THROWS_AS(inner_split(d, 0.0, 4), ValidationError);
}

TEST_CASE("early stopper") {
    EarlyStopper s(2);
    const double losses[] = {1.0, 0.9, 0.95, 0.91, 0.5};
    std::size_t stopped = 0;
    for (std::size_t e = 1; e <= 5; ++e) {
        s.observe(e, losses[e - 1]);
        if (s.should_stop()) {
            stopped = e;
            break;
        }
    }
    CHECK(stopped == 4);
    CHECK(s.best_epoch() == 2);
    CHECK(s.best_loss() == 0.9);
    // Equal loss is not an improvement.
    EarlyStopper t(5);
    t.observe(1, 1.0);
    CHECK_FALSE(t.observe(2, 1.0));
}

TEST_CASE("target scaler") {
    TargetScaler s{{75, 15, 5}, {1, 1, 1}};
    auto row = s.inverse_row(std::vector<double>{0, 0, 0});
    CHECK(row == TargetRow{75, 15, 5});
    TargetMatrix y({{70, 10, 2}, {72, 14, 4}, {80, 12, 9}});
    auto fit = TargetScaler::fit(y);
    CHECK(fit.mean[0] == doctest::Approx(74.0));
    CHECK(fit.std[0] == doctest::Approx(std::sqrt(((16.0 + 4.0 + 36.0) / 2.0))));
    auto back = fit.inverse(fit.transform(y));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t t = 0; t < 3; ++t) CHECK(back[r][t] == doctest::Approx(y[r][t]));
    CHECK_THROWS_AS(TargetScaler::fit(TargetMatrix({{1, 2, 3}, {1, 5, 6}})), ValidationError);
}

TEST_CASE("predict inverse scales network output") {
    auto spec = nn::build_fishcnn(16, 4, 2);
    auto state = nn::init_state(spec, 1);
    for (auto& p : state.params) std::fill(p.data.begin(), p.data.end(), 0.0);
    auto d = clean_data(4, 16);
    auto pred = predict(state, spec, d.x, TargetScaler{{75, 15, 5}, {1, 1, 1}});
    for (std::size_t r = 0; r < 4; ++r) CHECK(pred[r] == TargetRow{75, 15, 5});
}

TEST_CASE("predict is deterministic and row independent") {
    auto spec = nn::build_fishcnn(40, 8, 4);
    auto state = nn::init_state(spec, 2);
    auto d = clean_data(6, 40);
    auto scaler = TargetScaler::fit(d.y);
    auto a = predict(state, spec, d.x, scaler);
    auto b = predict(state, spec, d.x, scaler);
    CHECK(a == b);
    std::vector<std::size_t> perm{5, 3, 1, 0, 2, 4};
    auto c = predict(state, spec, d.x.select(perm), scaler);
    // Equal up to rounding: the matrix products block rows by position.
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t t = 0; t < kTargetCount; ++t) CHECK(c[i][t] == doctest::Approx(a[perm[i]][t]).epsilon(1e-12));
}

TEST_CASE("training reduces the loss on clean data") {
    auto d = clean_data(39, 427);
    d.x = preprocess::apply_row_step(preprocess::PreprocStep::snv(), d.x);
    auto s = inner_split(d, 0.15, 1);
    TrainConfig cfg;
    cfg.max_epochs = 200;
    cfg.patience = 1000;
    auto scaler = TargetScaler::fit(s.train.y);
    auto spec = nn::build_fishcnn(427);
    auto m = train_model(spec, s.train, s.val, cfg, scaler);
    CHECK(m.report.epochs() == 200);
    // Eval mode, so dropout noise does not set a floor on the comparison.
    const double before = evaluate_loss(spec, nn::init_state(spec, derive_seed(cfg.seed, "init")), s.train, scaler, 1.0);
    const double after = evaluate_loss(spec, m.state, s.train, scaler, 1.0);
    CHECK(after < 0.01 * before);
    CHECK(m.report.best_epoch >= 1);
}

TEST_CASE("patience beyond the epoch cap runs every epoch") {
    auto d = clean_data(12, 30);
    auto s = inner_split(d, 0.25, 1);
    TrainConfig cfg;
    cfg.max_epochs = 7;
    cfg.patience = 7;
    auto m = train_model(nn::build_fishcnn(30, 4, 2), s.train, s.val, cfg, TargetScaler::fit(s.train.y));
    CHECK(m.report.epochs() == 7);
    CHECK_FALSE(m.report.stopped_early);
    CHECK(m.report.to_json().find("wall") == std::string::npos);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
