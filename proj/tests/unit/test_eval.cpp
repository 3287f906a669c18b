#include "spectral_forge/eval.hpp"
#include "spectral_forge/rng.hpp"
#include "spectral_forge/synth.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace spectral_forge;
using namespace spectral_forge::eval;

namespace {

// Two-sided exact p by listing every split of the pooled ranks.
double enumerate_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pool(a);
    pool.insert(pool.end(), b.begin(), b.end());
    const std::size_t n = a.size(), total = pool.size();
    auto u_of = [&](const std::vector<bool>& in_a) {
        double u = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            if (!in_a[i]) continue;
            for (std::size_t j = 0; j < total; ++j) {
                if (in_a[j]) continue;
                u += pool[i] > pool[j] ? 1.0 : pool[i] == pool[j] ? 0.5 : 0.0;
            }
        }
        return u;
    };
    std::vector<bool> observed(total, false);
    std::fill(observed.begin(), observed.begin() + static_cast<long>(n), true);
    const double u0 = u_of(observed);
    std::vector<bool> mask(total, false);
    std::fill(mask.end() - static_cast<long>(n), mask.end(), true);
    double below = 0, above = 0, count = 0;
    do {
        const double u = u_of(mask);
        below += u <= u0;
        above += u >= u0;
        ++count;
    } while (std::next_permutation(mask.begin(), mask.end()));
    return std::min(1.0, 2.0 * std::min(below, above) / count);
}

std::vector<double> draws(Rng& rng, std::size_t n, double shift) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() + shift;
    return v;
}

Dataset toy_data(std::size_t rows, std::size_t cols, double artefacts, std::uint64_t seed = 5) {
    synth::SynthConfig c;
    c.n_samples = rows;
    c.n_features = cols;
    c.artefacts = synth::ArtefactScales::uniform(artefacts);
    c.seed = seed;
    return synth::generate(c).data;
}

CvConfig tiny_config() {
    CvConfig c;
    c.k = 3;
    c.runs = 1;
    c.augment.factor = 2;
    c.train.max_epochs = 2;
    c.train.patience = 2;
    c.train.batch_size = 8;
    c.model.kernel = 4;
    c.model.filters = 2;
    c.base_seed = 17;
    return c;
}

}  // namespace

TEST_CASE("r2 and rmse") {
    const std::vector<double> y{1, 2, 3};
    CHECK(r2(y, y) == 1.0);
    CHECK(r2(y, std::vector<double>{2, 2, 2}) == 0.0);
    CHECK(r2(y, std::vector<double>{1, 2, 4}) == doctest::Approx(0.5));
    CHECK(rmse(y, std::vector<double>{1, 2, 4}) == doctest::Approx(std::sqrt(1.0 / 3.0)));
    CHECK_THROWS_AS(r2(std::vector<double>{4, 4, 4}, y), ValidationError);
    CHECK_THROWS_AS(r2(y, std::vector<double>{1, 2}), ValidationError);
}

TEST_CASE("overall score") {
    CHECK(overall_score(std::vector<double>{1.0, 0.5, 0.0}) == 0.5);
    CHECK(overall_score(std::vector<double>{0.3, 0.3, 0.3}) == doctest::Approx(0.3));
    CHECK(overall_score(std::vector<double>{0.919, 0.868, 0.847}) == doctest::Approx(0.878).epsilon(5e-4));
}

TEST_CASE("mann whitney hand cases") {
    auto r = mann_whitney_u(std::vector<double>{1, 2}, std::vector<double>{3, 4});
    CHECK(r.u == 0.0);
    CHECK(r.p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(r.method == TestMethod::Exact);
    auto same = mann_whitney_u(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3});
    CHECK(same.u == 4.5);
    CHECK(same.p == 1.0);
    CHECK(mann_whitney_counts(2, 2) == std::vector<double>{1, 1, 2, 1, 1});
}

TEST_CASE("exact p matches enumeration") {
    Rng rng(1);
    for (std::size_t n = 1; n <= 6; ++n) {
        for (std::size_t m = 1; m <= 6; ++m) {
            for (int rep = 0; rep < 3; ++rep) {
                auto a = draws(rng, n, 0.5 * rep);
                auto b = draws(rng, m, 0.0);
                CAPTURE(n);
                CAPTURE(m);
                CHECK(mann_whitney_u(a, b, TestMethod::Exact).p == doctest::Approx(enumerate_p(a, b)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("mann whitney symmetry") {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng.below(15), m = 1 + rng.below(15);
        auto a = draws(rng, n, rng.uniform(-1, 1));
        auto b = draws(rng, m, 0.0);
        if (i % 3 == 0) b[0] = a[0];  // some ties
        auto ab = mann_whitney_u(a, b);
        auto ba = mann_whitney_u(b, a);
        CHECK(ab.p == ba.p);
        CHECK(ab.u + ba.u == static_cast<double>(n * m));
    }
}

TEST_CASE("exact and normal agree at n = m = 10") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        auto a = draws(rng, 10, 0.5);
        auto b = draws(rng, 10, 0.0);
        const double e = mann_whitney_u(a, b, TestMethod::Exact).p;
        const double z = mann_whitney_u(a, b, TestMethod::Normal).p;
        CHECK(std::fabs(e - z) <= 0.02);
    }
}

TEST_CASE("mean and std recompute") {
    std::vector<double> v{0.8, 0.9, 0.7, 0.85};
    auto ms = mean_std(v);
    CHECK(ms.mean == doctest::Approx(oracle::mean(v)).epsilon(1e-15));
    CHECK(ms.std == doctest::Approx(oracle::sample_std(v)).epsilon(1e-15));
    CHECK(mean_std(std::vector<double>{0.5}).std == 0.0);
}

TEST_CASE("procedure text") {
    CHECK(Procedure::parse("SNV+DA+GS").to_string() == "SNV+DA+GS");
    CHECK(Procedure::parse("raw").stages.empty());
    CHECK(Procedure::parse("DA+SNV").stages.front().augment);
    CHECK(Procedure::from_pipeline(preprocess::design_pipeline(18)).to_string() == "SNV+DA");
    CHECK(Procedure::from_pipeline(preprocess::design_pipeline(34)).to_string() == "LB+SNV+DA+GS");
    CHECK(Procedure::from_pipeline(preprocess::design_pipeline(1), false).to_string() == "raw");
    CHECK_THROWS_AS(Procedure::parse("SNV+XX"), ValidationError);
}

TEST_CASE("config fingerprint") {
    auto a = tiny_config();
    auto b = a;
    b.jobs = 4;
    CHECK(a.fingerprint() == b.fingerprint());
    b.base_seed = 18;
    CHECK(a.fingerprint() != b.fingerprint());
    CHECK(a.fingerprint().size() == 16);
    auto c = a;
    c.target_overrides[2] = Procedure::parse("SNV+D2w19p3+DA");
    CHECK(c.fingerprint() != a.fingerprint());
    CHECK(c.canonical().find("override.lipids_yield=SNV+D2w19p3+DA") != std::string::npos);
}

TEST_CASE("cv bookkeeping") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    cfg.runs = 2;
    auto r = run_cv(d, cfg);
    CHECK(r.folds.size() == 6);
    std::vector<double> overall;
    for (const auto& f : r.folds) overall.push_back(f.r2_overall);
    CHECK(std::fabs(r.summary.r2_overall.mean - oracle::mean(overall)) <= 1e-12);
    CHECK(std::fabs(r.summary.r2_overall.std - oracle::sample_std(overall)) <= 1e-12);
    for (std::size_t i = 0; i < r.folds.size(); ++i) {
        CHECK(r.folds[i].run == i / 3);
        CHECK(r.folds[i].fold == i % 3);
        CHECK(r.folds[i].r2_overall == doctest::Approx(overall_score(r.folds[i].r2)));
    }
    REQUIRE(r.run_summaries.size() == 2);
    for (std::size_t run = 0; run < 2; ++run) {
        std::vector<double> part(overall.begin() + 3 * run, overall.begin() + 3 * run + 3);
        CHECK(std::fabs(r.run_summaries[run].r2_overall.mean - oracle::mean(part)) <= 1e-12);
        CHECK(std::fabs(r.run_summaries[run].r2_overall.std - oracle::sample_std(part)) <= 1e-12);
    }
    auto parallel = cfg;
    parallel.jobs = 3;
    CHECK(run_cv(d, parallel).to_json() == r.to_json());
}

TEST_CASE("target overrides take scores from their own procedure") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    cfg.target_overrides[2] = Procedure::parse("DA");
    auto merged = run_cv(d, cfg);
    auto main = run_cv(d, tiny_config());
    auto other_cfg = tiny_config();
    other_cfg.procedure = Procedure::parse("DA");
    auto other = run_cv(d, other_cfg);
    for (std::size_t i = 0; i < merged.folds.size(); ++i) {
        CHECK(merged.folds[i].r2[0] == main.folds[i].r2[0]);
        CHECK(merged.folds[i].r2[2] == other.folds[i].r2[2]);
    }
}

TEST_CASE("test folds do not influence fitting") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    const auto split = split_folds(d.size(), cfg.k, 3);
    const std::size_t fold = 1;
    auto base = run_fold(d, split, 0, fold, Procedure::parse("SNV+DA+GS"), cfg);

    // Replace every test row with unrelated values.
    auto test_idx = split.test_indices(fold);
    auto x = d.x;
    std::vector<TargetRow> y(d.y.values().begin(), d.y.values().end());
    Rng rng(9);
    for (auto i : test_idx) {
        for (auto& v : x.row(i)) v = rng.normal() * 1e3;
        y[i] = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100)};
    }
    Dataset mutated(x, TargetMatrix(y));
    auto again = run_fold(mutated, split, 0, fold, Procedure::parse("SNV+DA+GS"), cfg);
    CHECK(again.model.state.params == base.model.state.params);
    CHECK(again.scaler == base.scaler);
    CHECK(again.target_scaler.mean == base.target_scaler.mean);
    CHECK(again.target_scaler.std == base.target_scaler.std);
    CHECK(again.model.report.val_loss == base.model.report.val_loss);
}

TEST_CASE("grid search") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    cfg.train.max_epochs = 1;
    auto all = preprocess::build_design_matrix();

    SUBCASE("budget 1 evaluates the lowest id") {
        auto r = grid_search_pipelines(d, all, cfg, 1);
        REQUIRE(r.size() == 1);
        CHECK(r[0].id == 1);
    }
    SUBCASE("permuting the rows does not change the ranking") {
        std::vector<preprocess::Pipeline> some{all[0], all[17], all[33], all[63], all[20]};
        auto a = grid_search_pipelines(d, some, cfg, 5);
        std::reverse(some.begin(), some.end());
        std::swap(some[1], some[3]);
        auto b = grid_search_pipelines(d, some, cfg, 5);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == b[i].id);
            CHECK(a[i].result.to_json() == b[i].result.to_json());
        }
        for (std::size_t i = 1; i < a.size(); ++i)
            CHECK(a[i - 1].result.summary.r2_overall.mean >= a[i].result.summary.r2_overall.mean);
    }
    SUBCASE("duplicate ids are rejected") {
        std::vector<preprocess::Pipeline> dup{all[3], all[3]};
        CHECK_THROWS_AS(grid_search_pipelines(d, dup, cfg, 2), ValidationError);
    }
}

TEST_CASE("grid search over the full design matrix") {
    auto d = toy_data(12, 48, 0.1);
    auto cfg = tiny_config();
    cfg.k = 2;
    cfg.train.max_epochs = 1;
    cfg.augment.factor = 1;
    auto r = grid_search_pipelines(d, preprocess::build_design_matrix(), cfg, 64);
    CHECK(r.size() == 64);
    std::vector<int> ids;
    for (const auto& p : r) ids.push_back(p.id);
    std::sort(ids.begin(), ids.end());
    std::vector<int> expect(64);
    std::iota(expect.begin(), expect.end(), 1);
    CHECK(ids == expect);
}

TEST_CASE("snv ranks above raw on scatter-laden data") {
    auto d = toy_data(39, 427, 0.3, 11);
    auto cfg = tiny_config();
    cfg.model.kernel = 8;
    cfg.model.filters = 4;
    cfg.augment.factor = 5;
    cfg.train.batch_size = 38;
    cfg.train.max_epochs = 40;
    cfg.train.patience = 40;
    std::vector<preprocess::Pipeline> two{preprocess::design_pipeline(1), preprocess::design_pipeline(18)};
    auto r = grid_search_pipelines(d, two, cfg, 2);
    CHECK(r[0].id == 18);
    CHECK(r[0].result.summary.r2_overall.mean > r[1].result.summary.r2_overall.mean);
}

TEST_CASE("ablation tables") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    cfg.train.max_epochs = 1;

    SUBCASE("order") {
        auto t = ablate_order(d, cfg);
        std::vector<std::string> labels;
        for (const auto& a : t.arms) labels.push_back(a.label);
        CHECK(labels == std::vector<std::string>{"SNV+DA+GS", "SNV+GS", "GS", "DA+SNV", "DA+GS", "DA"});
        CHECK_FALSE(t.arm("SNV+DA+GS").overall_test);
        CHECK(t.arm("DA+SNV").overall_test);
        auto md = ablation_markdown(t);
        CHECK(md.find("| Procedure | R²CV | p-value |") != std::string::npos);
        CHECK(render_markdown(t.to_json()) == md);
    }
    SUBCASE("factor") {
        auto t = ablate_factor(d, cfg);
        REQUIRE(t.arms.size() == 4);
        CHECK(t.arms[0].label == "10");
        CHECK(t.arms[3].label == "60");
        auto md = ablation_markdown(t);
        std::size_t rows = 0;
        for (const char* f : {"| 10 |", "| 30 |", "| 50 |", "| 60 |"}) rows += md.find(f) != std::string::npos;
        CHECK(rows == 4);
        CHECK(render_markdown(t.to_json()) == md);
    }
    SUBCASE("kernel") {
        auto wide = toy_data(18, 64, 0.1);
        auto t = ablate_kernel(wide, cfg);
        auto md = ablation_markdown(t);
        CHECK(md.find("| 64 | 16 | 8 | 4 |") != std::string::npos);
        for (const char* name : kTargetNames) CHECK(md.find(name) != std::string::npos);
        CHECK(render_markdown(t.to_json()) == md);
    }
}

TEST_CASE("DA at factor 1 is raw training") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    cfg.augment.factor = 1;
    cfg.procedure = Procedure::parse("DA");
    auto da = run_cv(d, cfg);
    cfg.procedure = Procedure::parse("raw");
    auto raw = run_cv(d, cfg);
    REQUIRE(da.folds.size() == raw.folds.size());
    for (std::size_t i = 0; i < da.folds.size(); ++i) CHECK(da.folds[i].r2 == raw.folds[i].r2);
}

TEST_CASE("report formatting") {
    CHECK(format_mean_std({0.811, 0.105}) == "0.811±0.105");
    CHECK(format_p(1.6e-8) == "1.6e-08");
    CHECK(format_p(0.25) == "0.25");
    auto d = toy_data(18, 24, 0.1);
    auto r = run_cv(d, tiny_config());
    auto md = cv_markdown(r);
    CHECK(md.find("Overall") != std::string::npos);
    CHECK(render_markdown(r.to_json()) == md);
    CHECK(r.to_json().find("\"schema\": 1") != std::string::npos);
}

TEST_CASE("config validation") {
    auto d = toy_data(18, 24, 0.1);
    auto cfg = tiny_config();
    cfg.k = 1;
    CHECK_THROWS_AS(run_cv(d, cfg), ValidationError);
    cfg = tiny_config();
    cfg.procedure = Procedure::parse("SNV+D2w31p3");
    CHECK_THROWS_AS(run_cv(d, cfg), ValidationError);
}
