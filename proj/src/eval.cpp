#include "spectral_forge/eval.hpp"

#include "spectral_forge/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace spectral_forge::eval {

using nlohmann::json;

// ---- metrics ---------------------------------------------------------------

namespace {

void check_pair(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw ValidationError("y_true has " + std::to_string(y_true.size()) + " values but y_pred has " +
                              std::to_string(y_pred.size()));
    }
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double r2(std::span<const double> y_true, std::span<const double> y_pred) {
    check_pair(y_true, y_pred);
    if (y_true.size() < 2) throw ValidationError("r2 needs at least 2 values");
    const double mean = mean_of(y_true);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
        ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
    }
    if (!(ss_tot > 0.0)) throw ValidationError("r2 is undefined for a constant y_true");
    return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
    check_pair(y_true, y_pred);
    if (y_true.empty()) throw ValidationError("rmse needs at least 1 value");
    double ss = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) ss += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    return std::sqrt(ss / static_cast<double>(y_true.size()));
}

double overall_score(std::span<const double> per_target) {
    if (per_target.size() != kTargetCount) {
        throw ValidationError("overall score needs " + std::to_string(kTargetCount) + " values");
    }
    return mean_of(per_target);
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw ValidationError("mean_std of an empty list");
    MeanStd out;
    out.mean = mean_of(values);
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

FoldScore score_fold(const TargetMatrix& truth, const TargetMatrix& pred) {
    if (truth.rows() != pred.rows()) throw ValidationError("prediction and truth row counts differ");
    FoldScore s;
    s.n_test = truth.rows();
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        const auto y = truth.column(t);
        const auto yhat = pred.column(t);
        s.r2[t] = r2(y, yhat);
        s.rmse[t] = rmse(y, yhat);
    }
    s.r2_overall = overall_score(s.r2);
    s.rmse_overall = overall_score(s.rmse);
    return s;
}

Summary summarize(std::span<const FoldScore> folds) {
    Summary s;
    std::vector<double> v(folds.size());
    auto collect = [&](auto get) {
        std::transform(folds.begin(), folds.end(), v.begin(), get);
        return mean_std(v);
    };
    s.r2_overall = collect([](const FoldScore& f) { return f.r2_overall; });
    s.rmse_overall = collect([](const FoldScore& f) { return f.rmse_overall; });
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        s.r2[t] = collect([t](const FoldScore& f) { return f.r2[t]; });
        s.rmse[t] = collect([t](const FoldScore& f) { return f.rmse[t]; });
    }
    return s;
}

std::vector<Summary> summarize_runs(std::span<const FoldScore> folds) {
    std::size_t runs = 0;
    for (const auto& f : folds) runs = std::max(runs, f.run + 1);
    std::vector<std::vector<FoldScore>> by_run(runs);
    for (const auto& f : folds) by_run[f.run].push_back(f);
    std::vector<Summary> out;
    out.reserve(runs);
    for (const auto& r : by_run) out.push_back(summarize(r));
    return out;
}

// ---- Mann-Whitney U ----------------------------------------------------------

std::vector<double> mann_whitney_counts(std::size_t n, std::size_t m) {
    // counts[j][u] for the current n, over second-sample sizes j = 0..m.
    // Recurrence: f(n, m, u) = f(n - 1, m, u - m) + f(n, m - 1, u).
    std::vector<std::vector<double>> prev(m + 1, std::vector<double>(1, 1.0));
    for (std::size_t i = 1; i <= n; ++i) {
        std::vector<std::vector<double>> cur(m + 1);
        cur[0] = {1.0};
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j].assign(i * j + 1, 0.0);
            for (std::size_t u = 0; u < cur[j - 1].size(); ++u) cur[j][u] += cur[j - 1][u];
            for (std::size_t u = 0; u < prev[j].size(); ++u) cur[j][u + j] += prev[j][u];
        }
        prev = std::move(cur);
    }
    return prev[m];
}

ComparisonResult mann_whitney_u(std::span<const double> a, std::span<const double> b, TestMethod method) {
    if (a.empty() || b.empty()) throw ValidationError("Mann-Whitney U needs two nonempty samples");
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    const std::size_t total = n + m;

    std::vector<std::pair<double, bool>> pooled;
    pooled.reserve(total);
    for (double v : a) pooled.emplace_back(v, true);
    for (double v : b) pooled.emplace_back(v, false);
    std::sort(pooled.begin(), pooled.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

    double rank_sum = 0.0;
    double tie_term = 0.0;
    bool ties = false;
    for (std::size_t i = 0; i < total;) {
        std::size_t j = i;
        while (j < total && pooled[j].first == pooled[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (pooled[k].second) rank_sum += midrank;
        }
        const auto t = static_cast<double>(j - i);
        if (j - i > 1) ties = true;
        tie_term += t * t * t - t;
        i = j;
    }

    ComparisonResult r;
    r.n = n;
    r.m = m;
    r.u = rank_sum - 0.5 * static_cast<double>(n * (n + 1));
    if (method == TestMethod::Auto) method = (std::min(n, m) <= 10 && !ties) ? TestMethod::Exact : TestMethod::Normal;
    r.method = method;

    const double nm = static_cast<double>(n * m);
    if (method == TestMethod::Exact) {
        const auto counts = mann_whitney_counts(n, m);
        const double all = std::accumulate(counts.begin(), counts.end(), 0.0);
        // With ties U may be fractional; the tails then cover the nearest
        // attainable integer values on each side.
        const auto lo = static_cast<std::size_t>(std::floor(r.u));
        const auto hi = static_cast<std::size_t>(std::ceil(r.u));
        double below = 0.0;
        double above = 0.0;
        for (std::size_t u = 0; u < counts.size(); ++u) {
            if (u <= lo) below += counts[u];
            if (u >= hi) above += counts[u];
        }
        r.p = std::min(1.0, 2.0 * std::min(below, above) / all);
        return r;
    }

    const double mu = 0.5 * nm;
    const auto big_n = static_cast<double>(total);
    const double var = nm / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if (!(var > 0.0)) {
        r.p = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::abs(r.u - mu) - 0.5) / std::sqrt(var);
    r.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

// ---- procedures --------------------------------------------------------------

Procedure Procedure::from_pipeline(const preprocess::Pipeline& pipeline, bool augment) {
    Procedure p;
    std::optional<preprocess::PreprocStep> scale;
    for (const auto& s : pipeline.steps) {
        if (s.kind == preprocess::StepKind::GlobalScale) {
            scale = s;
        } else {
            p.stages.push_back(Stage::of(s));
        }
    }
    if (augment) p.stages.push_back(Stage::augmentation());
    if (scale) p.stages.push_back(Stage::of(*scale));
    return p;
}

Procedure Procedure::parse(std::string_view text) {
    Procedure p;
    if (text.empty() || text == "raw") return p;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find('+', start);
        const auto token = text.substr(start, pos == std::string_view::npos ? pos : pos - start);
        if (token == "DA") {
            p.stages.push_back(Stage::augmentation());
        } else {
            p.stages.push_back(Stage::of(preprocess::PreprocStep::parse(token)));
        }
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return p;
}

std::string Procedure::to_string() const {
    if (stages.empty()) return "raw";
    std::string out;
    for (const auto& s : stages) {
        if (!out.empty()) out += '+';
        out += s.augment ? "DA" : s.step.to_string();
    }
    return out;
}

// ---- configuration -------------------------------------------------------------

nn::ModelSpec ModelConfig::build(std::size_t input_len, double dropout) const {
    if (custom) {
        if (custom->input_len != input_len) {
            throw ValidationError("custom model expects " + std::to_string(custom->input_len) +
                                  " features but the data has " + std::to_string(input_len));
        }
        custom->validate();
        return *custom;
    }
    return nn::build_fishcnn(input_len, kernel, filters, dropout);
}

namespace {

void validate_procedure(const Procedure& p, std::size_t n_features, const std::string& where) {
    std::size_t augments = 0;
    for (const auto& s : p.stages) {
        if (s.augment) {
            ++augments;
        } else {
            try {
                s.step.validate(n_features);
            } catch (const ValidationError& e) {
                throw ValidationError(where + ": " + e.what());
            }
        }
    }
    if (augments > 1) throw ValidationError(where + ": augmentation may appear at most once");
}

}  // namespace

void CvConfig::validate(std::size_t n_samples, std::size_t n_features) const {
    if (k < 2) throw ValidationError("k must be at least 2");
    if (k > n_samples) {
        throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n_samples) + " samples");
    }
    if (runs < 1) throw ValidationError("runs must be at least 1");
    if (jobs < 1) throw ValidationError("jobs must be at least 1");
    train.validate();
    augment.validate();
    validate_procedure(procedure, n_features, "procedure");
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        if (target_overrides[t]) {
            validate_procedure(*target_overrides[t], n_features, std::string("override.") + kTargetNames[t]);
        }
    }
    model.build(n_features, train.dropout);
}

std::string CvConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["procedure"] = procedure.to_string();
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        kv[std::string("override.") + kTargetNames[t]] = target_overrides[t] ? target_overrides[t]->to_string() : "none";
    }
    kv["augment.factor"] = std::to_string(augment.factor);
    kv["augment.offset_scale"] = format_double(augment.offset_scale);
    kv["augment.mult_scale"] = format_double(augment.mult_scale);
    kv["augment.slope_scale"] = format_double(augment.slope_scale);
    kv["augment.seed"] = std::to_string(augment.seed);
    kv["train.batch_size"] = std::to_string(train.batch_size);
    kv["train.lr"] = format_double(train.lr);
    kv["train.max_epochs"] = std::to_string(train.max_epochs);
    kv["train.patience"] = std::to_string(train.patience);
    kv["train.weight_decay"] = format_double(train.weight_decay);
    kv["train.dropout"] = format_double(train.dropout);
    kv["train.huber_delta"] = format_double(train.huber_delta);
    kv["train.val_fraction"] = format_double(train.val_fraction);
    kv["train.seed"] = std::to_string(train.seed);
    if (model.custom) {
        kv["model.custom"] = json::parse(nn::model_spec_to_json(*model.custom)).dump();
    } else {
        kv["model.kernel"] = std::to_string(model.kernel);
        kv["model.filters"] = std::to_string(model.filters);
    }
    kv["k"] = std::to_string(k);
    kv["runs"] = std::to_string(runs);
    kv["base_seed"] = std::to_string(base_seed);

    std::string out;
    for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
    return out;
}

std::string CvConfig::fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

// ---- cross-validation ----------------------------------------------------------

FoldOutcome run_fold(const Dataset& data, const FoldSplit& split, std::size_t run, std::size_t fold,
                     const Procedure& procedure, const CvConfig& cfg) {
    const auto train_idx = split.train_indices(fold);
    const auto test_idx = split.test_indices(fold);
    const Dataset outer = data.select(train_idx);
    const Dataset test = data.select(test_idx);

    auto inner = train::inner_split(outer, cfg.train.val_fraction, derive_seed(cfg.base_seed, "inner", {run, fold}));
    Dataset fit = std::move(inner.train);
    Dataset val = std::move(inner.val);
    SpectralMatrix test_x = test.x;
    const auto target_scaler = train::TargetScaler::fit(fit.y);

    std::optional<preprocess::FittedScaler> scaler;
    for (const auto& stage : procedure.stages) {
        if (stage.augment) {
            auto acfg = cfg.augment;
            acfg.seed = derive_seed(cfg.base_seed, "augment", {run, fold, cfg.augment.seed});
            fit = augment::augment(fit, acfg);
        } else if (stage.step.kind == preprocess::StepKind::GlobalScale) {
            scaler = preprocess::fit_global_scaler(fit.x);
            fit.x = preprocess::apply_scaler(*scaler, fit.x);
            val.x = preprocess::apply_scaler(*scaler, val.x);
            test_x = preprocess::apply_scaler(*scaler, test_x);
        } else {
            fit.x = preprocess::apply_row_step(stage.step, fit.x);
            val.x = preprocess::apply_row_step(stage.step, val.x);
            test_x = preprocess::apply_row_step(stage.step, test_x);
        }
    }

    auto tcfg = cfg.train;
    tcfg.seed = derive_seed(cfg.base_seed, "train", {run, fold, cfg.train.seed});
    const auto spec = cfg.model.build(fit.x.cols(), cfg.train.dropout);
    auto model = train::train_model(spec, fit, val, tcfg, target_scaler);
    auto pred = train::predict(model.state, model.spec, test_x, target_scaler);

    FoldOutcome out{score_fold(test.y, pred), std::move(pred), std::move(model), scaler, target_scaler};
    out.score.run = run;
    out.score.fold = fold;
    out.score.epochs = out.model.report.epochs();
    out.score.best_epoch = out.model.report.best_epoch;
    return out;
}

namespace {

/// Runs `count` independent items on up to `jobs` threads. The first failure
/// in item order is rethrown after every worker has finished.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn fn) {
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(jobs, count);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

[[noreturn]] void rethrow_with_context(std::size_t run, std::size_t fold) {
    const std::string where = "run " + std::to_string(run) + ", fold " + std::to_string(fold) + ": ";
    try {
        throw;
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    } catch (const train::TrainingError& e) {
        throw train::TrainingError(where + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(where + e.what());
    }
}

}  // namespace

CVResult run_cv(const Dataset& data, const CvConfig& cfg) {
    cfg.validate(data.size(), data.x.cols());

    std::vector<Procedure> procs{cfg.procedure};
    std::array<std::size_t, kTargetCount> source{};
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        if (!cfg.target_overrides[t]) continue;
        const auto it = std::find(procs.begin(), procs.end(), *cfg.target_overrides[t]);
        source[t] = static_cast<std::size_t>(it - procs.begin());
        if (it == procs.end()) procs.push_back(*cfg.target_overrides[t]);
    }

    std::vector<FoldSplit> splits;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        splits.push_back(split_folds(data.size(), cfg.k, derive_seed(cfg.base_seed, "folds", {r})));
    }

    const std::size_t per_proc = cfg.runs * cfg.k;
    std::vector<FoldScore> scores(procs.size() * per_proc);
    parallel_for(scores.size(), cfg.jobs, [&](std::size_t i) {
        const std::size_t p = i / per_proc;
        const std::size_t r = (i % per_proc) / cfg.k;
        const std::size_t f = i % cfg.k;
        try {
            scores[i] = run_fold(data, splits[r], r, f, procs[p], cfg).score;
        } catch (...) {
            rethrow_with_context(r, f);
        }
    });

    CVResult result;
    result.folds.assign(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(per_proc));
    for (std::size_t i = 0; i < per_proc; ++i) {
        auto& s = result.folds[i];
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            const auto& from = scores[source[t] * per_proc + i];
            s.r2[t] = from.r2[t];
            s.rmse[t] = from.rmse[t];
        }
        s.r2_overall = overall_score(s.r2);
        s.rmse_overall = overall_score(s.rmse);
    }
    result.summary = summarize(result.folds);
    result.run_summaries = summarize_runs(result.folds);
    result.fingerprint = cfg.fingerprint();
    result.config = cfg.canonical();
    return result;
}

std::vector<double> CVResult::overall_r2() const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.r2_overall);
    return v;
}

std::vector<double> CVResult::target_r2(std::size_t target) const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.r2.at(target));
    return v;
}

std::vector<RankedPipeline> grid_search_pipelines(const Dataset& data, std::span<const preprocess::Pipeline> pipelines,
                                                  const CvConfig& cfg, std::size_t budget) {
    if (budget < 1) throw ValidationError("grid search budget must be at least 1");
    std::vector<preprocess::Pipeline> chosen(pipelines.begin(), pipelines.end());
    std::sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < chosen.size(); ++i) {
        if (chosen[i].id == chosen[i - 1].id) {
            throw ValidationError("pipeline id " + std::to_string(chosen[i].id) + " appears twice");
        }
    }
    if (chosen.size() > budget) chosen.resize(budget);

    std::vector<RankedPipeline> ranked;
    for (const auto& p : chosen) {
        auto c = cfg;
        c.procedure = Procedure::from_pipeline(p);
        c.target_overrides = {};
        ranked.push_back({p.id, run_cv(data, c)});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const RankedPipeline& a, const RankedPipeline& b) {
        const auto& x = a.result.summary.r2_overall;
        const auto& y = b.result.summary.r2_overall;
        if (x.mean != y.mean) return x.mean > y.mean;
        if (x.std != y.std) return x.std < y.std;
        return a.id < b.id;
    });
    return ranked;
}

// ---- ablations ---------------------------------------------------------------

const AblationArm& AblationTable::arm(std::string_view label) const {
    for (const auto& a : arms) {
        if (a.label == label) return a;
    }
    throw ValidationError("no ablation arm labeled '" + std::string(label) + "'");
}

namespace {

AblationTable compare(std::string kind, std::string reference, std::vector<AblationArm> arms) {
    AblationTable table{std::move(kind), std::move(reference), std::move(arms)};
    const auto& ref = table.arm(table.reference).result;
    for (auto& a : table.arms) {
        if (a.label == table.reference) continue;
        a.overall_test = mann_whitney_u(a.result.overall_r2(), ref.overall_r2());
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            a.target_tests[t] = mann_whitney_u(a.result.target_r2(t), ref.target_r2(t));
        }
    }
    return table;
}

bool has_augmentation(const Procedure& p) {
    return std::any_of(p.stages.begin(), p.stages.end(), [](const Stage& s) { return s.augment; });
}

}  // namespace

AblationTable ablate_order(const Dataset& data, const CvConfig& cfg) {
    std::vector<AblationArm> arms;
    for (const char* label : {"SNV+DA+GS", "SNV+GS", "GS", "DA+SNV", "DA+GS", "DA"}) {
        auto c = cfg;
        c.procedure = Procedure::parse(label);
        c.target_overrides = {};
        arms.push_back({label, c.procedure.to_string(), run_cv(data, c), std::nullopt, {}});
    }
    return compare("order", "SNV+DA+GS", std::move(arms));
}

AblationTable ablate_factor(const Dataset& data, const CvConfig& cfg, std::vector<std::size_t> factors) {
    if (!has_augmentation(cfg.procedure)) {
        throw ValidationError("factor ablation needs a procedure with a DA stage, got " + cfg.procedure.to_string());
    }
    if (std::find(factors.begin(), factors.end(), std::size_t{50}) == factors.end()) {
        throw ValidationError("factor ablation needs the reference factor 50");
    }
    std::vector<AblationArm> arms;
    for (auto f : factors) {
        auto c = cfg;
        c.augment.factor = f;
        c.target_overrides = {};
        arms.push_back({std::to_string(f), c.procedure.to_string(), run_cv(data, c), std::nullopt, {}});
    }
    return compare("factor", "50", std::move(arms));
}

AblationTable ablate_kernel(const Dataset& data, const CvConfig& cfg, std::vector<std::size_t> kernels) {
    if (cfg.model.custom) throw ValidationError("kernel ablation applies to the built-in architecture only");
    if (std::find(kernels.begin(), kernels.end(), std::size_t{64}) == kernels.end()) {
        throw ValidationError("kernel ablation needs the reference kernel 64");
    }
    std::vector<AblationArm> arms;
    for (auto k : kernels) {
        auto c = cfg;
        c.model.kernel = k;
        c.target_overrides = {};
        arms.push_back({std::to_string(k), c.procedure.to_string(), run_cv(data, c), std::nullopt, {}});
    }
    return compare("kernel", "64", std::move(arms));
}

// ---- JSON --------------------------------------------------------------------

namespace {

json targets_json(const TargetRow& row) {
    json j = json::object();
    for (std::size_t t = 0; t < kTargetCount; ++t) j[kTargetNames[t]] = row[t];
    return j;
}

TargetRow targets_from(const json& j) {
    TargetRow row{};
    for (std::size_t t = 0; t < kTargetCount; ++t) row[t] = j.at(kTargetNames[t]).get<double>();
    return row;
}

json mean_std_json(const MeanStd& v) { return {{"mean", v.mean}, {"std", v.std}}; }

MeanStd mean_std_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

json config_json(const std::string& canonical) {
    json j = json::object();
    std::istringstream in(canonical);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

std::string config_from(const json& j) {
    std::string out;
    for (const auto& [key, value] : j.items()) out += key + "=" + value.get<std::string>() + "\n";
    return out;
}

json summary_json(const Summary& s) {
    json r2 = json::object();
    json rm = json::object();
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        r2[kTargetNames[t]] = mean_std_json(s.r2[t]);
        rm[kTargetNames[t]] = mean_std_json(s.rmse[t]);
    }
    return {{"r2_overall", mean_std_json(s.r2_overall)},
            {"rmse_overall", mean_std_json(s.rmse_overall)},
            {"r2", std::move(r2)},
            {"rmse", std::move(rm)}};
}

Summary summary_from(const json& s) {
    Summary out;
    out.r2_overall = mean_std_from(s.at("r2_overall"));
    out.rmse_overall = mean_std_from(s.at("rmse_overall"));
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        out.r2[t] = mean_std_from(s.at("r2").at(kTargetNames[t]));
        out.rmse[t] = mean_std_from(s.at("rmse").at(kTargetNames[t]));
    }
    return out;
}

json cv_json(const CVResult& r) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        folds.push_back({{"run", f.run},
                         {"fold", f.fold},
                         {"n_test", f.n_test},
                         {"r2", targets_json(f.r2)},
                         {"rmse", targets_json(f.rmse)},
                         {"r2_overall", f.r2_overall},
                         {"rmse_overall", f.rmse_overall},
                         {"epochs", f.epochs},
                         {"best_epoch", f.best_epoch}});
    }
    json runs = json::array();
    for (std::size_t i = 0; i < r.run_summaries.size(); ++i) {
        json entry = summary_json(r.run_summaries[i]);
        entry["run"] = i;
        runs.push_back(std::move(entry));
    }
    return {{"fingerprint", r.fingerprint},
            {"config", config_json(r.config)},
            {"test_unit", "fold"},
            {"folds", std::move(folds)},
            {"summary", summary_json(r.summary)},
            {"runs", std::move(runs)}};
}

CVResult cv_from(const json& j) {
    CVResult r;
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.config = config_from(j.at("config"));
    for (const auto& f : j.at("folds")) {
        FoldScore s;
        s.run = f.at("run").get<std::size_t>();
        s.fold = f.at("fold").get<std::size_t>();
        s.n_test = f.at("n_test").get<std::size_t>();
        s.r2 = targets_from(f.at("r2"));
        s.rmse = targets_from(f.at("rmse"));
        s.r2_overall = f.at("r2_overall").get<double>();
        s.rmse_overall = f.at("rmse_overall").get<double>();
        s.epochs = f.at("epochs").get<std::size_t>();
        s.best_epoch = f.at("best_epoch").get<std::size_t>();
        r.folds.push_back(s);
    }
    r.summary = summary_from(j.at("summary"));
    if (j.contains("runs"))
        for (const auto& run : j.at("runs")) r.run_summaries.push_back(summary_from(run));
    return r;
}

json test_json(const std::optional<ComparisonResult>& c) {
    if (!c) return nullptr;
    return {{"u", c->u},
            {"p", c->p},
            {"n", c->n},
            {"m", c->m},
            {"method", c->method == TestMethod::Exact ? "exact" : "normal"}};
}

std::optional<ComparisonResult> test_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    ComparisonResult c;
    c.u = j.at("u").get<double>();
    c.p = j.at("p").get<double>();
    c.n = j.at("n").get<std::size_t>();
    c.m = j.at("m").get<std::size_t>();
    c.method = j.at("method").get<std::string>() == "exact" ? TestMethod::Exact : TestMethod::Normal;
    return c;
}

}  // namespace

std::string CVResult::to_json() const {
    json j = {{"schema", 1}, {"kind", "cv"}};
    j.update(cv_json(*this));
    return j.dump(2) + "\n";
}

std::string AblationTable::to_json() const {
    json arr = json::array();
    for (const auto& a : arms) {
        json tests = json::object();
        for (std::size_t t = 0; t < kTargetCount; ++t) tests[kTargetNames[t]] = test_json(a.target_tests[t]);
        arr.push_back({{"label", a.label},
                       {"procedure", a.procedure},
                       {"result", cv_json(a.result)},
                       {"overall_test", test_json(a.overall_test)},
                       {"target_tests", std::move(tests)}});
    }
    const json j = {{"schema", 1},
                    {"kind", "ablation"},
                    {"ablation", kind},
                    {"reference", reference},
                    {"test_unit", "fold"},
                    {"arms", std::move(arr)}};
    return j.dump(2) + "\n";
}

// ---- reports -----------------------------------------------------------------

std::string format_mean_std(const MeanStd& v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f±%.3f", v.mean, v.std);
    return buf;
}

std::string format_p(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2g", p);
    return buf;
}

namespace {

bool beats(const MeanStd& arm, const MeanStd& ref, const std::optional<ComparisonResult>& test) {
    return test && test->p < kSignificanceLevel && arm.mean > ref.mean;
}

std::string cell(const MeanStd& v, bool bold) {
    const auto s = format_mean_std(v);
    return bold ? "**" + s + "**" : s;
}

std::string p_cell(const std::optional<ComparisonResult>& c) { return c ? format_p(c->p) : "-"; }

}  // namespace

std::string cv_markdown(const CVResult& result) {
    std::ostringstream out;
    const auto cfg = config_json(result.config);
    out << "Procedure `" << cfg.value("procedure", std::string("?")) << "`, " << result.folds.size()
        << " fold scores, fingerprint `" << result.fingerprint << "`\n\n";
    out << "| Target | R²CV | RMSECV |\n|---|---|---|\n";
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        out << "| " << kTargetNames[t] << " | " << format_mean_std(result.summary.r2[t]) << " | "
            << format_mean_std(result.summary.rmse[t]) << " |\n";
    }
    out << "| Overall | " << format_mean_std(result.summary.r2_overall) << " | "
        << format_mean_std(result.summary.rmse_overall) << " |\n";
    if (result.run_summaries.size() > 1) {
        out << "\n| Run | R²CV | RMSECV |\n|---|---|---|\n";
        for (std::size_t i = 0; i < result.run_summaries.size(); ++i)
            out << "| " << i << " | " << format_mean_std(result.run_summaries[i].r2_overall) << " | "
                << format_mean_std(result.run_summaries[i].rmse_overall) << " |\n";
    }
    return out.str();
}

std::string ablation_markdown(const AblationTable& table) {
    std::ostringstream out;
    const auto& ref = table.arm(table.reference).result.summary;
    if (table.kind == "kernel") {
        out << "| Kernel |";
        for (const auto& a : table.arms) out << ' ' << a.label << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < table.arms.size(); ++i) out << "---|";
        out << '\n';
        auto rows = [&](const std::string& name, auto get, auto test) {
            out << "| " << name << " R²CV |";
            for (const auto& a : table.arms) {
                out << ' ' << cell(get(a.result.summary), beats(get(a.result.summary), get(ref), test(a))) << " |";
            }
            out << "\n| " << name << " p-value |";
            for (const auto& a : table.arms) out << ' ' << p_cell(test(a)) << " |";
            out << '\n';
        };
        rows("Overall", [](const Summary& s) { return s.r2_overall; }, [](const AblationArm& a) { return a.overall_test; });
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            rows(kTargetNames[t], [t](const Summary& s) { return s.r2[t]; },
                 [t](const AblationArm& a) { return a.target_tests[t]; });
        }
        return out.str();
    }
    out << (table.kind == "factor" ? "| Factor | R²CV | p-value |\n" : "| Procedure | R²CV | p-value |\n");
    out << "|---|---|---|\n";
    for (const auto& a : table.arms) {
        const auto& s = a.result.summary.r2_overall;
        out << "| " << a.label << " | " << cell(s, beats(s, ref.r2_overall, a.overall_test)) << " | "
            << p_cell(a.overall_test) << " |\n";
    }
    return out.str();
}

std::string render_markdown(std::string_view results_json) {
    const auto j = json::parse(results_json);
    if (j.value("schema", 0) != 1) throw ValidationError("unsupported results schema");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "cv") return cv_markdown(cv_from(j));
    if (kind != "ablation") throw ValidationError("unknown results kind '" + kind + "'");
    AblationTable table;
    table.kind = j.at("ablation").get<std::string>();
    table.reference = j.at("reference").get<std::string>();
    for (const auto& a : j.at("arms")) {
        AblationArm arm;
        arm.label = a.at("label").get<std::string>();
        arm.procedure = a.at("procedure").get<std::string>();
        arm.result = cv_from(a.at("result"));
        arm.overall_test = test_from(a.at("overall_test"));
        for (std::size_t t = 0; t < kTargetCount; ++t) arm.target_tests[t] = test_from(a.at("target_tests").at(kTargetNames[t]));
        table.arms.push_back(std::move(arm));
    }
    return ablation_markdown(table);
}

}  // namespace spectral_forge::eval
