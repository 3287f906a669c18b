#pragma once

#include "spectral_forge/augment.hpp"
#include "spectral_forge/core.hpp"
#include "spectral_forge/nn.hpp"
#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/train.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spectral_forge::eval {

// ---- metrics ---------------------------------------------------------------

/// Coefficient of determination, 1 - SS_res / SS_tot. Throws on a constant
/// y_true rather than returning a sentinel.
double r2(std::span<const double> y_true, std::span<const double> y_pred);
double rmse(std::span<const double> y_true, std::span<const double> y_pred);

/// Arithmetic mean of the per-target scores.
double overall_score(std::span<const double> per_target);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

struct FoldScore {
    std::size_t run = 0;
    std::size_t fold = 0;
    std::size_t n_test = 0;
    TargetRow r2{};
    TargetRow rmse{};
    double r2_overall = 0.0;
    double rmse_overall = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
};

FoldScore score_fold(const TargetMatrix& truth, const TargetMatrix& pred);

struct Summary {
    MeanStd r2_overall;
    MeanStd rmse_overall;
    std::array<MeanStd, kTargetCount> r2{};
    std::array<MeanStd, kTargetCount> rmse{};
};

Summary summarize(std::span<const FoldScore> folds);
/// One summary per run over that run's folds, ordered by run index.
std::vector<Summary> summarize_runs(std::span<const FoldScore> folds);

// ---- Mann-Whitney U ----------------------------------------------------------

enum class TestMethod { Auto, Exact, Normal };

struct ComparisonResult {
    double u = 0.0;  // U of the first sample
    double p = 1.0;  // two-sided
    std::size_t n = 0;
    std::size_t m = 0;
    TestMethod method = TestMethod::Exact;
};

/// Two-sided Mann-Whitney U test with midranks. Auto uses the exact null
/// distribution when min(n, m) <= 10 and there are no ties, otherwise the
/// normal approximation with tie and continuity corrections.
ComparisonResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                TestMethod method = TestMethod::Auto);

/// Number of arrangements giving each U value, index 0 .. n * m.
std::vector<double> mann_whitney_counts(std::size_t n, std::size_t m);

inline constexpr double kSignificanceLevel = 0.05;

// ---- procedures --------------------------------------------------------------

/// One stage of a data-preparation procedure: a preprocessing step or
/// augmentation of the training partition.
struct Stage {
    bool augment = false;
    preprocess::PreprocStep step;

    static Stage augmentation() { return {true, {}}; }
    static Stage of(preprocess::PreprocStep s) { return {false, s}; }
    friend bool operator==(const Stage&, const Stage&) = default;
};

/// Stages applied in the stored order, e.g. SNV+DA+GS.
struct Procedure {
    std::vector<Stage> stages;

    /// Per-row steps of the pipeline, then augmentation, then global scaling.
    static Procedure from_pipeline(const preprocess::Pipeline& pipeline, bool augment = true);
    /// '+'-separated stages: LB, SNV, D<o>w<w>[p<p>], GS, DA. `raw` is empty.
    static Procedure parse(std::string_view text);

    std::string to_string() const;
    friend bool operator==(const Procedure&, const Procedure&) = default;
};

// ---- cross-validation ----------------------------------------------------------

/// Either a custom layer graph or the two-conv architecture with a chosen
/// kernel size and filter count.
struct ModelConfig {
    std::size_t kernel = 64;
    std::size_t filters = 16;
    std::optional<nn::ModelSpec> custom;

    nn::ModelSpec build(std::size_t input_len, double dropout) const;
};

struct CvConfig {
    Procedure procedure = Procedure::parse("SNV+DA+GS");
    /// A target with an override takes its scores from a CV run of that
    /// procedure instead of the main one.
    std::array<std::optional<Procedure>, kTargetCount> target_overrides{};
    augment::AugmentConfig augment;
    train::TrainConfig train;
    ModelConfig model;
    std::size_t k = 6;
    std::size_t runs = 10;
    std::uint64_t base_seed = 0;
    /// Worker threads; results do not depend on it.
    std::size_t jobs = 1;

    void validate(std::size_t n_samples, std::size_t n_features) const;
    /// key=value lines, sorted, everything that affects results.
    std::string canonical() const;
    std::string fingerprint() const;
};

struct CVResult {
    std::vector<FoldScore> folds;
    Summary summary;  // over all folds of all runs
    std::vector<Summary> run_summaries;
    std::string fingerprint;
    std::string config;  // canonical form of the CvConfig

    std::vector<double> overall_r2() const;
    std::vector<double> target_r2(std::size_t target) const;
    std::string to_json() const;
};

/// Seeds per run r and fold f, all from base_seed:
///   folds    derive_seed(base, "folds", {r})
///   inner    derive_seed(base, "inner", {r, f})
///   augment  derive_seed(base, "augment", {r, f, augment.seed})
///   train    derive_seed(base, "train", {r, f, train.seed})
CVResult run_cv(const Dataset& data, const CvConfig& cfg);

/// Runs one fold of one run for a procedure; the building block of run_cv.
/// Returns the fitted model and its test-fold predictions.
struct FoldOutcome {
    FoldScore score;
    TargetMatrix predictions;
    train::TrainedModel model;
    std::optional<preprocess::FittedScaler> scaler;
    train::TargetScaler target_scaler;
};

FoldOutcome run_fold(const Dataset& data, const FoldSplit& split, std::size_t run, std::size_t fold,
                     const Procedure& procedure, const CvConfig& cfg);

struct RankedPipeline {
    int id = 0;
    CVResult result;
};

/// Evaluates the `budget` lowest-id pipelines and ranks them by mean overall
/// R2 (descending), then std (ascending), then id.
std::vector<RankedPipeline> grid_search_pipelines(const Dataset& data, std::span<const preprocess::Pipeline> pipelines,
                                                  const CvConfig& cfg, std::size_t budget);

// ---- ablations ---------------------------------------------------------------

struct AblationArm {
    std::string label;
    std::string procedure;
    CVResult result;
    /// Against the reference arm; empty for the reference itself.
    std::optional<ComparisonResult> overall_test;
    std::array<std::optional<ComparisonResult>, kTargetCount> target_tests{};
};

struct AblationTable {
    std::string kind;  // order | factor | kernel
    std::string reference;
    std::vector<AblationArm> arms;

    const AblationArm& arm(std::string_view label) const;
    std::string to_json() const;
};

/// Arms SNV+DA+GS (reference), SNV+GS, GS, DA+SNV, DA+GS, DA.
AblationTable ablate_order(const Dataset& data, const CvConfig& cfg);
/// Augmentation factors, reference 50.
AblationTable ablate_factor(const Dataset& data, const CvConfig& cfg,
                            std::vector<std::size_t> factors = {10, 30, 50, 60});
/// Convolution kernel sizes, reference 64.
AblationTable ablate_kernel(const Dataset& data, const CvConfig& cfg,
                            std::vector<std::size_t> kernels = {64, 16, 8, 4});

// ---- reports -----------------------------------------------------------------

/// "0.811±0.105"
std::string format_mean_std(const MeanStd& v);
/// Two significant digits, e.g. 1.6e-08, 0.25, 0.00055.
std::string format_p(double p);

std::string cv_markdown(const CVResult& result);
/// Procedure / R2CV / p-value rows for order and factor tables; for kernel
/// tables one column per kernel with overall and per-target rows. Arms that
/// beat the reference at p < 0.05 are bold.
std::string ablation_markdown(const AblationTable& table);

/// Renders a results JSON document (cv or ablation) produced by to_json().
std::string render_markdown(std::string_view results_json);

}  // namespace spectral_forge::eval
