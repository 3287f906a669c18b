#pragma once

#include "spectral_forge/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spectral_forge::preprocess {

inline constexpr double kSnvTolerance = 1e-12;

/// Subtracts the straight line through the first and last points.
std::vector<double> linear_baseline(std::span<const double> spectrum);

/// Standard normal variate: (x - mean) / sample std (divisor n - 1).
std::vector<double> snv(std::span<const double> spectrum);

/// Savitzky-Golay filter weights for one window, unit spacing.
///
/// weights(t)[j] is the contribution of window sample j (offset j - half) to
/// the `order`-th derivative of the least-squares polynomial evaluated at
/// offset t, for t in [-half, half].
class SavgolKernel {
public:
    SavgolKernel(int order, int window, int polyorder);

    int order() const noexcept { return order_; }
    int window() const noexcept { return window_; }
    int polyorder() const noexcept { return polyorder_; }
    int half() const noexcept { return window_ / 2; }

    std::span<const double> weights(int offset) const;

    /// Derivative of one row; output length equals input length. Points within
    /// `half` of an edge use the first/last full window evaluated off-center.
    std::vector<double> apply(std::span<const double> row) const;

private:
    int order_;
    int window_;
    int polyorder_;
    std::vector<double> table_;  // window rows, one per offset, each `window` wide
};

/// Default polynomial order for a derivative order: 2 for 1st, 3 for 2nd.
int default_polyorder(int order);

SpectralMatrix savgol_derivative(const SpectralMatrix& matrix, int order, int window, int polyorder);

/// One global min/max pair learned from a training matrix.
struct FittedScaler {
    double global_min = 0.0;
    double global_max = 1.0;

    double apply(double v) const noexcept { return (v - global_min) / (global_max - global_min); }
    friend bool operator==(const FittedScaler&, const FittedScaler&) = default;
};

FittedScaler fit_global_scaler(const SpectralMatrix& train);
SpectralMatrix apply_scaler(const FittedScaler& scaler, const SpectralMatrix& matrix);

enum class StepKind { LinearBaseline, Snv, Derivative, GlobalScale };

/// One preprocessing step. Derivative carries its order, window and polyorder.
struct PreprocStep {
    StepKind kind = StepKind::LinearBaseline;
    int order = 0;
    int window = 0;
    int polyorder = 0;

    static PreprocStep linear_baseline() { return {StepKind::LinearBaseline}; }
    static PreprocStep snv() { return {StepKind::Snv}; }
    static PreprocStep global_scale() { return {StepKind::GlobalScale}; }
    static PreprocStep derivative(int order, int window, int polyorder);
    static PreprocStep derivative(int order, int window) { return derivative(order, window, default_polyorder(order)); }

    /// Family rank in the fixed order baseline, scatter, derivative, scaling.
    int family() const noexcept { return static_cast<int>(kind); }

    /// Checks the derivative parameters against a feature count.
    void validate(std::size_t n_features) const;

    std::string to_string() const;
    /// Inverse of to_string; the polyorder suffix is optional.
    static PreprocStep parse(std::string_view token);
    friend bool operator==(const PreprocStep&, const PreprocStep&) = default;
};

/// Ordered steps, at most one per family, in family order.
struct Pipeline {
    int id = 0;
    std::vector<PreprocStep> steps;

    Pipeline() = default;
    Pipeline(int id_in, std::vector<PreprocStep> steps_in);

    bool empty() const noexcept { return steps.empty(); }
    bool has(StepKind kind) const noexcept;

    /// `LB|SNV|D1w5p2|GS`; the empty pipeline is written `raw`.
    std::string to_string() const;
    static Pipeline parse(std::string_view text, int id = 0);

    friend bool operator==(const Pipeline&, const Pipeline&) = default;
};

/// The 64 pipelines of the preprocessing design matrix, id 1 to 64.
std::vector<Pipeline> build_design_matrix();

/// The pipeline with a given design-matrix id.
Pipeline design_pipeline(int id);

/// CSV with columns ID,Baseline,Scatter,Derivative,Scaling, '-' for an absent step.
std::string design_matrix_csv(std::span<const Pipeline> pipelines);

/// Applies a stateless step (everything but GlobalScale) to each row.
SpectralMatrix apply_row_step(const PreprocStep& step, const SpectralMatrix& matrix);

struct PipelineOutput {
    SpectralMatrix train;
    SpectralMatrix eval;
    std::optional<FittedScaler> scaler;
};

/// Applies the pipeline to both sets. GlobalScale is fitted on the
/// transformed train set only and then applied to both.
PipelineOutput apply_pipeline(const Pipeline& pipeline, const SpectralMatrix& train, const SpectralMatrix& eval);

}  // namespace spectral_forge::preprocess
