#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectral_forge {

/// Raised when an input violates a documented precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by the CSV loaders; carries the 1-based line number when known.
class DatasetError : public std::runtime_error {
public:
    DatasetError(const std::string& message, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Wavenumbers in cm^-1. At least 3 finite values, strictly monotonic in
/// either direction.
class WavenumberAxis {
public:
    WavenumberAxis() = default;
    explicit WavenumberAxis(std::vector<double> values);

    /// Evenly spaced axis from `first` to `last` inclusive.
    static WavenumberAxis linspace(double first, double last, std::size_t count);

    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    bool descending() const noexcept { return values_.size() > 1 && values_[1] < values_[0]; }

    friend bool operator==(const WavenumberAxis&, const WavenumberAxis&) = default;

private:
    std::vector<double> values_;
};

/// n_samples x n_features intensities, row-major, plus the axis and ids.
class SpectralMatrix {
public:
    SpectralMatrix() = default;
    SpectralMatrix(WavenumberAxis axis, std::vector<double> data, std::vector<std::string> sample_ids);

    std::size_t rows() const noexcept { return ids_.size(); }
    std::size_t cols() const noexcept { return axis_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    const WavenumberAxis& axis() const noexcept { return axis_; }
    std::span<const std::string> sample_ids() const noexcept { return ids_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> mutable_data() noexcept { return data_; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols(), cols()}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    /// Rows picked by index, in the order given.
    SpectralMatrix select(std::span<const std::size_t> indices) const;

    /// Same axis and ids, new values. Used by per-row transforms.
    SpectralMatrix with_data(std::vector<double> data) const;

    friend bool operator==(const SpectralMatrix&, const SpectralMatrix&) = default;

private:
    WavenumberAxis axis_;
    std::vector<double> data_;
    std::vector<std::string> ids_;
};

inline constexpr std::size_t kTargetCount = 3;
inline constexpr std::array<const char*, kTargetCount> kTargetNames{"water", "protein", "lipids_yield"};

using TargetRow = std::array<double, kTargetCount>;

/// Reference values (percent of total weight) for water, protein and lipids yield.
class TargetMatrix {
public:
    TargetMatrix() = default;
    explicit TargetMatrix(std::vector<TargetRow> rows);

    std::size_t rows() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    const TargetRow& operator[](std::size_t i) const { return rows_[i]; }
    std::span<const TargetRow> values() const noexcept { return rows_; }
    std::vector<double> column(std::size_t target) const;

    TargetMatrix select(std::span<const std::size_t> indices) const;

    friend bool operator==(const TargetMatrix&, const TargetMatrix&) = default;

private:
    std::vector<TargetRow> rows_;
};

/// Paired spectra and targets. Row i of `x` and `y` describe the same sample.
struct Dataset {
    SpectralMatrix x;
    TargetMatrix y;

    Dataset() = default;
    Dataset(SpectralMatrix x_in, TargetMatrix y_in);

    std::size_t size() const noexcept { return x.rows(); }
    Dataset select(std::span<const std::size_t> indices) const;
};

struct FoldSplit {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    std::uint64_t seed = 0;

    std::vector<std::size_t> test_indices(std::size_t fold) const;
    std::vector<std::size_t> train_indices(std::size_t fold) const;
    std::vector<std::size_t> fold_sizes() const;
};

/// Reads the X and Y CSV files and pairs them by sample id.
Dataset load_dataset(const std::filesystem::path& x_path, const std::filesystem::path& y_path);

/// Parsers used by load_dataset, exposed for in-memory inputs.
SpectralMatrix parse_spectra_csv(const std::string& text);
std::vector<std::pair<std::string, TargetRow>> parse_targets_csv(const std::string& text);

void write_spectra_csv(const std::filesystem::path& path, const SpectralMatrix& x);
void write_targets_csv(const std::filesystem::path& path, const Dataset& data);
void write_dataset(const std::filesystem::path& x_path, const std::filesystem::path& y_path, const Dataset& data);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Seeded, unstratified k-fold assignment. Indices are shuffled with
/// Rng(seed) and position p goes to fold p mod k, so the first n mod k folds
/// hold one extra sample.
FoldSplit split_folds(std::size_t n_samples, std::size_t k, std::uint64_t seed);

}  // namespace spectral_forge
