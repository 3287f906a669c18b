#pragma once

#include "spectral_forge/core.hpp"
#include "spectral_forge/eval.hpp"
#include "spectral_forge/synth.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spectral_forge::cli {

/// Bad configuration: unknown key, malformed value, failed precondition.
/// The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat experiment configuration with dotted keys, e.g. train.batch_size=38.
/// Every key has a default; values are normalized when set so equivalent
/// spellings (0.10 and 0.1) produce the same canonical text.
class Settings {
public:
    Settings();

    /// Reads `key=value` lines. Blank lines and lines starting with '#' are
    /// skipped.
    void load_file(const std::filesystem::path& path);
    void set(std::string_view key, std::string_view value);
    /// Parses `key=value`.
    void assign(std::string_view text);

    const std::string& get(std::string_view key) const;
    std::size_t get_size(std::string_view key) const;
    std::uint64_t get_u64(std::string_view key) const;
    double get_double(std::string_view key) const;
    bool get_bool(std::string_view key) const;
    std::vector<std::size_t> get_list(std::string_view key) const;

    /// Sorted key=value lines of everything except `jobs`.
    std::string canonical() const;
    std::string fingerprint() const;
    const std::map<std::string, std::string, std::less<>>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string, std::less<>> values_;
};

synth::SynthConfig synth_config(const Settings& s);
/// Spectra and targets from data.x/data.y, or a synthetic dataset when
/// data.x is empty.
Dataset load_data(const Settings& s);
eval::CvConfig cv_config(const Settings& s);

/// The `pipeline` key for CV: a design-matrix id (its steps, then DA, then
/// GS if present) or a procedure such as SNV+DA+GS.
eval::Procedure procedure_of(std::string_view text);
/// The `pipeline` key for preprocess: an id or a procedure without DA.
eval::Procedure preprocessing_of(std::string_view text);

/// Worker count: the explicit flag, else SPECTRAL_FORGE_JOBS, else 1.
std::size_t resolve_jobs(long flag);

}  // namespace spectral_forge::cli
