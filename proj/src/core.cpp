#include "spectral_forge/core.hpp"

#include "spectral_forge/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace spectral_forge {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_number(std::string_view cell, double& out) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    if (cell.empty()) return false;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

struct Line {
    std::size_t number;
    std::string_view text;
};

std::vector<Line> nonblank_lines(const std::string& text) {
    std::vector<Line> lines;
    std::string_view rest(text);
    std::size_t number = 0;
    if (rest.starts_with("\xEF\xBB\xBF")) rest.remove_prefix(3);
    while (!rest.empty()) {
        ++number;
        const auto pos = rest.find('\n');
        std::string_view line = rest.substr(0, pos);
        rest = pos == std::string_view::npos ? std::string_view{} : rest.substr(pos + 1);
        if (!trim(line).empty()) lines.push_back({number, line});
    }
    return lines;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write " + path.string());
    out << content;
}

}  // namespace

WavenumberAxis::WavenumberAxis(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 3) throw ValidationError("wavenumber axis needs at least 3 values");
    for (double v : values_) {
        if (!std::isfinite(v)) throw ValidationError("wavenumber axis contains a non-finite value");
    }
    const bool down = values_[1] < values_[0];
    for (std::size_t i = 1; i < values_.size(); ++i) {
        const bool ok = down ? values_[i] < values_[i - 1] : values_[i] > values_[i - 1];
        if (!ok) throw ValidationError("wavenumber axis is not strictly monotonic at index " + std::to_string(i));
    }
}

WavenumberAxis WavenumberAxis::linspace(double first, double last, std::size_t count) {
    if (count < 3) throw ValidationError("wavenumber axis needs at least 3 values");
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        v[i] = first + (last - first) * t;
    }
    v.back() = last;
    return WavenumberAxis(std::move(v));
}

SpectralMatrix::SpectralMatrix(WavenumberAxis axis, std::vector<double> data, std::vector<std::string> sample_ids)
    : axis_(std::move(axis)), data_(std::move(data)), ids_(std::move(sample_ids)) {
    if (data_.size() != ids_.size() * axis_.size()) {
        throw ValidationError("spectral matrix has " + std::to_string(data_.size()) + " values, expected " +
                              std::to_string(ids_.size()) + " x " + std::to_string(axis_.size()));
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw ValidationError("spectral matrix contains a non-finite value");
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& id : ids_) {
        if (!seen.insert(id).second) throw ValidationError("duplicate sample id '" + id + "'");
    }
}

SpectralMatrix SpectralMatrix::select(std::span<const std::size_t> indices) const {
    std::vector<double> data;
    data.reserve(indices.size() * cols());
    std::vector<std::string> ids;
    ids.reserve(indices.size());
    for (std::size_t i : indices) {
        const auto r = row(i);
        data.insert(data.end(), r.begin(), r.end());
        ids.push_back(ids_[i]);
    }
    return SpectralMatrix(axis_, std::move(data), std::move(ids));
}

SpectralMatrix SpectralMatrix::with_data(std::vector<double> data) const {
    return SpectralMatrix(axis_, std::move(data), ids_);
}

TargetMatrix::TargetMatrix(std::vector<TargetRow> rows) : rows_(std::move(rows)) {
    for (const auto& r : rows_) {
        for (double v : r) {
            if (!std::isfinite(v)) throw ValidationError("target matrix contains a non-finite value");
        }
    }
}

std::vector<double> TargetMatrix::column(std::size_t target) const {
    std::vector<double> col(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) col[i] = rows_[i][target];
    return col;
}

TargetMatrix TargetMatrix::select(std::span<const std::size_t> indices) const {
    std::vector<TargetRow> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(rows_[i]);
    return TargetMatrix(std::move(out));
}

Dataset::Dataset(SpectralMatrix x_in, TargetMatrix y_in) : x(std::move(x_in)), y(std::move(y_in)) {
    if (x.rows() != y.rows()) {
        throw ValidationError("spectra have " + std::to_string(x.rows()) + " rows but targets have " +
                              std::to_string(y.rows()));
    }
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    return Dataset(x.select(indices), y.select(indices));
}

std::vector<std::size_t> FoldSplit::test_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> FoldSplit::train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> FoldSplit::fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignments) ++sizes[a];
    return sizes;
}

SpectralMatrix parse_spectra_csv(const std::string& text) {
    const auto lines = nonblank_lines(text);
    if (lines.empty()) throw DatasetError("empty dataset: missing header");
    const auto header = split_commas(lines[0].text);
    if (header.size() < 2 || trim(header[0]) != "sample_id") {
        throw DatasetError("header must start with 'sample_id' followed by wavenumbers", lines[0].number);
    }
    std::vector<double> wavenumbers;
    for (std::size_t c = 1; c < header.size(); ++c) {
        double w = 0;
        if (!parse_number(header[c], w)) {
            throw DatasetError("non-numeric wavenumber '" + std::string(trim(header[c])) + "' in column " +
                                   std::to_string(c + 1),
                               lines[0].number);
        }
        wavenumbers.push_back(w);
    }
    WavenumberAxis axis = [&] {
        try {
            return WavenumberAxis(std::move(wavenumbers));
        } catch (const ValidationError& e) {
            throw DatasetError(e.what(), lines[0].number);
        }
    }();
    if (lines.size() == 1) throw DatasetError("empty dataset");

    std::vector<double> data;
    data.reserve((lines.size() - 1) * axis.size());
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> first_seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto& line = lines[li];
        const auto cells = split_commas(line.text);
        if (cells.size() != header.size()) {
            throw DatasetError("malformed row: expected " + std::to_string(header.size()) + " cells, found " +
                                   std::to_string(cells.size()),
                               line.number);
        }
        std::string id(trim(cells[0]));
        if (id.empty()) throw DatasetError("malformed row: empty sample_id", line.number);
        if (auto [it, inserted] = first_seen.emplace(id, line.number); !inserted) {
            throw DatasetError("duplicate sample_id '" + id + "' (first seen on line " + std::to_string(it->second) +
                                   ")",
                               line.number);
        }
        for (std::size_t c = 1; c < cells.size(); ++c) {
            double v = 0;
            if (!parse_number(cells[c], v)) {
                throw DatasetError("non-numeric cell '" + std::string(trim(cells[c])) + "' in column " +
                                       std::to_string(c + 1),
                                   line.number);
            }
            data.push_back(v);
        }
        ids.push_back(std::move(id));
    }
    return SpectralMatrix(std::move(axis), std::move(data), std::move(ids));
}

std::vector<std::pair<std::string, TargetRow>> parse_targets_csv(const std::string& text) {
    const auto lines = nonblank_lines(text);
    if (lines.empty()) throw DatasetError("empty dataset: missing header");
    const auto header = split_commas(lines[0].text);
    const bool header_ok = header.size() == kTargetCount + 1 && trim(header[0]) == "sample_id" &&
                           std::equal(kTargetNames.begin(), kTargetNames.end(), header.begin() + 1,
                                      [](const char* name, std::string_view cell) { return trim(cell) == name; });
    if (!header_ok) {
        throw DatasetError("target header must be 'sample_id,water,protein,lipids_yield'", lines[0].number);
    }
    if (lines.size() == 1) throw DatasetError("empty dataset");

    std::vector<std::pair<std::string, TargetRow>> rows;
    std::unordered_map<std::string, std::size_t> first_seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto& line = lines[li];
        const auto cells = split_commas(line.text);
        if (cells.size() != header.size()) {
            throw DatasetError("malformed row: expected " + std::to_string(header.size()) + " cells, found " +
                                   std::to_string(cells.size()),
                               line.number);
        }
        std::string id(trim(cells[0]));
        if (id.empty()) throw DatasetError("malformed row: empty sample_id", line.number);
        if (auto [it, inserted] = first_seen.emplace(id, line.number); !inserted) {
            throw DatasetError("duplicate sample_id '" + id + "' (first seen on line " + std::to_string(it->second) +
                                   ")",
                               line.number);
        }
        TargetRow row{};
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            if (!parse_number(cells[t + 1], row[t])) {
                throw DatasetError("non-numeric cell '" + std::string(trim(cells[t + 1])) + "' in column " +
                                       std::to_string(t + 2),
                                   line.number);
            }
        }
        rows.emplace_back(std::move(id), row);
    }
    return rows;
}

Dataset load_dataset(const std::filesystem::path& x_path, const std::filesystem::path& y_path) {
    SpectralMatrix x = [&] {
        try {
            return parse_spectra_csv(read_file(x_path));
        } catch (const DatasetError& e) {
            throw DatasetError(x_path.string() + ": " + e.what(), e.line());
        }
    }();
    auto targets = [&] {
        try {
            return parse_targets_csv(read_file(y_path));
        } catch (const DatasetError& e) {
            throw DatasetError(y_path.string() + ": " + e.what(), e.line());
        }
    }();

    std::unordered_map<std::string_view, std::size_t> by_id;
    for (std::size_t i = 0; i < targets.size(); ++i) by_id.emplace(targets[i].first, i);

    std::vector<TargetRow> rows;
    rows.reserve(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto& id = x.sample_ids()[i];
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw DatasetError(y_path.string() + ": sample_id '" + id + "' from " + x_path.string() + " row " +
                               std::to_string(i + 1) + " has no target row");
        }
        rows.push_back(targets[it->second].second);
    }
    if (targets.size() != x.rows()) {
        std::unordered_set<std::string_view> x_ids(x.sample_ids().begin(), x.sample_ids().end());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (!x_ids.contains(targets[i].first)) {
                throw DatasetError(x_path.string() + ": sample_id '" + targets[i].first + "' from " +
                                   y_path.string() + " row " + std::to_string(i + 1) + " has no spectrum");
            }
        }
    }
    return Dataset(std::move(x), TargetMatrix(std::move(rows)));
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    (void)ec;
    return std::string(buf, ptr);
}

void write_spectra_csv(const std::filesystem::path& path, const SpectralMatrix& x) {
    std::string out = "sample_id";
    for (double w : x.axis().values()) {
        out += ',';
        out += format_double(w);
    }
    out += '\n';
    for (std::size_t i = 0; i < x.rows(); ++i) {
        out += x.sample_ids()[i];
        for (double v : x.row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_file(path, out);
}

void write_targets_csv(const std::filesystem::path& path, const Dataset& data) {
    std::string out = "sample_id";
    for (const char* name : kTargetNames) {
        out += ',';
        out += name;
    }
    out += '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out += data.x.sample_ids()[i];
        for (double v : data.y[i]) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_file(path, out);
}

void write_dataset(const std::filesystem::path& x_path, const std::filesystem::path& y_path, const Dataset& data) {
    write_spectra_csv(x_path, data.x);
    write_targets_csv(y_path, data);
}

FoldSplit split_folds(std::size_t n_samples, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("fold count must be at least 2");
    if (k > n_samples) {
        throw ValidationError("fold count " + std::to_string(k) + " exceeds sample count " +
                              std::to_string(n_samples));
    }
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    FoldSplit split;
    split.k = k;
    split.seed = seed;
    split.assignments.assign(n_samples, 0);
    for (std::size_t p = 0; p < n_samples; ++p) split.assignments[order[p]] = p % k;
    return split;
}

}  // namespace spectral_forge
