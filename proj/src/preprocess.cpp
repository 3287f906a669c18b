#include "spectral_forge/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spectral_forge::preprocess {

std::vector<double> linear_baseline(std::span<const double> spectrum) {
    const std::size_t n = spectrum.size();
    if (n < 2) throw ValidationError("linear baseline needs at least 2 points");
    const double first = spectrum.front();
    const double slope = (spectrum.back() - first) / static_cast<double>(n - 1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = spectrum[i] - (first + slope * static_cast<double>(i));
    out.front() = 0.0;
    out.back() = 0.0;
    return out;
}

std::vector<double> snv(std::span<const double> spectrum) {
    const std::size_t n = spectrum.size();
    if (n < 2) throw ValidationError("SNV needs at least 2 points");
    const double mean = std::accumulate(spectrum.begin(), spectrum.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : spectrum) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > kSnvTolerance)) throw ValidationError("SNV of a zero-variance spectrum");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = (spectrum[i] - mean) / sd;
    return out;
}

int default_polyorder(int order) { return order >= 2 ? 3 : 2; }

SavgolKernel::SavgolKernel(int order, int window, int polyorder)
    : order_(order), window_(window), polyorder_(polyorder) {
    if (order < 1 || order > 2) throw ValidationError("derivative order must be 1 or 2");
    if (window < 1 || window % 2 == 0) throw ValidationError("Savitzky-Golay window must be odd");
    if (polyorder < order) throw ValidationError("polyorder must be at least the derivative order");
    if (window < polyorder + 1) throw ValidationError("Savitzky-Golay window must be at least polyorder + 1");

    const int h = half();
    const int terms = polyorder + 1;
    Eigen::MatrixXd vander(window, terms);
    for (int i = 0; i < window; ++i) {
        const double z = static_cast<double>(i - h);
        double p = 1.0;
        for (int j = 0; j < terms; ++j) {
            vander(i, j) = p;
            p *= z;
        }
    }
    // Rows of `coef` map window samples to polynomial coefficients.
    const Eigen::MatrixXd coef = vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));

    table_.assign(static_cast<std::size_t>(window) * window, 0.0);
    for (int t = -h; t <= h; ++t) {
        double* w = table_.data() + static_cast<std::size_t>(t + h) * window;
        for (int j = order; j < terms; ++j) {
            double falling = 1.0;
            for (int q = 0; q < order; ++q) falling *= static_cast<double>(j - q);
            const double factor = falling * std::pow(static_cast<double>(t), j - order);
            for (int s = 0; s < window; ++s) w[s] += factor * coef(j, s);
        }
    }
}

std::span<const double> SavgolKernel::weights(int offset) const {
    const int h = half();
    if (offset < -h || offset > h) throw ValidationError("offset outside the Savitzky-Golay window");
    return {table_.data() + static_cast<std::size_t>(offset + h) * window_, static_cast<std::size_t>(window_)};
}

std::vector<double> SavgolKernel::apply(std::span<const double> row) const {
    const auto n = static_cast<int>(row.size());
    if (window_ > n) {
        throw ValidationError("Savitzky-Golay window " + std::to_string(window_) + " exceeds " + std::to_string(n) +
                              " features");
    }
    const int h = half();
    std::vector<double> out(row.size());
    for (int i = 0; i < n; ++i) {
        int center = i;
        if (i < h) center = h;
        if (i > n - 1 - h) center = n - 1 - h;
        const auto w = weights(i - center);
        const double* x = row.data() + (center - h);
        double acc = 0.0;
        for (int s = 0; s < window_; ++s) acc += w[s] * x[s];
        out[i] = acc;
    }
    return out;
}

SpectralMatrix savgol_derivative(const SpectralMatrix& matrix, int order, int window, int polyorder) {
    const SavgolKernel kernel(order, window, polyorder);
    if (static_cast<std::size_t>(window) > matrix.cols()) {
        throw ValidationError("Savitzky-Golay window " + std::to_string(window) + " exceeds " +
                              std::to_string(matrix.cols()) + " features");
    }
    std::vector<double> data;
    data.reserve(matrix.data().size());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const auto d = kernel.apply(matrix.row(r));
        data.insert(data.end(), d.begin(), d.end());
    }
    return matrix.with_data(std::move(data));
}

FittedScaler fit_global_scaler(const SpectralMatrix& train) {
    if (train.empty()) throw ValidationError("cannot fit a global scaler on an empty matrix");
    const auto [lo, hi] = std::minmax_element(train.data().begin(), train.data().end());
    if (!(*hi > *lo)) throw ValidationError("cannot fit a global scaler on a constant matrix");
    return {*lo, *hi};
}

SpectralMatrix apply_scaler(const FittedScaler& scaler, const SpectralMatrix& matrix) {
    std::vector<double> data(matrix.data().begin(), matrix.data().end());
    for (double& v : data) v = scaler.apply(v);
    return matrix.with_data(std::move(data));
}

PreprocStep PreprocStep::derivative(int order, int window, int polyorder) {
    PreprocStep step{StepKind::Derivative, order, window, polyorder};
    // Constructing the kernel runs the order/window/polyorder checks.
    (void)SavgolKernel(order, window, polyorder);
    return step;
}

void PreprocStep::validate(std::size_t n_features) const {
    if (kind != StepKind::Derivative) return;
    (void)SavgolKernel(order, window, polyorder);
    if (static_cast<std::size_t>(window) > n_features) {
        throw ValidationError("Savitzky-Golay window " + std::to_string(window) + " exceeds " +
                              std::to_string(n_features) + " features");
    }
}

std::string PreprocStep::to_string() const {
    switch (kind) {
        case StepKind::LinearBaseline: return "LB";
        case StepKind::Snv: return "SNV";
        case StepKind::GlobalScale: return "GS";
        case StepKind::Derivative:
            return "D" + std::to_string(order) + "w" + std::to_string(window) + "p" + std::to_string(polyorder);
    }
    return {};
}

Pipeline::Pipeline(int id_in, std::vector<PreprocStep> steps_in) : id(id_in), steps(std::move(steps_in)) {
    for (std::size_t i = 1; i < steps.size(); ++i) {
        if (steps[i].family() <= steps[i - 1].family()) {
            throw ValidationError("pipeline steps must follow baseline, scatter, derivative, scaling with at most "
                                  "one step per family");
        }
    }
}

bool Pipeline::has(StepKind kind) const noexcept {
    return std::any_of(steps.begin(), steps.end(), [kind](const PreprocStep& s) { return s.kind == kind; });
}

std::string Pipeline::to_string() const {
    if (steps.empty()) return "raw";
    std::string out;
    for (const auto& s : steps) {
        if (!out.empty()) out += '|';
        out += s.to_string();
    }
    return out;
}

namespace {

int parse_int(std::string_view text, std::string_view whole) {
    if (text.empty() || !std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ValidationError("malformed pipeline step '" + std::string(whole) + "'");
    }
    return std::stoi(std::string(text));
}

}  // namespace

PreprocStep PreprocStep::parse(std::string_view token) {
    if (token == "LB") return PreprocStep::linear_baseline();
    if (token == "SNV") return PreprocStep::snv();
    if (token == "GS") return PreprocStep::global_scale();
    // D<order>w<window>[p<polyorder>]
    if (token.size() >= 4 && token[0] == 'D') {
        const auto w_pos = token.find('w');
        if (w_pos != std::string_view::npos) {
            const int order = parse_int(token.substr(1, w_pos - 1), token);
            const auto p_pos = token.find('p', w_pos);
            if (p_pos == std::string_view::npos) {
                return PreprocStep::derivative(order, parse_int(token.substr(w_pos + 1), token));
            }
            const int window = parse_int(token.substr(w_pos + 1, p_pos - w_pos - 1), token);
            return PreprocStep::derivative(order, window, parse_int(token.substr(p_pos + 1), token));
        }
    }
    throw ValidationError("unknown pipeline step '" + std::string(token) + "'");
}

Pipeline Pipeline::parse(std::string_view text, int id) {
    if (text == "raw" || text.empty()) return Pipeline(id, {});
    std::vector<PreprocStep> steps;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find('|', start);
        steps.push_back(PreprocStep::parse(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return Pipeline(id, std::move(steps));
}

std::vector<Pipeline> build_design_matrix() {
    constexpr int first_windows[] = {5, 9, 13, 17, 21, 25};
    constexpr int second_windows[] = {13, 15, 17, 19, 21, 23, 25, 31};

    std::vector<Pipeline> out;
    out.reserve(64);
    auto add = [&](std::vector<PreprocStep> steps) {
        out.emplace_back(static_cast<int>(out.size()) + 1, std::move(steps));
    };

    add({});
    // Four blocks: LB family, SNV family, then both again with global scaling.
    for (const bool scaled : {false, true}) {
        for (const bool baseline : {true, false}) {
            std::vector<PreprocStep> tail;
            if (scaled) tail.push_back(PreprocStep::global_scale());
            auto with = [&](std::vector<PreprocStep> head) {
                head.insert(head.end(), tail.begin(), tail.end());
                add(std::move(head));
            };
            std::vector<PreprocStep> head;
            if (baseline) {
                head.push_back(PreprocStep::linear_baseline());
                with(head);
            }
            head.push_back(PreprocStep::snv());
            with(head);
            for (int w : first_windows) {
                auto h = head;
                h.push_back(PreprocStep::derivative(1, w));
                with(std::move(h));
            }
            for (int w : second_windows) {
                auto h = head;
                h.push_back(PreprocStep::derivative(2, w));
                with(std::move(h));
            }
        }
    }
    add({PreprocStep::global_scale()});
    return out;
}

Pipeline design_pipeline(int id) {
    if (id < 1 || id > 64) throw ValidationError("design-matrix pipeline id must be in 1..64, got " + std::to_string(id));
    return build_design_matrix()[static_cast<std::size_t>(id - 1)];
}

std::string design_matrix_csv(std::span<const Pipeline> pipelines) {
    std::string out = "ID,Baseline,Scatter,Derivative,Scaling\n";
    for (const auto& p : pipelines) {
        std::string baseline = "-", scatter = "-", derivative = "-", scaling = "-";
        for (const auto& s : p.steps) {
            switch (s.kind) {
                case StepKind::LinearBaseline: baseline = "LB"; break;
                case StepKind::Snv: scatter = "SNV"; break;
                case StepKind::GlobalScale: scaling = "GS"; break;
                case StepKind::Derivative:
                    derivative = std::string("\"") + (s.order == 1 ? "1st" : "2nd") + ", w=" + std::to_string(s.window) +
                                 "\"";
                    break;
            }
        }
        out += std::to_string(p.id);
        if (p.steps.empty()) out += "(raw)";
        out += ',' + baseline + ',' + scatter + ',' + derivative + ',' + scaling + '\n';
    }
    return out;
}

SpectralMatrix apply_row_step(const PreprocStep& step, const SpectralMatrix& matrix) {
    switch (step.kind) {
        case StepKind::Derivative:
            return savgol_derivative(matrix, step.order, step.window, step.polyorder);
        case StepKind::GlobalScale:
            throw ValidationError("global scaling is fitted, not applied per row");
        case StepKind::LinearBaseline:
        case StepKind::Snv: break;
    }
    std::vector<double> data;
    data.reserve(matrix.data().size());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const auto d = step.kind == StepKind::Snv ? snv(matrix.row(r)) : linear_baseline(matrix.row(r));
        data.insert(data.end(), d.begin(), d.end());
    }
    return matrix.with_data(std::move(data));
}

PipelineOutput apply_pipeline(const Pipeline& pipeline, const SpectralMatrix& train, const SpectralMatrix& eval) {
    if (!(train.axis() == eval.axis())) throw ValidationError("train and eval matrices must share a wavenumber axis");
    PipelineOutput out{train, eval, std::nullopt};
    for (const auto& step : pipeline.steps) {
        if (step.kind == StepKind::GlobalScale) {
            const auto scaler = fit_global_scaler(out.train);
            out.train = apply_scaler(scaler, out.train);
            out.eval = apply_scaler(scaler, out.eval);
            out.scaler = scaler;
        } else {
            step.validate(train.cols());
            out.train = apply_row_step(step, out.train);
            out.eval = apply_row_step(step, out.eval);
        }
    }
    return out;
}

}  // namespace spectral_forge::preprocess
