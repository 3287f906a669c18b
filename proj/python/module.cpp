// Python bindings: numpy in, numpy out. Results documents are returned as
// JSON text and decoded on the Python side.

#include "spectral_forge/augment.hpp"
#include "spectral_forge/eval.hpp"
#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/rng.hpp"
#include "spectral_forge/synth.hpp"
#include "spectral_forge/train.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace spectral_forge;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const SpectralMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Array to_array(const TargetMatrix& y) {
    Array out({y.rows(), kTargetCount});
    auto* p = out.mutable_data();
    for (const auto& row : y.values()) p = std::copy(row.begin(), row.end(), p);
    return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

SpectralMatrix to_matrix(const Array& x) {
    if (x.ndim() != 2) throw ValidationError("spectra must be a 2-D array");
    const auto rows = static_cast<std::size_t>(x.shape(0));
    const auto cols = static_cast<std::size_t>(x.shape(1));
    std::vector<std::string> ids(rows);
    for (std::size_t i = 0; i < rows; ++i) ids[i] = "s" + std::to_string(i);
    return SpectralMatrix(WavenumberAxis::linspace(static_cast<double>(cols), 1.0, cols), to_vector(x), std::move(ids));
}

Dataset to_dataset(const Array& x, const Array& y) {
    if (y.ndim() != 2 || y.shape(1) != static_cast<py::ssize_t>(kTargetCount))
        throw ValidationError("targets must be an (n, 3) array");
    std::vector<TargetRow> rows(static_cast<std::size_t>(y.shape(0)));
    const double* p = y.data();
    for (auto& r : rows) {
        std::copy(p, p + kTargetCount, r.begin());
        p += kTargetCount;
    }
    return Dataset(to_matrix(x), TargetMatrix(std::move(rows)));
}

py::dict generate(const std::string& preset, std::uint64_t seed, std::size_t n_samples, double noise_std,
                  double artefact_scale) {
    auto cfg = preset == "ftraman" ? synth::SynthConfig::ftraman() : synth::SynthConfig::ingaas();
    if (preset != "ingaas" && preset != "ftraman") throw ValidationError("unknown preset " + preset);
    cfg.seed = seed;
    if (n_samples) cfg.n_samples = n_samples;
    cfg.noise_std = noise_std;
    cfg.artefacts = synth::ArtefactScales::uniform(artefact_scale);
    const auto s = synth::generate(cfg);
    py::dict d;
    d["x"] = to_array(s.data.x);
    d["y"] = to_array(s.data.y);
    d["wavenumbers"] = std::vector<double>(s.data.x.axis().values().begin(), s.data.x.axis().values().end());
    d["truth"] = s.truth_json();
    return d;
}

Array preprocess_matrix(const Array& x, const std::string& pipeline) {
    const auto proc = eval::Procedure::parse(pipeline);
    SpectralMatrix m = to_matrix(x);
    for (const auto& st : proc.stages) {
        if (st.augment) throw ValidationError("augmentation is not a preprocessing step");
        st.step.validate(m.cols());
        if (st.step.kind == preprocess::StepKind::GlobalScale)
            m = preprocess::apply_scaler(preprocess::fit_global_scaler(m), m);
        else
            m = preprocess::apply_row_step(st.step, m);
    }
    return to_array(m);
}

py::tuple augment_data(const Array& x, const Array& y, std::size_t factor, std::uint64_t seed) {
    augment::AugmentConfig cfg;
    cfg.factor = factor;
    cfg.seed = seed;
    const auto out = augment::augment(to_dataset(x, y), cfg);
    return py::make_tuple(to_array(out.x), to_array(out.y));
}

std::string run_cv(const Array& x, const Array& y, const std::string& procedure, std::size_t runs, std::size_t k,
                   std::size_t max_epochs, std::size_t factor, std::uint64_t seed, std::size_t jobs) {
    const auto data = to_dataset(x, y);
    eval::CvConfig cfg;
    cfg.procedure = eval::Procedure::parse(procedure);
    cfg.runs = runs;
    cfg.k = k;
    cfg.train.max_epochs = max_epochs;
    cfg.augment.factor = factor;
    cfg.base_seed = seed;
    cfg.jobs = jobs;
    cfg.validate(data.size(), data.x.cols());
    py::gil_scoped_release release;
    return eval::run_cv(data, cfg).to_json();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "spectral_forge native core";
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def("design_matrix", [] {
        std::vector<std::pair<int, std::string>> out;
        for (const auto& p : preprocess::build_design_matrix()) out.emplace_back(p.id, p.to_string());
        return out;
    });
    m.def("snv", [](const Array& row) { return preprocess::snv(to_vector(row)); });
    m.def("linear_baseline", [](const Array& row) { return preprocess::linear_baseline(to_vector(row)); });
    m.def("savgol", [](const Array& row, int order, int window, int polyorder) {
        return preprocess::SavgolKernel(order, window, polyorder).apply(to_vector(row));
    }, py::arg("row"), py::arg("order"), py::arg("window"), py::arg("polyorder"));
    m.def("preprocess", &preprocess_matrix, py::arg("x"), py::arg("pipeline"));
    m.def("generate", &generate, py::arg("preset") = "ingaas", py::arg("seed") = 0, py::arg("n_samples") = 0,
          py::arg("noise_std") = 0.01, py::arg("artefact_scale") = 0.1);
    m.def("augment", &augment_data, py::arg("x"), py::arg("y"), py::arg("factor") = 50, py::arg("seed") = 0);
    m.def("run_cv", &run_cv, py::arg("x"), py::arg("y"), py::arg("procedure") = "SNV+DA+GS", py::arg("runs") = 1,
          py::arg("k") = 6, py::arg("max_epochs") = 300, py::arg("factor") = 50, py::arg("seed") = 0,
          py::arg("jobs") = 1);
    m.def("heuristic_lr", &train::heuristic_lr, py::arg("batch_size"));
    m.def("mann_whitney_u", [](const Array& a, const Array& b) {
        const auto r = eval::mann_whitney_u(to_vector(a), to_vector(b));
        return py::make_tuple(r.u, r.p);
    });
    m.def("derive_seed", [](std::uint64_t base, const std::string& tag, std::vector<std::uint64_t> idx) {
        return derive_seed(base, tag, std::span<const std::uint64_t>(idx));
    }, py::arg("base"), py::arg("tag"), py::arg("indices") = std::vector<std::uint64_t>{});
}
