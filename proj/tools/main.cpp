// spectral-forge: dataset generation, preprocessing, augmentation,
// cross-validation, ablations and report rendering.

#include "settings.hpp"

#include "spectral_forge/augment.hpp"
#include "spectral_forge/eval.hpp"
#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/rng.hpp"
#include "spectral_forge/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace spectral_forge;
using namespace spectral_forge::cli;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    long jobs = 0;
    std::string out = "out";
};

std::string hash_hex(std::string_view text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write " + path.string());
    out << text;
}

/// Writes every output, then manifest.json listing them with their hashes.
class OutputDir {
public:
    OutputDir(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
        fs::create_directories(dir_);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void add(const std::string& name, const std::string& text) {
        write_file(path(name), text);
        files_[name] = hash_hex(text);
    }

    /// For files written by library calls.
    void record(const std::string& name) { files_[name] = hash_hex(read_file(path(name))); }

    void finish(const Settings& s, json seeds, json extra = json::object()) {
        json config = json::object();
        for (const auto& [k, v] : s.values()) {
            if (k != "jobs") config[k] = v;
        }
        json doc = {{"schema", 1},         {"command", command_}, {"fingerprint", s.fingerprint()},
                    {"config", config},    {"seeds", seeds},      {"outputs", files_}};
        for (auto& [k, v] : extra.items()) doc[k] = v;
        write_file(path("manifest.json"), doc.dump(2) + "\n");
    }

private:
    fs::path dir_;
    std::string command_;
    json files_ = json::object();
};

json base_seeds(const Settings& s) {
    return {{"base_seed", s.get_u64("base_seed")},
            {"derivation", "derive_seed(base_seed, component, indices): FNV-1a of the tag, then SplitMix64 rounds"}};
}

Settings resolve(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
    Settings s;
    if (!c.config.empty()) s.load_file(c.config);
    for (const auto& kv : c.sets) s.assign(kv);
    for (const auto& [k, v] : flags) {
        if (!v.empty()) s.set(k, v);
    }
    if (c.seed) s.set("base_seed", std::to_string(*c.seed));
    s.set("jobs", std::to_string(resolve_jobs(c.jobs)));
    return s;
}

void validate_cv(const eval::CvConfig& cfg, const Dataset& data) {
    try {
        cfg.validate(data.size(), data.x.cols());
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

// ---- commands ------------------------------------------------------------------

int cmd_generate(const Settings& s, const fs::path& out) {
    const auto cfg = synth_config(s);
    const auto d = synth::generate(cfg);
    OutputDir dir(out, "generate");
    write_dataset(dir.path("X.csv"), dir.path("Y.csv"), d.data);
    dir.record("X.csv");
    dir.record("Y.csv");
    dir.add("truth.json", d.truth_json());
    auto seeds = base_seeds(s);
    seeds["synth"] = cfg.seed;
    dir.finish(s, seeds);
    std::cerr << "generate: " << d.data.x.rows() << " x " << d.data.x.cols() << " spectra in " << out.string() << "\n";
    return 0;
}

int cmd_preprocess(const Settings& s, const fs::path& out) {
    eval::Procedure proc;
    try {
        proc = preprocessing_of(s.get("pipeline"));
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("pipeline: ") + e.what());
    }
    SpectralMatrix x = s.get("data.x").empty() ? synth::generate(synth_config(s)).data.x
                                               : parse_spectra_csv(read_file(s.get("data.x")));
    std::optional<preprocess::FittedScaler> scaler;
    for (const auto& st : proc.stages) {
        try {
            st.step.validate(x.cols());
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("pipeline: ") + e.what());
        }
        if (st.step.kind == preprocess::StepKind::GlobalScale) {
            scaler = preprocess::fit_global_scaler(x);
            x = preprocess::apply_scaler(*scaler, x);
        } else {
            x = preprocess::apply_row_step(st.step, x);
        }
    }
    OutputDir dir(out, "preprocess");
    write_spectra_csv(dir.path("X.csv"), x);
    dir.record("X.csv");
    json extra = {{"procedure", proc.to_string()}};
    if (scaler) extra["scaler"] = {{"global_min", scaler->global_min}, {"global_max", scaler->global_max}};
    dir.finish(s, base_seeds(s), extra);
    std::cerr << "preprocess: " << proc.to_string() << " on " << x.rows() << " rows\n";
    return 0;
}

int cmd_augment(const Settings& s, const fs::path& out) {
    const auto data = load_data(s);
    auto cfg = cv_config(s).augment;
    cfg.seed = derive_seed(s.get_u64("base_seed"), "augment", {s.get_u64("augment.seed")});
    const auto aug = augment::augment(data, cfg);
    OutputDir dir(out, "augment");
    write_dataset(dir.path("X.csv"), dir.path("Y.csv"), aug);
    dir.record("X.csv");
    dir.record("Y.csv");
    auto seeds = base_seeds(s);
    seeds["augment"] = cfg.seed;
    dir.finish(s, seeds);
    std::cerr << "augment: " << data.size() << " -> " << aug.size() << " rows\n";
    return 0;
}

int cmd_cv(const Settings& s, const fs::path& out) {
    const auto data = load_data(s);
    const auto cfg = cv_config(s);
    validate_cv(cfg, data);
    const auto result = eval::run_cv(data, cfg);
    OutputDir dir(out, "cv");
    dir.add("results.json", result.to_json());
    dir.add("results.md", eval::cv_markdown(result));
    dir.finish(s, base_seeds(s), {{"cv_fingerprint", result.fingerprint}});
    std::cerr << "cv: " << result.folds.size() << " folds, overall R2CV "
              << eval::format_mean_std(result.summary.r2_overall) << "\n";
    return 0;
}

std::string grid_markdown(const json& doc) {
    std::string md = "| Rank | ID | Pipeline | R²CV |\n|---|---|---|---|\n";
    std::size_t rank = 1;
    for (const auto& row : doc.at("ranking")) {
        const eval::MeanStd ms{row.at("r2_overall").at("mean").get<double>(), row.at("r2_overall").at("std").get<double>()};
        md += "| " + std::to_string(rank++) + " | " + std::to_string(row.at("id").get<int>()) + " | " +
              row.at("pipeline").get<std::string>() + " | " + eval::format_mean_std(ms) + " |\n";
    }
    return md;
}

int cmd_grid(const Settings& s, const fs::path& out) {
    const auto data = load_data(s);
    const auto cfg = cv_config(s);
    validate_cv(cfg, data);
    const auto budget = s.get_size("grid.budget");
    if (budget < 1) throw ConfigError("grid.budget must be at least 1");
    const auto pipelines = preprocess::build_design_matrix();
    for (const auto& p : pipelines) {
        for (const auto& st : p.steps) {
            if (st.kind == preprocess::StepKind::Derivative && static_cast<std::size_t>(st.window) > data.x.cols()) {
                throw ConfigError("design matrix window " + std::to_string(st.window) + " exceeds " +
                                  std::to_string(data.x.cols()) + " features");
            }
        }
    }
    const auto ranked = eval::grid_search_pipelines(data, pipelines, cfg, budget);
    json rows = json::array();
    for (const auto& r : ranked) {
        rows.push_back({{"id", r.id},
                        {"pipeline", preprocess::design_pipeline(r.id).to_string()},
                        {"procedure", eval::Procedure::from_pipeline(preprocess::design_pipeline(r.id)).to_string()},
                        {"fingerprint", r.result.fingerprint},
                        {"r2_overall", {{"mean", r.result.summary.r2_overall.mean}, {"std", r.result.summary.r2_overall.std}}},
                        {"overall_r2", r.result.overall_r2()}});
    }
    const json doc = {{"schema", 1}, {"kind", "grid"}, {"budget", budget}, {"ranking", rows}};
    OutputDir dir(out, "grid");
    dir.add("results.json", doc.dump(2) + "\n");
    dir.add("results.md", grid_markdown(doc));
    dir.finish(s, base_seeds(s));
    std::cerr << "grid: " << ranked.size() << " pipelines, best id " << ranked.front().id << "\n";
    return 0;
}

int cmd_ablate(const Settings& s, const fs::path& out, const std::string& which) {
    const auto data = load_data(s);
    const auto cfg = cv_config(s);
    validate_cv(cfg, data);
    eval::AblationTable table;
    try {
        if (which == "order") {
            table = eval::ablate_order(data, cfg);
        } else if (which == "factor") {
            table = eval::ablate_factor(data, cfg, s.get_list("ablate.factors"));
        } else {
            table = eval::ablate_kernel(data, cfg, s.get_list("ablate.kernels"));
        }
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    OutputDir dir(out, "ablate " + which);
    dir.add("results.json", table.to_json());
    dir.add("results.md", eval::ablation_markdown(table));
    dir.finish(s, base_seeds(s));
    std::cerr << "ablate " << which << ": " << table.arms.size() << " arms\n";
    return 0;
}

int cmd_report(const fs::path& results, const std::optional<fs::path>& out) {
    fs::path file = results;
    if (fs::is_directory(results)) {
        if (!fs::exists(results / "manifest.json")) {
            throw ConfigError("report: " + results.string() + " has no manifest.json");
        }
        file = results / "results.json";
    }
    const std::string text = read_file(file);
    const auto doc = json::parse(text);
    const std::string md = doc.at("kind") == "grid" ? grid_markdown(doc) : eval::render_markdown(text);
    std::cout << md;
    if (out) {
        fs::create_directories(*out);
        write_file(*out / "report.md", md);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral preprocessing, augmentation and CNN evaluation on NIR/Raman data"};
    app.require_subcommand(1);
    app.fallthrough();

    Common common;
    app.add_option("--config", common.config, "Flat key=value config file")->check(CLI::ExistingFile);
    app.add_option("--set", common.sets, "Override a config key, key=value (repeatable)");
    app.add_option("--seed", common.seed, "base_seed");
    app.add_option("--jobs", common.jobs, "Worker threads (default $SPECTRAL_FORGE_JOBS or 1)");
    app.add_option("--out", common.out, "Output directory");

    std::string preset, x, y, pipeline, factor, runs, k, budget;

    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (X.csv, Y.csv, truth.json)");
    gen->add_option("--preset", preset, "ingaas or ftraman");

    auto* pre = app.add_subcommand("preprocess", "Apply a preprocessing pipeline to X.csv");
    pre->add_option("--pipeline", pipeline, "Design-matrix id or stages such as LB+SNV+D1w9")->required();
    pre->add_option("--x", x, "Spectra CSV");

    auto* aug = app.add_subcommand("augment", "Augment a dataset");
    aug->add_option("--factor", factor, "Rows per original, including it");
    aug->add_option("--x", x, "Spectra CSV");
    aug->add_option("--y", y, "Targets CSV");

    auto* cv = app.add_subcommand("cv", "Repeated k-fold cross-validation");
    auto* grid = app.add_subcommand("grid", "Rank design-matrix pipelines by cross-validated R2");
    grid->add_option("--budget", budget, "Number of pipelines, lowest ids first");
    for (auto* sub : {cv, grid}) {
        sub->add_option("--x", x, "Spectra CSV");
        sub->add_option("--y", y, "Targets CSV");
        sub->add_option("--runs", runs, "Repetitions");
        sub->add_option("--k", k, "Folds");
    }
    cv->add_option("--pipeline", pipeline, "Design-matrix id or procedure such as SNV+DA+GS");

    auto* abl = app.add_subcommand("ablate", "Ablation study");
    std::string which;
    abl->add_option("which", which, "order, factor or kernel")->required()->check(CLI::IsMember({"order", "factor", "kernel"}));
    abl->add_option("--x", x, "Spectra CSV");
    abl->add_option("--y", y, "Targets CSV");
    abl->add_option("--runs", runs, "Repetitions");
    abl->add_option("--k", k, "Folds");
    abl->add_option("--pipeline", pipeline, "Procedure for the factor and kernel studies");

    auto* rep = app.add_subcommand("report", "Render results.json as Markdown");
    std::string results;
    std::string report_out;
    rep->add_option("results", results, "Results directory or JSON file")->required();
    rep->add_option("--report-out", report_out, "Also write report.md here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rep->parsed()) {
            return cmd_report(results, report_out.empty() ? std::nullopt : std::optional<fs::path>(report_out));
        }
        const Settings s = resolve(common, {{"synth.preset", preset},
                                            {"data.x", x},
                                            {"data.y", y},
                                            {"pipeline", pipeline},
                                            {"augment.factor", factor},
                                            {"cv.runs", runs},
                                            {"cv.k", k},
                                            {"grid.budget", budget}});
        const fs::path out = common.out;
        if (gen->parsed()) return cmd_generate(s, out);
        if (pre->parsed()) return cmd_preprocess(s, out);
        if (aug->parsed()) return cmd_augment(s, out);
        if (cv->parsed()) return cmd_cv(s, out);
        if (grid->parsed()) return cmd_grid(s, out);
        return cmd_ablate(s, out, which);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
