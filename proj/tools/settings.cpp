#include "settings.hpp"

#include "spectral_forge/nn.hpp"
#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/rng.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace spectral_forge::cli {

namespace {

enum class Kind { Size, U64, Double, Bool, Text, List, SizeOrPreset };

struct KeySpec {
    const char* key;
    Kind kind;
    std::string fallback;
};

std::string num(double v) { return format_double(v); }

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = [] {
        const augment::AugmentConfig a;
        const train::TrainConfig t;
        const synth::SynthConfig sy;
        return std::vector<KeySpec>{
            {"base_seed", Kind::U64, "0"},
            {"jobs", Kind::Size, "1"},
            {"data.x", Kind::Text, ""},
            {"data.y", Kind::Text, ""},
            {"synth.preset", Kind::Text, "ingaas"},
            {"synth.n_samples", Kind::SizeOrPreset, "preset"},
            {"synth.n_features", Kind::SizeOrPreset, "preset"},
            {"synth.noise_std", Kind::Double, num(sy.noise_std)},
            {"synth.artefact_offset", Kind::Double, num(sy.artefacts.offset)},
            {"synth.artefact_mult", Kind::Double, num(sy.artefacts.mult)},
            {"synth.artefact_slope", Kind::Double, num(sy.artefacts.slope)},
            {"synth.balance", Kind::Bool, sy.balance_component ? "true" : "false"},
            {"pipeline", Kind::Text, "SNV+DA+GS"},
            {"override.water", Kind::Text, "none"},
            {"override.protein", Kind::Text, "none"},
            {"override.lipids_yield", Kind::Text, "none"},
            {"augment.factor", Kind::Size, std::to_string(a.factor)},
            {"augment.offset_scale", Kind::Double, num(a.offset_scale)},
            {"augment.mult_scale", Kind::Double, num(a.mult_scale)},
            {"augment.slope_scale", Kind::Double, num(a.slope_scale)},
            {"augment.seed", Kind::U64, std::to_string(a.seed)},
            {"train.batch_size", Kind::Size, std::to_string(t.batch_size)},
            {"train.lr", Kind::Double, num(t.lr)},
            {"train.max_epochs", Kind::Size, std::to_string(t.max_epochs)},
            {"train.patience", Kind::Size, std::to_string(t.patience)},
            {"train.weight_decay", Kind::Double, num(t.weight_decay)},
            {"train.dropout", Kind::Double, num(t.dropout)},
            {"train.huber_delta", Kind::Double, num(t.huber_delta)},
            {"train.val_fraction", Kind::Double, num(t.val_fraction)},
            {"train.seed", Kind::U64, std::to_string(t.seed)},
            {"model.kernel", Kind::Size, "64"},
            {"model.filters", Kind::Size, "16"},
            {"model.spec", Kind::Text, ""},
            {"cv.k", Kind::Size, "6"},
            {"cv.runs", Kind::Size, "10"},
            {"grid.budget", Kind::Size, "64"},
            {"ablate.factors", Kind::List, "10,30,50,60"},
            {"ablate.kernels", Kind::List, "64,16,8,4"},
        };
    }();
    return table;
}

const KeySpec* find_key(std::string_view key) {
    for (const auto& k : key_table()) {
        if (key == k.key) return &k;
    }
    return nullptr;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_int(std::string_view text, T& out) {
    if (text.empty() || text.front() == '-' || text.front() == '+') return false;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && p == text.data() + text.size();
}

std::string normalize(const KeySpec& spec, std::string_view raw) {
    const std::string key = spec.key;
    const std::string_view v = trim(raw);
    switch (spec.kind) {
        case Kind::SizeOrPreset:
            if (v == "preset") return "preset";
            [[fallthrough]];
        case Kind::Size: {
            std::size_t n = 0;
            if (!parse_int(v, n)) throw ConfigError(key + ": expected a non-negative integer, got '" + std::string(v) + "'");
            return std::to_string(n);
        }
        case Kind::U64: {
            std::uint64_t n = 0;
            if (!parse_int(v, n)) throw ConfigError(key + ": expected an unsigned 64-bit integer, got '" + std::string(v) + "'");
            return std::to_string(n);
        }
        case Kind::Double: {
            double d = 0.0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
            if (v.empty() || ec != std::errc() || p != v.data() + v.size() || !std::isfinite(d)) {
                throw ConfigError(key + ": expected a finite number, got '" + std::string(v) + "'");
            }
            return format_double(d);
        }
        case Kind::Bool:
            if (v == "true" || v == "1") return "true";
            if (v == "false" || v == "0") return "false";
            throw ConfigError(key + ": expected true or false, got '" + std::string(v) + "'");
        case Kind::List: {
            std::string out;
            std::string_view rest = v;
            while (true) {
                const auto comma = rest.find(',');
                const auto item = trim(rest.substr(0, comma));
                std::size_t n = 0;
                if (!parse_int(item, n)) {
                    throw ConfigError(key + ": expected a comma-separated list of integers, got '" + std::string(v) + "'");
                }
                if (!out.empty()) out += ',';
                out += std::to_string(n);
                if (comma == std::string_view::npos) break;
                rest = rest.substr(comma + 1);
            }
            return out;
        }
        case Kind::Text: break;
    }
    return std::string(v);
}

[[noreturn]] void rethrow_as_config(const std::string& key, const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
}

std::optional<eval::Procedure> override_of(const Settings& s, const std::string& key) {
    const auto& v = s.get(key);
    if (v == "none" || v.empty()) return std::nullopt;
    try {
        return procedure_of(v);
    } catch (const ValidationError& e) {
        rethrow_as_config(key, e);
    }
}

}  // namespace

Settings::Settings() {
    for (const auto& k : key_table()) values_[k.key] = k.fallback;
}

void Settings::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            assign(t);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void Settings::set(std::string_view key, std::string_view value) {
    const auto* spec = find_key(key);
    if (!spec) throw ConfigError("unknown config key '" + std::string(key) + "'");
    values_[spec->key] = normalize(*spec, value);
}

void Settings::assign(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(text) + "'");
    set(trim(text.substr(0, eq)), text.substr(eq + 1));
}

const std::string& Settings::get(std::string_view key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    return it->second;
}

std::size_t Settings::get_size(std::string_view key) const { return std::stoull(get(key)); }
std::uint64_t Settings::get_u64(std::string_view key) const { return std::stoull(get(key)); }
double Settings::get_double(std::string_view key) const { return std::stod(get(key)); }
bool Settings::get_bool(std::string_view key) const { return get(key) == "true"; }

std::vector<std::size_t> Settings::get_list(std::string_view key) const {
    std::vector<std::size_t> out;
    std::string_view rest = get(key);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        out.push_back(std::stoull(std::string(rest.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

std::string Settings::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        if (k == "jobs") continue;
        out += k + "=" + v + "\n";
    }
    return out;
}

std::string Settings::fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

synth::SynthConfig synth_config(const Settings& s) {
    const auto& preset = s.get("synth.preset");
    synth::SynthConfig c;
    if (preset == "ingaas") {
        c = synth::SynthConfig::ingaas();
    } else if (preset == "ftraman") {
        c = synth::SynthConfig::ftraman();
    } else {
        throw ConfigError("synth.preset: expected ingaas or ftraman, got '" + preset + "'");
    }
    if (s.get("synth.n_samples") != "preset") c.n_samples = s.get_size("synth.n_samples");
    if (s.get("synth.n_features") != "preset") c.n_features = s.get_size("synth.n_features");
    c.noise_std = s.get_double("synth.noise_std");
    c.artefacts = {s.get_double("synth.artefact_offset"), s.get_double("synth.artefact_mult"),
                   s.get_double("synth.artefact_slope")};
    c.balance_component = s.get_bool("synth.balance");
    c.seed = s.get_u64("base_seed");
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

Dataset load_data(const Settings& s) {
    const auto& x = s.get("data.x");
    const auto& y = s.get("data.y");
    if (x.empty() != y.empty()) throw ConfigError("data.x and data.y must be given together");
    if (x.empty()) return synth::generate(synth_config(s)).data;
    return load_dataset(x, y);
}

eval::Procedure procedure_of(std::string_view text) {
    int id = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
    if (ec == std::errc() && p == text.data() + text.size()) {
        return eval::Procedure::from_pipeline(preprocess::design_pipeline(id));
    }
    return eval::Procedure::parse(text);
}

eval::Procedure preprocessing_of(std::string_view text) {
    int id = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
    if (ec == std::errc() && p == text.data() + text.size()) {
        return eval::Procedure::from_pipeline(preprocess::design_pipeline(id), false);
    }
    auto proc = eval::Procedure::parse(text);
    for (const auto& st : proc.stages) {
        if (st.augment) throw ValidationError("preprocessing cannot include DA");
    }
    return proc;
}

eval::CvConfig cv_config(const Settings& s) {
    eval::CvConfig c;
    try {
        c.procedure = procedure_of(s.get("pipeline"));
    } catch (const ValidationError& e) {
        rethrow_as_config("pipeline", e);
    }
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        c.target_overrides[t] = override_of(s, std::string("override.") + kTargetNames[t]);
    }
    c.augment.factor = s.get_size("augment.factor");
    c.augment.offset_scale = s.get_double("augment.offset_scale");
    c.augment.mult_scale = s.get_double("augment.mult_scale");
    c.augment.slope_scale = s.get_double("augment.slope_scale");
    c.augment.seed = s.get_u64("augment.seed");
    c.train.batch_size = s.get_size("train.batch_size");
    c.train.lr = s.get_double("train.lr");
    c.train.max_epochs = s.get_size("train.max_epochs");
    c.train.patience = s.get_size("train.patience");
    c.train.weight_decay = s.get_double("train.weight_decay");
    c.train.dropout = s.get_double("train.dropout");
    c.train.huber_delta = s.get_double("train.huber_delta");
    c.train.val_fraction = s.get_double("train.val_fraction");
    c.train.seed = s.get_u64("train.seed");
    c.model.kernel = s.get_size("model.kernel");
    c.model.filters = s.get_size("model.filters");
    if (const auto& path = s.get("model.spec"); !path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("model.spec: cannot read " + path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        try {
            c.model.custom = nn::model_spec_from_json(text);
        } catch (const std::exception& e) {
            rethrow_as_config("model.spec", e);
        }
    }
    c.k = s.get_size("cv.k");
    c.runs = s.get_size("cv.runs");
    c.base_seed = s.get_u64("base_seed");
    c.jobs = s.get_size("jobs");
    try {
        c.train.validate();
        c.augment.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

std::size_t resolve_jobs(long flag) {
    if (flag > 0) return static_cast<std::size_t>(flag);
    if (const char* env = std::getenv("SPECTRAL_FORGE_JOBS"); env && *env) {
        std::size_t n = 0;
        if (!parse_int(std::string_view(env), n) || n < 1) {
            throw ConfigError(std::string("SPECTRAL_FORGE_JOBS: expected a positive integer, got '") + env + "'");
        }
        return n;
    }
    return 1;
}

}  // namespace spectral_forge::cli
