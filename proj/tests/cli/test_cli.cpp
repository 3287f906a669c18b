#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kWork = fs::path(SF_CLI_WORK);

// Exit status of the CLI run with `args`; stdout goes to `stdout_file` if set.
int run(const std::string& args, const fs::path& stdout_file = {}) {
    std::string cmd = "\"" SF_CLI "\" " + args;
    cmd += stdout_file.empty() ? " > /dev/null" : " > \"" + stdout_file.string() + "\"";
    cmd += " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string out_dir(const std::string& name) {
    const auto d = kWork / name;
    fs::remove_all(d);
    return "--out \"" + d.string() + "\"";
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

// Small, fast experiment settings.
const std::string kQuick =
    " --set synth.n_features=128 --set train.max_epochs=2 --set augment.factor=3 ";

}  // namespace

TEST_CASE("generate writes the preset shape and a manifest") {
    REQUIRE(run(out_dir("gen") + " generate --preset ingaas") == 0);
    const auto x = read(kWork / "gen" / "X.csv");
    CHECK(count_lines(x) == 40);
    const auto header = x.substr(0, x.find('\n'));
    CHECK(std::count(header.begin(), header.end(), ',') == 427);
    CHECK(count_lines(read(kWork / "gen" / "Y.csv")) == 40);
    const auto manifest = json::parse(read(kWork / "gen" / "manifest.json"));
    CHECK(manifest.at("schema") == 1);
    CHECK(manifest.at("fingerprint").get<std::string>().size() == 16);
    CHECK(manifest.at("outputs").contains("truth.json"));
    CHECK(manifest.at("seeds").contains("base_seed"));
}

TEST_CASE("reruns are byte-identical") {
    REQUIRE(run(out_dir("gen_a") + " --seed 5 generate") == 0);
    REQUIRE(run(out_dir("gen_b") + " --seed 5 generate") == 0);
    for (const char* f : {"X.csv", "Y.csv", "truth.json", "manifest.json"})
        CHECK(read(kWork / "gen_a" / f) == read(kWork / "gen_b" / f));
    REQUIRE(run(out_dir("gen_c") + " --seed 6 generate") == 0);
    CHECK(read(kWork / "gen_a" / "X.csv") != read(kWork / "gen_c" / "X.csv"));
}

TEST_CASE("preprocess 18 is SNV") {
    REQUIRE(run(out_dir("gen_p") + " generate") == 0);
    const auto x = (kWork / "gen_p" / "X.csv").string();
    REQUIRE(run(out_dir("pre") + " preprocess --pipeline 18 --x \"" + x + "\"") == 0);
    std::istringstream in(read(kWork / "pre" / "X.csv"));
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');  // sample id
        double sum = 0.0;
        std::size_t n = 0;
        while (std::getline(cells, cell, ',')) {
            sum += std::stod(cell);
            ++n;
        }
        CHECK(n == 427);
        CHECK(std::fabs(sum / n) < 1e-9);
        ++rows;
    }
    CHECK(rows == 39);
    CHECK(json::parse(read(kWork / "pre" / "manifest.json")).at("procedure") == "SNV");
}

TEST_CASE("augment multiplies rows by the factor") {
    REQUIRE(run(out_dir("gen32") + " --set synth.n_samples=32 generate") == 0);
    const auto d = kWork / "gen32";
    REQUIRE(run(out_dir("aug") + " augment --factor 50 --x \"" + (d / "X.csv").string() + "\" --y \"" +
                (d / "Y.csv").string() + "\"") == 0);
    CHECK(count_lines(read(kWork / "aug" / "X.csv")) == 1601);
    CHECK(count_lines(read(kWork / "aug" / "Y.csv")) == 1601);
}

TEST_CASE("cv records one score per fold") {
    REQUIRE(run(out_dir("cv") + kQuick + "cv --runs 1 --k 6") == 0);
    const auto r = json::parse(read(kWork / "cv" / "results.json"));
    CHECK(r.at("schema") == 1);
    CHECK(r.at("kind") == "cv");
    CHECK(r.at("folds").size() == 6);
    CHECK(r.at("runs").size() == 1);
    const auto manifest = json::parse(read(kWork / "cv" / "manifest.json"));
    CHECK(manifest.at("outputs").contains("results.json"));
    CHECK_FALSE(manifest.at("config").contains("jobs"));
}

TEST_CASE("ablate order has six arms and report renders it") {
    REQUIRE(run(out_dir("order") + kQuick + "ablate order --runs 1 --k 3") == 0);
    const auto r = json::parse(read(kWork / "order" / "results.json"));
    REQUIRE(r.at("arms").size() == 6);
    std::vector<std::string> labels;
    for (const auto& a : r.at("arms")) labels.push_back(a.at("label"));
    CHECK(labels == std::vector<std::string>{"SNV+DA+GS", "SNV+GS", "GS", "DA+SNV", "DA+GS", "DA"});
    CHECK(run("report \"" + (kWork / "order").string() + "\"", kWork / "order.md") == 0);
    CHECK(read(kWork / "order.md").find("DA+SNV") != std::string::npos);
}

TEST_CASE("report over a factor ablation has four rows") {
    REQUIRE(run(out_dir("factor") + kQuick + "ablate factor --runs 1 --k 3 --pipeline SNV+DA") == 0);
    const auto md_path = kWork / "factor.md";
    REQUIRE(run("report \"" + (kWork / "factor").string() + "\" --report-out \"" + (kWork / "factor_report").string() +
                "\"",
                md_path) == 0);
    const auto md = read(md_path);
    std::istringstream in(md);
    std::string line;
    std::size_t rows = 0;
    bool past_rule = false;
    while (std::getline(in, line)) {
        if (line.rfind("|---", 0) == 0) past_rule = true;
        else if (past_rule && line.rfind("| ", 0) == 0) ++rows;
    }
    CHECK(rows == 4);
    for (const char* f : {"10", "30", "50", "60"}) CHECK(md.find(std::string("| ") + f) != std::string::npos);
    CHECK(read(kWork / "factor_report" / "report.md") == md);
}

TEST_CASE("exit codes") {
    CHECK(run(out_dir("bad") + " --set no.such.key=1 generate") == 2);
    CHECK(run(out_dir("bad") + " --set cv.k=1 cv") == 2);
    CHECK(run(out_dir("bad") + " preprocess --pipeline 99") == 2);
    CHECK(run(out_dir("bad") + " preprocess --pipeline SNV+DA") == 2);
    CHECK(run(out_dir("bad") + " frobnicate") == 2);
    CHECK(run("report \"" + kWork.string() + "\"") == 2);
    CHECK(run(out_dir("bad") + " preprocess --pipeline 18 --x \"" + (kWork / "missing.csv").string() + "\"") == 1);
}

TEST_CASE("jobs setting from the environment does not change results") {
    REQUIRE(run(out_dir("env1") + kQuick + "cv --runs 1 --k 3") == 0);
    REQUIRE(std::system(("SPECTRAL_FORGE_JOBS=3 \"" SF_CLI "\" " + out_dir("env3") + kQuick +
                         "cv --runs 1 --k 3 > /dev/null 2>&1")
                            .c_str()) == 0);
    CHECK(read(kWork / "env1" / "results.json") == read(kWork / "env3" / "results.json"));
    CHECK(read(kWork / "env1" / "manifest.json") == read(kWork / "env3" / "manifest.json"));
}
