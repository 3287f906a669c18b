#include "spectral_forge/preprocess.hpp"
#include "spectral_forge/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace spectral_forge;
using namespace spectral_forge::preprocess;

namespace {

SpectralMatrix matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(rows * cols);
    for (auto& e : v) e = rng.normal(5.0, 2.0);
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < rows; ++r) ids.push_back("r" + std::to_string(r));
    return SpectralMatrix(WavenumberAxis::linspace(2000.0, 1000.0, cols), v, ids);
}

std::vector<double> row_of(const SpectralMatrix& m, std::size_t r) {
    auto s = m.row(r);
    return {s.begin(), s.end()};
}

// Value of the `order`-th derivative at offset t of the degree-p least-squares
// polynomial through y over offsets -h..h.
double window_fit(const std::vector<double>& y, int p, int order, double t) {
    const int h = static_cast<int>(y.size()) / 2;
    std::vector<std::vector<double>> x;
    for (int j = -h; j <= h; ++j) {
        std::vector<double> r;
        for (int e = 0; e <= p; ++e) r.push_back(std::pow(j, e));
        x.push_back(r);
    }
    auto c = oracle::lstsq(x, y);
    double d = 0.0;
    for (int e = order; e <= p; ++e) {
        double f = 1.0;
        for (int k = 0; k < order; ++k) f *= e - k;
        d += c[e] * f * std::pow(t, e - order);
    }
    return d;
}

}  // namespace

TEST_CASE("linear baseline") {
    CHECK(linear_baseline(std::vector<double>{0, 1, 0}) == std::vector<double>{0, 1, 0});
    auto r = linear_baseline(std::vector<double>{2, 5, 4, 6});
    CHECK(r[0] == doctest::Approx(0.0));
    CHECK(r[1] == doctest::Approx(5.0 / 3.0));
    CHECK(r[2] == doctest::Approx(-2.0 / 3.0));
    CHECK(r[3] == doctest::Approx(0.0));
    std::vector<double> line;
    for (int i = 0; i < 9; ++i) line.push_back(3.5 - 0.25 * i);
    for (double v : linear_baseline(line)) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("linear baseline is idempotent") {
    auto m = matrix(5, 50, 1);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto once = linear_baseline(m.row(r));
        auto twice = linear_baseline(once);
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::fabs(once[i] - twice[i]) <= 1e-12);
    }
}

TEST_CASE("snv") {
    auto r = snv(std::vector<double>{1, 2, 3});
    CHECK(r[0] == doctest::Approx(-1.0));
    CHECK(r[1] == doctest::Approx(0.0));
    CHECK(r[2] == doctest::Approx(1.0));
    CHECK_THROWS_AS(snv(std::vector<double>{5, 5, 5}), ValidationError);
}

TEST_CASE("snv is affine invariant and standardizes") {
    auto m = matrix(6, 80, 2);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto x = row_of(m, r);
        auto base = snv(x);
        CHECK(std::fabs(oracle::mean(base)) <= 1e-10);
        CHECK(std::fabs(oracle::sample_std(base) - 1.0) <= 1e-10);
        std::vector<double> shifted(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = 3.7 * x[i] - 12.0;
        auto again = snv(shifted);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(base[i] - again[i]) <= 1e-10);
    }
}

TEST_CASE("savgol reproduces polynomials") {
    std::vector<double> sq;
    for (int i = 0; i < 11; ++i) sq.push_back(static_cast<double>(i * i));
    auto d2 = SavgolKernel(2, 5, 3).apply(sq);
    for (std::size_t i = 2; i < 9; ++i) CHECK(std::fabs(d2[i] - 2.0) < 1e-12);

    std::vector<double> lin;
    for (int i = 0; i < 20; ++i) lin.push_back(3.0 * i + 1.0);
    for (int w : {5, 9, 13}) {
        for (double v : SavgolKernel(1, w, 2).apply(lin)) CHECK(std::fabs(v - 3.0) < 1e-10);
    }
}

TEST_CASE("savgol matches window least squares") {
    Rng rng(4);
    std::vector<double> row(30);
    for (auto& v : row) v = rng.normal();
    const int w = 5, h = 2;
    auto got = SavgolKernel(1, w, 2).apply(row);
    const int n = static_cast<int>(row.size());
    for (int i = 0; i < n; ++i) {
        // Edge points use the first or last full window, evaluated off-centre.
        const int c = std::clamp(i, h, n - 1 - h);
        std::vector<double> win(row.begin() + c - h, row.begin() + c + h + 1);
        CHECK(got[i] == doctest::Approx(window_fit(win, 2, 1, i - c)).epsilon(1e-9));
    }
}

TEST_CASE("savgol polynomial exactness over the design grid") {
    const std::size_t n = 427;
    for (int order : {1, 2}) {
        const std::vector<int> windows =
            order == 1 ? std::vector<int>{5, 9, 13, 17, 21, 25} : std::vector<int>{13, 15, 17, 19, 21, 23, 25, 31};
        const int p = default_polyorder(order);
        for (int w : windows) {
            // Cubic on a scaled axis keeps magnitudes moderate.
            std::vector<double> f(n);
            auto poly = [&](double x) {
                x /= 100.0;
                return p == 2 ? 1.0 + 2.0 * x - 0.5 * x * x : 1.0 + 2.0 * x - 0.5 * x * x + 0.3 * x * x * x;
            };
            auto deriv = [&](double x) {
                x /= 100.0;
                if (order == 1) return (2.0 - x + (p == 3 ? 0.9 * x * x : 0.0)) / 100.0;
                return (-1.0 + (p == 3 ? 1.8 * x : 0.0)) / 1e4;
            };
            for (std::size_t i = 0; i < n; ++i) f[i] = poly(static_cast<double>(i));
            auto d = SavgolKernel(order, w, p).apply(f);
            for (std::size_t i = w / 2; i + w / 2 < n; ++i) CHECK(std::fabs(d[i] - deriv(i)) <= 1e-8);
        }
    }
}

TEST_CASE("savgol rejects bad parameters") {
    CHECK_THROWS_AS(SavgolKernel(1, 4, 2), ValidationError);
    CHECK_THROWS_AS(SavgolKernel(3, 5, 3), ValidationError);
    CHECK_THROWS_AS(SavgolKernel(2, 3, 3), ValidationError);
    CHECK_THROWS_AS(SavgolKernel(1, 31, 2).apply(std::vector<double>(20, 1.0)), ValidationError);
}

TEST_CASE("global scaler") {
    SpectralMatrix train(WavenumberAxis::linspace(3, 1, 3), {2, 6, 10, 4, 5, 6}, {"a", "b"});
    auto s = fit_global_scaler(train);
    CHECK(s.apply(2) == 0.0);
    CHECK(s.apply(10) == 1.0);
    CHECK(s.apply(6) == 0.5);
    CHECK(s.apply(12) == 1.25);
}

TEST_CASE("design matrix matches fixture") {
    auto rows = build_design_matrix();
    REQUIRE(rows.size() == 64);
    std::ifstream in(SF_FIXTURE_DIR "/design_matrix.csv", std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(design_matrix_csv(rows) == ss.str());

    CHECK(design_pipeline(1).empty());
    CHECK(design_pipeline(13).steps == std::vector<PreprocStep>{PreprocStep::linear_baseline(), PreprocStep::snv(),
                                                                PreprocStep::derivative(2, 19)});
    CHECK(design_pipeline(64).steps == std::vector<PreprocStep>{PreprocStep::global_scale()});
    CHECK(design_pipeline(18).to_string() == "SNV");
}

TEST_CASE("pipeline text round trip") {
    for (const auto& p : build_design_matrix()) CHECK(Pipeline::parse(p.to_string(), p.id) == p);
    CHECK_THROWS_AS(Pipeline::parse("SNV|LB"), ValidationError);
    CHECK_THROWS_AS(Pipeline::parse("XYZ"), ValidationError);
}

TEST_CASE("apply pipeline") {
    auto train = matrix(4, 40, 5);
    auto eval = matrix(3, 40, 6);
    SUBCASE("raw is identity") {
        auto out = apply_pipeline(design_pipeline(1), train, eval);
        CHECK(out.train == train);
        CHECK(out.eval == eval);
        CHECK_FALSE(out.scaler);
    }
    SUBCASE("SNV rows standardized") {
        auto out = apply_pipeline(design_pipeline(18), train, eval);
        for (std::size_t r = 0; r < out.eval.rows(); ++r) CHECK(std::fabs(oracle::mean(row_of(out.eval, r))) < 1e-10);
    }
    SUBCASE("SNV then GS equals sequential oracle") {
        auto small = train.select(std::vector<std::size_t>{0, 1});
        auto out = apply_pipeline(Pipeline::parse("SNV|GS"), small, eval);
        std::vector<std::vector<double>> t;
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t r = 0; r < 2; ++r) {
            t.push_back(snv(small.row(r)));
            for (double v : t.back()) lo = std::min(lo, v), hi = std::max(hi, v);
        }
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t i = 0; i < 40; ++i) CHECK(out.train(r, i) == doctest::Approx((t[r][i] - lo) / (hi - lo)));
        for (std::size_t r = 0; r < eval.rows(); ++r) {
            auto e = snv(eval.row(r));
            for (std::size_t i = 0; i < 40; ++i) CHECK(out.eval(r, i) == doctest::Approx((e[i] - lo) / (hi - lo)));
        }
    }
}
