#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "fedtdd/csv.hpp"
#include "fedtdd/metrics.hpp"

using namespace fedtdd;

namespace {

std::vector<Window> random_windows(Rng& rng, std::size_t n, std::size_t rows,
                                   std::size_t cols, double shift = 0.0) {
    std::vector<Window> out;
    for (std::size_t i = 0; i < n; ++i) {
        Window w(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                w(r, c) = shift + 0.4 * rng.normal() +
                          0.5 * std::sin(0.7 * static_cast<double>(r) +
                                         static_cast<double>(c));
        out.push_back(w);
    }
    return out;
}

// Independent dense Pearson over pooled rows.
double pearson(const std::vector<Window>& ws, std::size_t i, std::size_t j) {
    double mi = 0.0, mj = 0.0;
    std::size_t n = 0;
    for (const auto& w : ws)
        for (std::size_t r = 0; r < w.rows(); ++r) {
            mi += w(r, i);
            mj += w(r, j);
            ++n;
        }
    mi /= static_cast<double>(n);
    mj /= static_cast<double>(n);
    double sij = 0.0, sii = 0.0, sjj = 0.0;
    for (const auto& w : ws)
        for (std::size_t r = 0; r < w.rows(); ++r) {
            sij += (w(r, i) - mi) * (w(r, j) - mj);
            sii += (w(r, i) - mi) * (w(r, i) - mi);
            sjj += (w(r, j) - mj) * (w(r, j) - mj);
        }
    return sij / std::sqrt(sii * sjj);
}

// Gaussian elimination with partial pivoting; the independent solver for the
// least-squares oracle.
std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) s -= a(ri, c) * x[c];
        x[ri] = s / a(ri, ri);
    }
    return x;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("window embeddings match hand-computed statistics") {
    Window w(8, 2);
    for (std::size_t r = 0; r < 8; ++r) {
        w(r, 0) = std::sin(2.0 * std::numbers::pi * static_cast<double>(r) / 8.0) + 2.0;
        w(r, 1) = 3.25;  // constant channel
    }
    const auto e = window_embedding(w);
    REQUIRE(e.size() == 8);

    double mean = 0.0;
    for (std::size_t r = 0; r < 8; ++r) mean += w(r, 0);
    mean /= 8.0;
    double var = 0.0, lag = 0.0;
    for (std::size_t r = 0; r < 8; ++r) var += (w(r, 0) - mean) * (w(r, 0) - mean);
    var /= 8.0;
    for (std::size_t r = 0; r + 1 < 8; ++r) lag += (w(r, 0) - mean) * (w(r + 1, 0) - mean);
    lag /= var * 8.0;
    // Peak non-constant spectrum magnitude via the naive transform.
    double peak = 0.0;
    for (std::size_t k = 1; k <= 4; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = 0; j < 8; ++j) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * j) / 8.0;
            acc += w(j, 0) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        peak = std::max(peak, std::abs(acc));
    }

    REQUIRE(e[0] == Catch::Approx(mean).margin(1e-12));
    REQUIRE(e[1] == Catch::Approx(std::sqrt(var)).margin(1e-12));
    REQUIRE(e[2] == Catch::Approx(lag).margin(1e-12));
    REQUIRE(e[3] == Catch::Approx(peak).margin(1e-9));

    REQUIRE(e[4] == Catch::Approx(3.25).margin(1e-12));
    REQUIRE(e[5] == 0.0);  // constant: no spread
    REQUIRE(e[6] == 0.0);  // constant: autocorrelation by convention
}

TEST_CASE("context distance vanishes when synthetic equals real") {
    Rng rng(81);
    const auto real = random_windows(rng, 24, 8, 2);
    EmbeddingConfig cfg{5, 8};
    REQUIRE(context_fid(real, real, cfg) < 1e-6);
}

TEST_CASE("context distance reacts to a mean shift and is deterministic") {
    Rng rng(82);
    const auto real = random_windows(rng, 24, 8, 2);
    auto shifted = real;
    for (auto& w : shifted)
        for (std::size_t r = 0; r < w.rows(); ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) += 2.0;
    EmbeddingConfig cfg{5, 8};
    const double d = context_fid(real, shifted, cfg);
    REQUIRE(d > 1.0);
    REQUIRE(context_fid(real, shifted, cfg) == d);

    EmbeddingConfig other{6, 8};
    REQUIRE(context_fid(real, shifted, other) != d);
}

TEST_CASE("context distance enforces its sample-size precondition") {
    Rng rng(83);
    const auto real = random_windows(rng, 24, 8, 2);
    const auto few = random_windows(rng, 5, 8, 2);
    EmbeddingConfig cfg{5, 8};
    REQUIRE_THROWS_AS(context_fid(real, few, cfg), Error);
}

TEST_CASE("correlational score matches a dense recomputation") {
    Rng rng(84);
    const auto real = random_windows(rng, 10, 6, 3);
    const auto synth = random_windows(rng, 12, 6, 3);
    double expect = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) expect += std::abs(pearson(real, i, j) - pearson(synth, i, j));
    expect /= 6.0;
    REQUIRE(correlational_score(real, synth) == Catch::Approx(expect).margin(1e-12));
    REQUIRE(correlational_score(real, real) == 0.0);
}

TEST_CASE("correlational score hits the definitional extremes") {
    // Real: channel 1 = channel 0. Synthetic: channel 1 = -channel 0.
    std::vector<Window> real, synth;
    Rng rng(85);
    for (int i = 0; i < 6; ++i) {
        Window a(5, 2), b(5, 2);
        for (std::size_t r = 0; r < 5; ++r) {
            const double v = rng.normal();
            a(r, 0) = v;
            a(r, 1) = v;
            const double u = rng.normal();
            b(r, 0) = u;
            b(r, 1) = -u;
        }
        real.push_back(a);
        synth.push_back(b);
    }
    REQUIRE(correlational_score(real, synth) == Catch::Approx(2.0).margin(1e-12));

    // A constant channel correlates zero by convention.
    for (auto& w : synth)
        for (std::size_t r = 0; r < 5; ++r) w(r, 1) = 1.0;
    REQUIRE(correlational_score(real, synth) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("discriminative score is small on identically distributed sides") {
    Rng rng(86);
    const auto real = random_windows(rng, 40, 8, 2);
    const auto synth = random_windows(rng, 40, 8, 2);
    const double d = discriminative_score(real, synth, 7);
    REQUIRE(d >= 0.0);
    REQUIRE(d <= 0.5);
    REQUIRE(d < 0.1);
    REQUIRE(discriminative_score(real, synth, 7) == d);
}

TEST_CASE("discriminative score saturates on separable sides") {
    Rng rng(87);
    const auto real = random_windows(rng, 40, 8, 2);
    const auto synth = random_windows(rng, 40, 8, 2, 5.0);
    REQUIRE(discriminative_score(real, synth, 8) > 0.4);
    REQUIRE_THROWS_AS(discriminative_score(random_windows(rng, 5, 8, 2), synth, 9), Error);
}

TEST_CASE("split-halves of the same pool are indistinguishable") {
    Rng rng(88);
    const auto pool = random_windows(rng, 80, 8, 2);
    const std::vector<Window> a(pool.begin(), pool.begin() + 40);
    const std::vector<Window> b(pool.begin() + 40, pool.end());
    REQUIRE(discriminative_score(a, b, 10) < 0.1);
}

TEST_CASE("predictive score matches an independent least-squares oracle") {
    Rng rng(89);
    const auto real = random_windows(rng, 24, 8, 2);
    const auto synth = random_windows(rng, 26, 8, 2);
    const double got = predictive_score(real, synth, 11);

    const std::size_t rows = 8, cols = 2, order = 3;
    const std::size_t f_dim = order * cols + 1;
    auto features = [&](const Window& w, std::size_t t, std::vector<double>& f) {
        std::size_t p = 0;
        for (std::size_t lag = 1; lag <= order; ++lag)
            for (std::size_t c = 0; c < cols; ++c) f[p++] = w(t - lag, c);
        f[p] = 1.0;
    };
    Matrix ata(f_dim, f_dim, 0.0);
    std::vector<std::vector<double>> aty(cols, std::vector<double>(f_dim, 0.0));
    std::vector<double> f(f_dim);
    for (const auto& w : synth)
        for (std::size_t t = order; t < rows; ++t) {
            features(w, t, f);
            for (std::size_t i = 0; i < f_dim; ++i) {
                for (std::size_t j = 0; j < f_dim; ++j) ata(i, j) += f[i] * f[j];
                for (std::size_t c = 0; c < cols; ++c) aty[c][i] += f[i] * w(t, c);
            }
        }
    std::vector<std::vector<double>> coef;
    for (std::size_t c = 0; c < cols; ++c) coef.push_back(solve_dense(ata, aty[c]));
    double abs_err = 0.0;
    std::size_t n = 0;
    for (const auto& w : real)
        for (std::size_t t = order; t < rows; ++t) {
            features(w, t, f);
            for (std::size_t c = 0; c < cols; ++c) {
                double pred = 0.0;
                for (std::size_t i = 0; i < f_dim; ++i) pred += f[i] * coef[c][i];
                abs_err += std::abs(pred - w(t, c));
                ++n;
            }
        }
    const double oracle = abs_err / static_cast<double>(n);
    REQUIRE(std::abs(got - oracle) <= 0.05 * oracle);
}

TEST_CASE("a noiseless autoregression is predicted almost exactly") {
    auto ar_windows = [](std::uint64_t seed, std::size_t n) {
        Rng rng(seed);
        std::vector<Window> out;
        for (std::size_t i = 0; i < n; ++i) {
            Window w(8, 2);
            w(0, 0) = rng.uniform(0.5, 1.5);
            w(0, 1) = rng.uniform(-1.5, -0.5);
            for (std::size_t r = 1; r < 8; ++r) {
                w(r, 0) = 0.8 * w(r - 1, 0);
                w(r, 1) = 0.8 * w(r - 1, 1);
            }
            out.push_back(w);
        }
        return out;
    };
    const auto real = ar_windows(90, 24);
    const auto synth = ar_windows(91, 24);
    REQUIRE(predictive_score(real, synth, 12) < 1e-6);
}

TEST_CASE("compute_metrics is a deterministic bundle of the four scores") {
    Rng rng(92);
    const auto real = random_windows(rng, 30, 8, 2);
    const auto synth = random_windows(rng, 30, 8, 2, 0.3);
    EmbeddingConfig embed{13, 6};
    const MetricValues a = compute_metrics(real, synth, embed, 14);
    const MetricValues b = compute_metrics(real, synth, embed, 14);
    for (std::size_t m = 0; m < metric_names().size(); ++m) {
        REQUIRE(a.by_index(m) == b.by_index(m));
        REQUIRE(std::isfinite(a.by_index(m)));
    }
    REQUIRE(a.context_fid == context_fid(real, synth, embed));
    REQUIRE(a.correlational == correlational_score(real, synth));
}

TEST_CASE("metric report CSV carries per-trial rows and averages") {
    MetricsReport report;
    report.init(2, 2, 3);
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t t = 0; t < 2; ++t)
                report.values[m][c][t] = static_cast<double>(10 * m + 2 * c + t);
    REQUIRE(report.all_finite());
    REQUIRE(report.client_mean(0, 1) == Catch::Approx(2.5));
    REQUIRE(report.overall_mean(0) == Catch::Approx(1.5));

    const std::string path = temp_path("fedtdd_metrics.csv");
    write_metrics_csv(path, report);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "metric,client_id,trial,value");
    std::size_t rows = 0, avg_rows = 0;
    while (std::getline(in, line)) {
        const auto fields = split_csv_line(line);
        REQUIRE(fields.size() == 4);
        ++rows;
        if (fields[2] == "avg") ++avg_rows;
    }
    // 4 metrics * (2 clients * 2 trials + 2 client averages + 1 overall).
    REQUIRE(rows == 4 * (4 + 2 + 1));
    REQUIRE(avg_rows == 4 * 3);
    std::filesystem::remove(path);
}
