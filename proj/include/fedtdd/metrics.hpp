#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedtdd/csv.hpp"
#include "fedtdd/error.hpp"
#include "fedtdd/fft.hpp"
#include "fedtdd/matrix.hpp"
#include "fedtdd/rng.hpp"
#include "fedtdd/stats.hpp"

namespace fedtdd {

struct EmbeddingConfig {
    std::uint64_t seed = 0;
    std::size_t dim = 16;

    void validate() const { require(dim >= 2, "EmbeddingConfig: dim must be >= 2"); }
};

// Fixed statistical summary of a window: per channel, its mean, population
// standard deviation, lag-1 autocorrelation and peak non-DC spectrum
// magnitude. 4C numbers, sensitive to level, scale, smoothness and dominant
// frequency.
inline std::vector<double> window_embedding(const Window& w) {
    const std::size_t rows = w.rows();
    const std::size_t cols = w.cols();
    require(rows >= 1, "window_embedding: empty window");
    std::vector<double> out;
    out.reserve(4 * cols);
    for (std::size_t c = 0; c < cols; ++c) {
        const std::vector<double> x = w.column(c);
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(rows);
        double var = 0.0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(rows);
        double lag_num = 0.0;
        for (std::size_t t = 0; t + 1 < rows; ++t)
            lag_num += (x[t] - mean) * (x[t + 1] - mean);
        const double lag_den = var * static_cast<double>(rows);
        const double lag1 = lag_den > 1e-12 ? lag_num / lag_den : 0.0;
        const Spectrum sp = rfft(x);
        double peak = 0.0;
        for (std::size_t k = 1; k < sp.coefficients.size(); ++k)
            peak = std::max(peak, std::abs(sp.coefficients[k]));
        out.push_back(mean);
        out.push_back(std::sqrt(var));
        out.push_back(lag1);
        out.push_back(peak);
    }
    return out;
}

inline std::vector<std::vector<double>> embed_windows(const std::vector<Window>& ws) {
    std::vector<std::vector<double>> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(window_embedding(w));
    return out;
}

namespace detail {

inline void check_shapes(const std::vector<Window>& real, const std::vector<Window>& synth) {
    require(!real.empty() && !synth.empty(), "metrics: empty window list");
    const std::size_t rows = real.front().rows();
    const std::size_t cols = real.front().cols();
    for (const auto& w : real)
        require(w.rows() == rows && w.cols() == cols, "metrics: inconsistent window shapes");
    for (const auto& w : synth)
        require(w.rows() == rows && w.cols() == cols,
                "metrics: real/synthetic window shape mismatch");
}

}  // namespace detail

// Frechet distance between Gaussian fits of randomly projected embeddings.
inline double context_fid(const std::vector<Window>& real, const std::vector<Window>& synth,
                          const EmbeddingConfig& cfg) {
    cfg.validate();
    detail::check_shapes(real, synth);
    if (real.size() < cfg.dim + 2 || synth.size() < cfg.dim + 2)
        throw Error("context_fid: too few windows (need >= " + std::to_string(cfg.dim + 2) +
                    " per side)");
    const auto e_real = embed_windows(real);
    const auto e_synth = embed_windows(synth);
    const std::size_t in_dim = e_real.front().size();

    Rng rng(derive_seed(cfg.seed, "embed-projection"));
    Matrix proj(cfg.dim, in_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (std::size_t i = 0; i < cfg.dim; ++i)
        for (std::size_t j = 0; j < in_dim; ++j) proj(i, j) = scale * rng.normal();

    auto project_all = [&](const std::vector<std::vector<double>>& es) {
        std::vector<std::vector<double>> out;
        out.reserve(es.size());
        for (const auto& e : es) {
            std::vector<double> z(cfg.dim, 0.0);
            for (std::size_t i = 0; i < cfg.dim; ++i)
                for (std::size_t j = 0; j < in_dim; ++j) z[i] += proj(i, j) * e[j];
            out.push_back(std::move(z));
        }
        return out;
    };
    return frechet_distance(gaussian_moments(project_all(e_real)),
                            gaussian_moments(project_all(e_synth)));
}

namespace detail {

// Pearson correlation matrix over pooled (window, timestep) rows; constant
// channels correlate 0 by convention.
inline Matrix pooled_correlation(const std::vector<Window>& ws) {
    const std::size_t cols = ws.front().cols();
    std::size_t n = 0;
    std::vector<double> mean(cols, 0.0);
    for (const auto& w : ws) {
        n += w.rows();
        for (std::size_t r = 0; r < w.rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) mean[c] += w(r, c);
    }
    for (auto& m : mean) m /= static_cast<double>(n);

    Matrix cov(cols, cols, 0.0);
    for (const auto& w : ws)
        for (std::size_t r = 0; r < w.rows(); ++r)
            for (std::size_t i = 0; i < cols; ++i)
                for (std::size_t j = i; j < cols; ++j)
                    cov(i, j) += (w(r, i) - mean[i]) * (w(r, j) - mean[j]);

    Matrix corr(cols, cols, 0.0);
    for (std::size_t i = 0; i < cols; ++i)
        for (std::size_t j = i; j < cols; ++j) {
            const double denom = std::sqrt(cov(i, i) * cov(j, j));
            const double r = denom > 1e-12 ? cov(i, j) / denom : (i == j ? 1.0 : 0.0);
            corr(i, j) = r;
            corr(j, i) = r;
        }
    return corr;
}

}  // namespace detail

// Mean absolute gap between the two sides' cross-channel correlations.
inline double correlational_score(const std::vector<Window>& real,
                                  const std::vector<Window>& synth) {
    detail::check_shapes(real, synth);
    const std::size_t cols = real.front().cols();
    require(cols >= 2, "correlational_score: need at least 2 channels");
    const Matrix a = detail::pooled_correlation(real);
    const Matrix b = detail::pooled_correlation(synth);
    double sum = 0.0;
    for (std::size_t i = 0; i < cols; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            if (i != j) sum += std::abs(a(i, j) - b(i, j));
    return sum / (static_cast<double>(cols) * static_cast<double>(cols - 1));
}

// Logistic classifier on window embeddings; 0 means indistinguishable, 0.5
// means perfectly separable.
inline double discriminative_score(const std::vector<Window>& real,
                                   const std::vector<Window>& synth, std::uint64_t seed) {
    detail::check_shapes(real, synth);
    if (real.size() < 20 || synth.size() < 20)
        throw Error("discriminative_score: too few windows (need >= 20 per side)");

    const auto e_real = embed_windows(real);
    const auto e_synth = embed_windows(synth);
    const std::size_t dim = e_real.front().size();

    Rng rng(derive_seed(seed, "disc-split"));
    auto split = [&](std::size_t n) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx);
        const std::size_t cut = (n * 3) / 4;
        return std::pair{std::vector<std::size_t>(idx.begin(), idx.begin() + cut),
                         std::vector<std::size_t>(idx.begin() + cut, idx.end())};
    };
    const auto [train_r, test_r] = split(e_real.size());
    const auto [train_s, test_s] = split(e_synth.size());

    std::vector<const std::vector<double>*> train_x;
    std::vector<double> train_y;
    for (auto i : train_r) {
        train_x.push_back(&e_real[i]);
        train_y.push_back(1.0);
    }
    for (auto i : train_s) {
        train_x.push_back(&e_synth[i]);
        train_y.push_back(0.0);
    }

    // Standardize features on the training set.
    std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
    for (const auto* x : train_x)
        for (std::size_t j = 0; j < dim; ++j) mu[j] += (*x)[j];
    for (auto& m : mu) m /= static_cast<double>(train_x.size());
    for (const auto* x : train_x)
        for (std::size_t j = 0; j < dim; ++j) sd[j] += ((*x)[j] - mu[j]) * ((*x)[j] - mu[j]);
    for (auto& s : sd) {
        s = std::sqrt(s / static_cast<double>(train_x.size()));
        if (s < 1e-12) s = 1.0;
    }
    auto standardized = [&](const std::vector<double>& x, std::size_t j) {
        return (x[j] - mu[j]) / sd[j];
    };

    std::vector<double> w(dim + 1, 0.0);  // last entry is the bias
    auto logit = [&](const std::vector<double>& x) {
        double z = w[dim];
        for (std::size_t j = 0; j < dim; ++j) z += w[j] * standardized(x, j);
        return 1.0 / (1.0 + std::exp(-z));
    };
    const double lr = 0.5;
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<double> grad(dim + 1, 0.0);
        for (std::size_t i = 0; i < train_x.size(); ++i) {
            const double err = logit(*train_x[i]) - train_y[i];
            for (std::size_t j = 0; j < dim; ++j)
                grad[j] += err * standardized(*train_x[i], j);
            grad[dim] += err;
        }
        const double inv = 1.0 / static_cast<double>(train_x.size());
        for (std::size_t j = 0; j <= dim; ++j) w[j] -= lr * inv * grad[j];
    }

    std::size_t correct = 0, total = 0;
    for (auto i : test_r) {
        correct += logit(e_real[i]) > 0.5 ? 1 : 0;
        ++total;
    }
    for (auto i : test_s) {
        correct += logit(e_synth[i]) <= 0.5 ? 1 : 0;
        ++total;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    return std::abs(acc - 0.5);
}

// One-step-ahead linear autoregression (order up to 3, all channels jointly,
// tiny ridge) fit on synthetic windows and scored by mean absolute error on
// real ones. The fit is closed-form; the seed parameter keeps the metric
// interfaces uniform.
inline double predictive_score(const std::vector<Window>& real,
                               const std::vector<Window>& synth,
                               [[maybe_unused]] std::uint64_t seed) {
    detail::check_shapes(real, synth);
    const std::size_t rows = real.front().rows();
    const std::size_t cols = real.front().cols();
    require(rows >= 2, "predictive_score: windows must have >= 2 timesteps");
    if (real.size() < 20 || synth.size() < 20)
        throw Error("predictive_score: too few windows (need >= 20 per side)");

    const std::size_t order = std::min<std::size_t>(3, rows - 1);
    const std::size_t f_dim = order * cols + 1;  // lagged values plus intercept

    auto features = [&](const Window& w, std::size_t t, std::vector<double>& f) {
        std::size_t p = 0;
        for (std::size_t lag = 1; lag <= order; ++lag)
            for (std::size_t c = 0; c < cols; ++c) f[p++] = w(t - lag, c);
        f[p] = 1.0;
    };

    Matrix ata(f_dim, f_dim, 0.0);
    Matrix aty(f_dim, cols, 0.0);
    std::vector<double> f(f_dim);
    for (const auto& w : synth)
        for (std::size_t t = order; t < rows; ++t) {
            features(w, t, f);
            for (std::size_t i = 0; i < f_dim; ++i) {
                for (std::size_t j = i; j < f_dim; ++j) ata(i, j) += f[i] * f[j];
                for (std::size_t c = 0; c < cols; ++c) aty(i, c) += f[i] * w(t, c);
            }
        }
    for (std::size_t i = 0; i < f_dim; ++i) {
        for (std::size_t j = i + 1; j < f_dim; ++j) ata(j, i) = ata(i, j);
        ata(i, i) += 1e-8;
    }

    Matrix coef(f_dim, cols, 0.0);  // column c predicts channel c
    for (std::size_t c = 0; c < cols; ++c) {
        std::vector<double> rhs(f_dim);
        for (std::size_t i = 0; i < f_dim; ++i) rhs[i] = aty(i, c);
        const std::vector<double> x = solve_spd(ata, rhs);
        for (std::size_t i = 0; i < f_dim; ++i) coef(i, c) = x[i];
    }

    double abs_err = 0.0;
    std::size_t n = 0;
    for (const auto& w : real)
        for (std::size_t t = order; t < rows; ++t) {
            features(w, t, f);
            for (std::size_t c = 0; c < cols; ++c) {
                double pred = 0.0;
                for (std::size_t i = 0; i < f_dim; ++i) pred += f[i] * coef(i, c);
                abs_err += std::abs(pred - w(t, c));
                ++n;
            }
        }
    return abs_err / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"context_fid", "correlational",
                                                "discriminative", "predictive"};
    return names;
}

struct MetricValues {
    double context_fid = 0.0;
    double correlational = 0.0;
    double discriminative = 0.0;
    double predictive = 0.0;

    double by_index(std::size_t m) const {
        switch (m) {
            case 0: return context_fid;
            case 1: return correlational;
            case 2: return discriminative;
            case 3: return predictive;
        }
        throw Error("MetricValues: bad metric index");
    }
};

inline MetricValues compute_metrics(const std::vector<Window>& real,
                                    const std::vector<Window>& synth,
                                    const EmbeddingConfig& embed, std::uint64_t seed) {
    MetricValues v;
    v.context_fid = context_fid(real, synth, embed);
    v.correlational = correlational_score(real, synth);
    v.discriminative = discriminative_score(real, synth, derive_seed(seed, "discriminative"));
    v.predictive = predictive_score(real, synth, derive_seed(seed, "predictive"));
    return v;
}

struct MetricsReport {
    std::size_t n_clients = 0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    // values[metric][client][trial]
    std::vector<std::vector<std::vector<double>>> values;

    void init(std::size_t clients, std::size_t n_trials, std::uint64_t master_seed) {
        n_clients = clients;
        trials = n_trials;
        seed = master_seed;
        values.assign(metric_names().size(),
                      std::vector<std::vector<double>>(clients,
                                                       std::vector<double>(n_trials, 0.0)));
    }

    double client_mean(std::size_t metric, std::size_t client) const {
        double s = 0.0;
        for (double v : values[metric][client]) s += v;
        return s / static_cast<double>(trials);
    }

    double overall_mean(std::size_t metric) const {
        double s = 0.0;
        for (std::size_t c = 0; c < n_clients; ++c) s += client_mean(metric, c);
        return s / static_cast<double>(n_clients);
    }

    bool all_finite() const {
        for (const auto& per_metric : values)
            for (const auto& per_client : per_metric)
                for (double v : per_client)
                    if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    CsvWriter out(path);
    out.row({"metric", "client_id", "trial", "value"});
    for (std::size_t m = 0; m < metric_names().size(); ++m) {
        for (std::size_t c = 0; c < report.n_clients; ++c) {
            for (std::size_t t = 0; t < report.trials; ++t)
                out.row({metric_names()[m], std::to_string(c), std::to_string(t),
                         format_double(report.values[m][c][t])});
            out.row({metric_names()[m], std::to_string(c), "avg",
                     format_double(report.client_mean(m, c))});
        }
        out.row({metric_names()[m], "avg", "avg", format_double(report.overall_mean(m))});
    }
}

}  // namespace fedtdd
