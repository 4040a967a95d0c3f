#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fedtdd/error.hpp"
#include "fedtdd/matrix.hpp"
#include "fedtdd/rng.hpp"

namespace fedtdd {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Split of a client's local channels into common features (same global ids
// everywhere) and exclusive features. Local channel k maps to the dataset-wide
// feature id global_feature_ids[k].
struct FeatureSchema {
    std::vector<std::size_t> common_indices;     // local channel indices
    std::vector<std::size_t> exclusive_indices;  // local channel indices
    std::vector<std::size_t> global_feature_ids; // local index -> global feature id

    std::size_t channels() const { return global_feature_ids.size(); }

    void validate() const {
        std::vector<bool> seen(channels(), false);
        for (auto i : common_indices) {
            require(i < channels(), "FeatureSchema: common index out of range");
            seen[i] = true;
        }
        for (auto i : exclusive_indices) {
            require(i < channels(), "FeatureSchema: exclusive index out of range");
            require(!seen[i], "FeatureSchema: channel listed as both common and exclusive");
            seen[i] = true;
        }
        for (bool s : seen) require(s, "FeatureSchema: channel missing from both index lists");
    }
};

struct ClientDataset {
    std::vector<Window> windows;
    std::vector<Mask> masks;
    FeatureSchema schema;
    std::size_t time_offset = 0;  // first source row of this client's segment

    void validate() const {
        require(windows.size() == masks.size(), "ClientDataset: windows/masks length mismatch");
        for (std::size_t i = 0; i < windows.size(); ++i)
            require(masks[i].same_shape(windows[i]), "ClientDataset: window/mask shape mismatch");
    }
};

// Coordinator-held dataset over the common features; fully observed, so the
// all-ones mask is implied rather than stored.
struct PublicDataset {
    std::vector<Window> windows;

    std::size_t channels() const { return windows.empty() ? 0 : windows.front().cols(); }
};

struct MissingnessConfig {
    double pr = 0.5;  // public reserve fraction
    double sr = 0.5;  // sequence-split fraction
    double mr = 0.5;  // per-entry missing rate
    std::uint64_t rng_seed = 0;

    void validate() const {
        require(pr >= 0.0 && pr <= 1.0, "MissingnessConfig: pr must be in [0,1]");
        require(sr >= 0.0 && sr <= 1.0, "MissingnessConfig: sr must be in [0,1]");
        require(mr >= 0.0 && mr <= 1.0, "MissingnessConfig: mr must be in [0,1]");
    }
};

// ---------------------------------------------------------------------------
// Windowing and normalization
// ---------------------------------------------------------------------------

inline std::vector<Window> sliding_window(const Matrix& series, std::size_t length,
                                          std::size_t stride) {
    require(length >= 1 && stride >= 1, "sliding_window: length and stride must be >= 1");
    if (series.rows() < length)
        throw Error("sliding_window: series has " + std::to_string(series.rows()) +
                    " rows, need at least " + std::to_string(length));
    const std::size_t count = (series.rows() - length) / stride + 1;
    std::vector<Window> out;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w)
        out.push_back(series.slice_rows(w * stride, w * stride + length));
    return out;
}

// Per-channel min/max over the fitting data. Channels with max == min are
// degenerate; normalize maps them to 0.5.
struct NormStats {
    std::vector<double> min_value;
    std::vector<double> max_value;

    std::size_t channels() const { return min_value.size(); }
};

inline NormStats compute_norm_stats(const std::vector<Window>& windows,
                                    const std::vector<Mask>* masks = nullptr) {
    require(!windows.empty(), "compute_norm_stats: empty window list");
    const std::size_t c = windows.front().cols();
    NormStats stats;
    stats.min_value.assign(c, std::numeric_limits<double>::infinity());
    stats.max_value.assign(c, -std::numeric_limits<double>::infinity());
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const Window& win = windows[w];
        for (std::size_t r = 0; r < win.rows(); ++r)
            for (std::size_t k = 0; k < c; ++k) {
                if (masks && !(*masks)[w](r, k)) continue;
                stats.min_value[k] = std::min(stats.min_value[k], win(r, k));
                stats.max_value[k] = std::max(stats.max_value[k], win(r, k));
            }
    }
    for (std::size_t k = 0; k < c; ++k)
        if (!std::isfinite(stats.min_value[k])) {
            stats.min_value[k] = 0.0;  // channel with no observed entries
            stats.max_value[k] = 0.0;
        }
    return stats;
}

inline NormStats compute_norm_stats(const Matrix& series) {
    std::vector<Window> one{series};
    return compute_norm_stats(one);
}

inline double normalize_value(double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.5;
}

inline double denormalize_value(double v, double lo, double hi) {
    return hi > lo ? lo + v * (hi - lo) : lo;
}

inline Matrix normalize_matrix(const Matrix& m, const NormStats& stats) {
    require(stats.channels() == m.cols(), "normalize: channel count mismatch");
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            out(r, c) = normalize_value(m(r, c), stats.min_value[c], stats.max_value[c]);
    return out;
}

inline Matrix denormalize_matrix(const Matrix& m, const NormStats& stats) {
    require(stats.channels() == m.cols(), "denormalize: channel count mismatch");
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            out(r, c) = denormalize_value(m(r, c), stats.min_value[c], stats.max_value[c]);
    return out;
}

// Maps every channel into [0,1]. When stats are not supplied they are fitted
// on the input (observed entries only if masks are given).
inline std::pair<std::vector<Window>, NormStats> normalize(
    const std::vector<Window>& windows, const NormStats* stats = nullptr,
    const std::vector<Mask>* masks = nullptr) {
    const NormStats fitted = stats ? *stats : compute_norm_stats(windows, masks);
    std::vector<Window> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(normalize_matrix(w, fitted));
    return {out, fitted};
}

inline std::vector<Window> denormalize(const std::vector<Window>& windows,
                                       const NormStats& stats) {
    std::vector<Window> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(denormalize_matrix(w, stats));
    return out;
}

// ---------------------------------------------------------------------------
// Federated partition
// ---------------------------------------------------------------------------

// Cuts the source into the public reserve plus n_clients contiguous, disjoint,
// equal-length time segments, and designates the lowest-index channels as the
// common feature set. The remaining channels are shuffled (seeded) and dealt
// round-robin, so every exclusive channel belongs to exactly one client.
inline std::pair<PublicDataset, std::vector<ClientDataset>> partition_dataset(
    const Matrix& series, const MissingnessConfig& config, std::size_t n_clients,
    double common_fraction, std::size_t window_length = 24, std::size_t window_stride = 1) {
    config.validate();
    require(n_clients >= 1, "partition_dataset: n_clients must be >= 1");
    require(common_fraction > 0.0 && common_fraction <= 1.0,
            "partition_dataset: common_fraction must be in (0,1]");

    const std::size_t n_rows = series.rows();
    const std::size_t n_channels = series.cols();
    const std::size_t reserve =
        static_cast<std::size_t>(std::ceil(config.pr * static_cast<double>(n_rows)));
    const std::size_t segment = n_rows > reserve ? (n_rows - reserve) / n_clients : 0;
    if (reserve < window_length || segment < window_length)
        throw Error("partition_dataset: not enough rows (" + std::to_string(n_rows) +
                    ") for a public reserve and " + std::to_string(n_clients) +
                    " client segments of at least " + std::to_string(window_length) +
                    " rows each");

    const std::size_t n_common = std::min<std::size_t>(
        n_channels,
        static_cast<std::size_t>(std::ceil(common_fraction * static_cast<double>(n_channels))));
    std::vector<std::size_t> common_global(n_common);
    for (std::size_t k = 0; k < n_common; ++k) common_global[k] = k;

    // Deal exclusive channels round-robin after a seeded shuffle.
    std::vector<std::size_t> pool;
    for (std::size_t k = n_common; k < n_channels; ++k) pool.push_back(k);
    Rng rng(derive_seed(config.rng_seed, "partition-channels"));
    rng.shuffle(pool);
    std::vector<std::vector<std::size_t>> exclusive_global(n_clients);
    for (std::size_t j = 0; j < pool.size(); ++j)
        exclusive_global[j % n_clients].push_back(pool[j]);
    for (auto& ex : exclusive_global) std::sort(ex.begin(), ex.end());

    PublicDataset pub;
    pub.windows = sliding_window(series.slice_rows(0, reserve).slice_cols(common_global),
                                 window_length, window_stride);

    std::vector<ClientDataset> clients(n_clients);
    for (std::size_t i = 0; i < n_clients; ++i) {
        ClientDataset& cd = clients[i];
        cd.time_offset = reserve + i * segment;
        FeatureSchema& schema = cd.schema;
        schema.global_feature_ids = common_global;
        schema.global_feature_ids.insert(schema.global_feature_ids.end(),
                                         exclusive_global[i].begin(),
                                         exclusive_global[i].end());
        for (std::size_t k = 0; k < n_common; ++k) schema.common_indices.push_back(k);
        for (std::size_t k = 0; k < exclusive_global[i].size(); ++k)
            schema.exclusive_indices.push_back(n_common + k);
        schema.validate();

        const Matrix rows = series.slice_rows(cd.time_offset, cd.time_offset + segment);
        cd.windows = sliding_window(rows.slice_cols(schema.global_feature_ids),
                                    window_length, window_stride);
        for (const auto& w : cd.windows) cd.masks.push_back(Mask::ones(w.rows(), w.cols()));
        cd.validate();
    }
    return {std::move(pub), std::move(clients)};
}

// ---------------------------------------------------------------------------
// Missingness injection
// ---------------------------------------------------------------------------

// Drops mask entries in place: the first ceil(sr*W) windows lose entries only
// on common channels, the rest on all channels. Values are never touched.
// Every channel keeps at least one observed entry per window.
inline void apply_missingness(ClientDataset& client, const MissingnessConfig& config) {
    config.validate();
    for (const auto& m : client.masks)
        require(m.all_ones(), "apply_missingness: masks must start all-ones");

    Rng rng(derive_seed(config.rng_seed, "missingness", client.time_offset));
    const std::size_t n_windows = client.windows.size();
    const std::size_t common_group =
        static_cast<std::size_t>(std::ceil(config.sr * static_cast<double>(n_windows)));

    for (std::size_t w = 0; w < n_windows; ++w) {
        Mask& mask = client.masks[w];
        const bool common_only = w < common_group;
        const std::vector<std::size_t>& affected =
            common_only ? client.schema.common_indices
                        : [&] {
                              std::vector<std::size_t> all(mask.cols());
                              for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
                              return all;
                          }();
        for (std::size_t c : affected)
            for (std::size_t r = 0; r < mask.rows(); ++r)
                if (rng.uniform01() < config.mr) mask(r, c) = 0;
        for (std::size_t c = 0; c < mask.cols(); ++c) {
            if (mask.observed_in_column(c) == 0) {
                const std::size_t r = rng.below(mask.rows());
                mask(r, c) = 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic source corpus
// ---------------------------------------------------------------------------

// Base channels are noisy sinusoids with a slow trend; the upper half of the
// channels are linear mixtures of two earlier channels, giving the learners
// genuine cross-feature correlation to pick up.
struct SourceChannelRecipe {
    double frequency = 0.0;
    double phase = 0.0;
    double trend = 0.0;
};

struct SourceMixtureRecipe {
    std::size_t source_a = 0;
    std::size_t source_b = 0;
    double weight_a = 0.0;
    double weight_b = 0.0;
};

struct SourceRecipe {
    std::size_t n_channels = 0;
    std::vector<SourceChannelRecipe> base;      // channels 0 .. n_base-1
    std::vector<SourceMixtureRecipe> mixtures;  // channels n_base .. C-1

    std::size_t n_base() const { return base.size(); }
};

inline SourceRecipe make_source_recipe(std::size_t n_channels, std::uint64_t seed) {
    require(n_channels >= 2, "make_source_recipe: need at least 2 channels");
    SourceRecipe recipe;
    recipe.n_channels = n_channels;
    const std::size_t n_base = std::max<std::size_t>(1, n_channels / 2);
    Rng rng(derive_seed(seed, "source-recipe"));
    for (std::size_t k = 0; k < n_base; ++k) {
        SourceChannelRecipe ch;
        ch.frequency = rng.uniform(1.0 / 48.0, 1.0 / 6.0);
        ch.phase = rng.uniform(0.0, 2.0 * M_PI);
        ch.trend = rng.uniform(-0.002, 0.002);
        recipe.base.push_back(ch);
    }
    for (std::size_t k = n_base; k < n_channels; ++k) {
        SourceMixtureRecipe mix;
        mix.source_a = rng.below(k);
        mix.source_b = rng.below(k);
        mix.weight_a = rng.uniform(-1.0, 1.0);
        mix.weight_b = rng.uniform(-1.0, 1.0);
        recipe.mixtures.push_back(mix);
    }
    return recipe;
}

inline Matrix generate_synthetic_source(std::size_t n_timesteps, std::size_t n_channels,
                                        std::uint64_t seed, double noise_amplitude = 0.05) {
    const SourceRecipe recipe = make_source_recipe(n_channels, seed);
    Rng rng(derive_seed(seed, "source-noise"));
    Matrix out(n_timesteps, n_channels);
    for (std::size_t k = 0; k < recipe.n_base(); ++k) {
        const auto& ch = recipe.base[k];
        for (std::size_t t = 0; t < n_timesteps; ++t) {
            const double base = std::sin(2.0 * M_PI * ch.frequency * static_cast<double>(t) +
                                         ch.phase) +
                                ch.trend * static_cast<double>(t);
            out(t, k) = base + noise_amplitude * rng.normal();
        }
    }
    for (std::size_t j = 0; j < recipe.mixtures.size(); ++j) {
        const auto& mix = recipe.mixtures[j];
        const std::size_t k = recipe.n_base() + j;
        for (std::size_t t = 0; t < n_timesteps; ++t) {
            out(t, k) = mix.weight_a * out(t, mix.source_a) +
                        mix.weight_b * out(t, mix.source_b) +
                        noise_amplitude * rng.normal();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bootstrap fill
// ---------------------------------------------------------------------------

// Linear interpolation between observed neighbours, constant extrapolation at
// the edges. Used as the conditioning bootstrap before any imputer exists.
inline Window linear_interp_fill(const Window& w, const Mask& mask) {
    require(mask.same_shape(w), "linear_interp_fill: shape mismatch");
    Window out = w;
    for (std::size_t c = 0; c < w.cols(); ++c) {
        std::vector<std::size_t> obs;
        for (std::size_t r = 0; r < w.rows(); ++r)
            if (mask(r, c)) obs.push_back(r);
        if (obs.empty()) {
            for (std::size_t r = 0; r < w.rows(); ++r) out(r, c) = 0.5;
            continue;
        }
        for (std::size_t r = 0; r < w.rows(); ++r) {
            if (mask(r, c)) continue;
            const auto next = std::lower_bound(obs.begin(), obs.end(), r);
            if (next == obs.begin()) {
                out(r, c) = w(obs.front(), c);
            } else if (next == obs.end()) {
                out(r, c) = w(obs.back(), c);
            } else {
                const std::size_t hi = *next;
                const std::size_t lo = *(next - 1);
                const double frac = static_cast<double>(r - lo) / static_cast<double>(hi - lo);
                out(r, c) = (1.0 - frac) * w(lo, c) + frac * w(hi, c);
            }
        }
    }
    return out;
}

}  // namespace fedtdd
