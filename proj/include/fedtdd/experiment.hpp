#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedtdd/baselines.hpp"
#include "fedtdd/csv.hpp"
#include "fedtdd/dataset.hpp"
#include "fedtdd/error.hpp"
#include "fedtdd/federation.hpp"
#include "fedtdd/metrics.hpp"

namespace fedtdd {

// ---------------------------------------------------------------------------
// Flat key-value documents
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

// key = value lines; '#' starts a comment; duplicate keys rejected.
inline std::map<std::string, std::string> parse_flat_document(std::istream& in,
                                                              const std::string& origin) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(origin + " line " + std::to_string(lineno) +
                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw Error(origin + " line " + std::to_string(lineno) + ": empty key");
        if (out.count(key))
            throw Error(origin + " line " + std::to_string(lineno) + ": duplicate key '" +
                        key + "'");
        out[key] = value;
    }
    return out;
}

inline std::map<std::string, std::string> parse_flat_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return parse_flat_document(in, path);
}

// Typed extraction; every consumed key is crossed off so leftovers can be
// reported as unknown.
class KeyReader {
public:
    explicit KeyReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string take_string(const std::string& key, const std::string& fallback) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string v = it->second;
        kv_.erase(it);
        return v;
    }

    double take_real(const std::string& key, double fallback) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string v = it->second;
        kv_.erase(it);
        try {
            std::size_t pos = 0;
            const double parsed = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return parsed;
        } catch (const std::exception&) {
            throw Error("config key '" + key + "': cannot parse '" + v + "' as a real");
        }
    }

    std::uint64_t take_uint(const std::string& key, std::uint64_t fallback) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string v = it->second;
        kv_.erase(it);
        std::uint64_t parsed = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), parsed);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw Error("config key '" + key + "': cannot parse '" + v +
                        "' as a non-negative integer");
        return parsed;
    }

    void finish() const {
        if (kv_.empty()) return;
        std::string msg = "unknown config key";
        if (kv_.size() > 1) msg += "s";
        msg += ":";
        for (const auto& [k, v] : kv_) msg += " '" + k + "'";
        throw Error(msg);
    }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string data_source = "synthetic";  // or "csv"
    std::string csv_path;
    std::size_t n_timesteps = 360;
    std::size_t n_channels = 6;
    double noise = 0.05;
    std::size_t window_len = 24;
    std::size_t window_stride = 1;
    double common_fraction = 0.5;
    MissingnessConfig miss;
    FederationConfig fed = [] {
        FederationConfig f;
        f.n_clients = 3;
        f.rounds = 2;
        f.epoch_scale = 25.0;
        return f;
    }();
    std::size_t metric_trials = 3;
    std::size_t embed_dim = 16;
    std::size_t eval_windows = 40;
    std::vector<std::string> regimes = {"fedtdd", "centralized_star", "centralized", "local",
                                        "pretrained"};
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;

    void validate() const {
        if (data_source != "synthetic" && data_source != "csv")
            throw Error("config key 'data.source': expected 'synthetic' or 'csv', got '" +
                        data_source + "'");
        if (data_source == "csv") {
            if (csv_path.empty()) throw Error("config key 'data.csv_path': required when data.source = csv");
            if (!std::filesystem::exists(csv_path))
                throw Error("config key 'data.csv_path': file '" + csv_path +
                            "' does not exist");
        }
        require(n_channels >= 2, "config key 'data.n_channels': need at least 2");
        require(window_len >= 2, "config key 'data.window_len': need at least 2");
        require(window_stride >= 1, "config key 'data.window_stride': need at least 1");
        require(common_fraction > 0.0 && common_fraction <= 1.0,
                "config key 'data.common_fraction': must be in (0,1]");
        miss.validate();
        fed.validate();
        require(metric_trials >= 1, "config key 'metrics.trials': need at least 1");
        require(embed_dim >= 2, "config key 'metrics.embed_dim': need at least 2");
        require(eval_windows >= std::max<std::size_t>(20, embed_dim + 2),
                "config key 'metrics.eval_windows': too small for the metric preconditions");
        require(!regimes.empty(), "config key 'run.regimes': must not be empty");
        for (const auto& r : regimes) regime_from_string(r);
        if (!seed_set) throw Error("config key 'run.seed': required (runs never seed from the clock)");
    }
};

inline ExperimentConfig config_from_keys(detail::KeyReader& keys) {
    ExperimentConfig cfg;
    cfg.data_source = keys.take_string("data.source", cfg.data_source);
    cfg.csv_path = keys.take_string("data.csv_path", cfg.csv_path);
    cfg.n_timesteps = keys.take_uint("data.n_timesteps", cfg.n_timesteps);
    cfg.n_channels = keys.take_uint("data.n_channels", cfg.n_channels);
    cfg.noise = keys.take_real("data.noise", cfg.noise);
    cfg.window_len = keys.take_uint("data.window_len", cfg.window_len);
    cfg.window_stride = keys.take_uint("data.window_stride", cfg.window_stride);
    cfg.common_fraction = keys.take_real("data.common_fraction", cfg.common_fraction);

    cfg.miss.pr = keys.take_real("miss.pr", cfg.miss.pr);
    cfg.miss.sr = keys.take_real("miss.sr", cfg.miss.sr);
    cfg.miss.mr = keys.take_real("miss.mr", cfg.miss.mr);

    cfg.fed.n_clients = keys.take_uint("fed.n_clients", cfg.fed.n_clients);
    cfg.fed.rounds = keys.take_uint("fed.rounds", cfg.fed.rounds);
    cfg.fed.alpha = keys.take_real("fed.alpha", cfg.fed.alpha);
    cfg.fed.synth_per_client = keys.take_uint("fed.synth_per_client", cfg.fed.synth_per_client);
    cfg.fed.epochs_first = keys.take_uint("fed.epochs_first", cfg.fed.epochs_first);
    cfg.fed.epochs_rest = keys.take_uint("fed.epochs_rest", cfg.fed.epochs_rest);
    cfg.fed.epoch_scale = keys.take_real("fed.epoch_scale", cfg.fed.epoch_scale);
    cfg.fed.guidance.eta = keys.take_real("fed.eta", cfg.fed.guidance.eta);

    cfg.fed.hidden = keys.take_uint("model.hidden", cfg.fed.hidden);
    cfg.fed.t_diff = keys.take_uint("model.t_diff", cfg.fed.t_diff);
    cfg.fed.schedule = schedule_kind_from_string(
        keys.take_string("model.schedule", cfg.fed.schedule == ScheduleKind::Linear
                                               ? "linear"
                                               : "cosine"));
    cfg.fed.batch_size = keys.take_uint("model.batch_size", cfg.fed.batch_size);
    cfg.fed.lr = keys.take_real("model.lr", cfg.fed.lr);
    cfg.fed.loss.lambda_time = keys.take_real("model.lambda1", cfg.fed.loss.lambda_time);
    cfg.fed.loss.lambda_freq = keys.take_real("model.lambda2", cfg.fed.loss.lambda_freq);
    cfg.fed.loss.lambda_weight = keys.take_real("model.lambda_w", cfg.fed.loss.lambda_weight);

    cfg.metric_trials = keys.take_uint("metrics.trials", cfg.metric_trials);
    cfg.embed_dim = keys.take_uint("metrics.embed_dim", cfg.embed_dim);
    cfg.eval_windows = keys.take_uint("metrics.eval_windows", cfg.eval_windows);

    const std::string regime_list = keys.take_string("run.regimes", "");
    if (!regime_list.empty()) {
        cfg.regimes.clear();
        std::stringstream ss(regime_list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) cfg.regimes.push_back(item);
        }
    }
    cfg.out_dir = keys.take_string("run.out_dir", cfg.out_dir);
    if (keys.has("run.seed")) {
        cfg.seed = keys.take_uint("run.seed", 0);
        cfg.seed_set = true;
    }
    cfg.fed.threads = keys.take_uint("run.threads", cfg.fed.threads);
    keys.finish();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    detail::KeyReader keys(detail::parse_flat_file(path));
    ExperimentConfig cfg = config_from_keys(keys);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin = "<inline>") {
    std::istringstream in(text);
    detail::KeyReader keys(detail::parse_flat_document(in, origin));
    ExperimentConfig cfg = config_from_keys(keys);
    cfg.validate();
    return cfg;
}

// Canonical text form: every key, documented order, parseable by load_config.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "data.source = " << cfg.data_source << "\n";
    if (!cfg.csv_path.empty()) out << "data.csv_path = " << cfg.csv_path << "\n";
    out << "data.n_timesteps = " << cfg.n_timesteps << "\n";
    out << "data.n_channels = " << cfg.n_channels << "\n";
    out << "data.noise = " << format_double(cfg.noise) << "\n";
    out << "data.window_len = " << cfg.window_len << "\n";
    out << "data.window_stride = " << cfg.window_stride << "\n";
    out << "data.common_fraction = " << format_double(cfg.common_fraction) << "\n";
    out << "miss.pr = " << format_double(cfg.miss.pr) << "\n";
    out << "miss.sr = " << format_double(cfg.miss.sr) << "\n";
    out << "miss.mr = " << format_double(cfg.miss.mr) << "\n";
    out << "fed.n_clients = " << cfg.fed.n_clients << "\n";
    out << "fed.rounds = " << cfg.fed.rounds << "\n";
    out << "fed.alpha = " << format_double(cfg.fed.alpha) << "\n";
    out << "fed.synth_per_client = " << cfg.fed.synth_per_client << "\n";
    out << "fed.epochs_first = " << cfg.fed.epochs_first << "\n";
    out << "fed.epochs_rest = " << cfg.fed.epochs_rest << "\n";
    out << "fed.epoch_scale = " << format_double(cfg.fed.epoch_scale) << "\n";
    out << "fed.eta = " << format_double(cfg.fed.guidance.eta) << "\n";
    out << "model.hidden = " << cfg.fed.hidden << "\n";
    out << "model.t_diff = " << cfg.fed.t_diff << "\n";
    out << "model.schedule = "
        << (cfg.fed.schedule == ScheduleKind::Linear ? "linear" : "cosine") << "\n";
    out << "model.batch_size = " << cfg.fed.batch_size << "\n";
    out << "model.lr = " << format_double(cfg.fed.lr) << "\n";
    out << "model.lambda1 = " << format_double(cfg.fed.loss.lambda_time) << "\n";
    out << "model.lambda2 = " << format_double(cfg.fed.loss.lambda_freq) << "\n";
    out << "model.lambda_w = " << format_double(cfg.fed.loss.lambda_weight) << "\n";
    out << "metrics.trials = " << cfg.metric_trials << "\n";
    out << "metrics.embed_dim = " << cfg.embed_dim << "\n";
    out << "metrics.eval_windows = " << cfg.eval_windows << "\n";
    out << "run.regimes = ";
    for (std::size_t i = 0; i < cfg.regimes.size(); ++i) {
        if (i) out << ",";
        out << cfg.regimes[i];
    }
    out << "\n";
    out << "run.out_dir = " << cfg.out_dir << "\n";
    out << "run.seed = " << cfg.seed << "\n";
    out << "run.threads = " << cfg.fed.threads << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic-source generator spec (gen-data)
// ---------------------------------------------------------------------------

struct GenSpec {
    std::size_t n_timesteps = 360;
    std::size_t n_channels = 6;
    double noise = 0.05;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

inline GenSpec load_gen_spec(const std::string& path) {
    detail::KeyReader keys(detail::parse_flat_file(path));
    GenSpec spec;
    spec.n_timesteps = keys.take_uint("n_timesteps", spec.n_timesteps);
    spec.n_channels = keys.take_uint("n_channels", spec.n_channels);
    spec.noise = keys.take_real("noise", spec.noise);
    if (keys.has("seed")) {
        spec.seed = keys.take_uint("seed", 0);
        spec.seed_set = true;
    }
    keys.finish();
    require(spec.n_channels >= 2, "gen spec: n_channels must be >= 2");
    if (!spec.seed_set) throw Error("gen spec: key 'seed' is required");
    return spec;
}

inline std::vector<std::string> default_feature_names(std::size_t n) {
    std::vector<std::string> names;
    names.reserve(n);
    for (std::size_t i = 0; i < n; ++i) names.push_back("f" + std::to_string(i));
    return names;
}

inline void gen_data(const GenSpec& spec, const std::string& out_csv) {
    const Matrix m = generate_synthetic_source(spec.n_timesteps, spec.n_channels, spec.seed,
                                               spec.noise);
    write_series_csv(out_csv, m, default_feature_names(spec.n_channels));
}

// ---------------------------------------------------------------------------
// Evaluation and report writing
// ---------------------------------------------------------------------------

struct RegimeEvaluation {
    MetricsReport report;
    std::vector<std::vector<Window>> sample_synth;  // per client, first trial's windows
};

// Per client and trial: draw a fresh synthetic batch from the regime's
// generator and score it against the client's pre-missingness windows. Seed
// labels carry no regime name, so two regimes that end up with identical
// models produce identical reports.
inline RegimeEvaluation evaluate_regime(const RegimeOutcome& outcome,
                                        const PartitionBundle& bundle,
                                        std::size_t trials, std::size_t eval_windows,
                                        std::size_t embed_dim, std::uint64_t seed) {
    RegimeEvaluation eval;
    const std::size_t n_clients = bundle.clients.size();
    eval.report.init(n_clients, trials, seed);
    eval.sample_synth.resize(n_clients);

    for (std::size_t c = 0; c < n_clients; ++c) {
        const std::vector<Window>& real = bundle.oracle[c].windows;
        for (std::size_t t = 0; t < trials; ++t) {
            Rng gen(derive_seed(seed, "eval-synth", c, t));
            std::vector<Window> synth;
            if (outcome.uses_central_model) {
                const auto& ids = bundle.clients[c].schema.global_feature_ids;
                for (auto& w : sample_unconditional(outcome.central, eval_windows, gen))
                    synth.push_back(w.slice_cols(ids));
            } else {
                synth = sample_unconditional(outcome.imputers[c], eval_windows, gen);
            }
            if (t == 0) {
                const std::size_t keep = std::min<std::size_t>(3, synth.size());
                eval.sample_synth[c].assign(synth.begin(), synth.begin() + keep);
            }
            EmbeddingConfig embed{derive_seed(seed, "embed", c), embed_dim};
            const MetricValues v =
                compute_metrics(real, synth, embed, derive_seed(seed, "metric", c, t));
            for (std::size_t m = 0; m < metric_names().size(); ++m)
                eval.report.values[m][c][t] = v.by_index(m);
        }
    }
    return eval;
}

inline void write_trace_csv(const std::string& path, const std::vector<RoundRecord>& rounds) {
    CsvWriter out(path);
    out.row({"round", "client_id", "train_loss", "imputation_rmse", "contribution_windows",
             "selected_per_client", "public_windows", "distiller_loss"});
    auto opt = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    for (const auto& rec : rounds)
        for (const auto& cr : rec.clients)
            out.row({std::to_string(rec.round), std::to_string(cr.client_id),
                     format_double(cr.train_loss), opt(cr.imputation_rmse),
                     std::to_string(cr.contribution_windows),
                     std::to_string(rec.selected_per_client),
                     std::to_string(rec.public_windows), opt(rec.distiller_loss)});
}

// Long-format real-vs-synthetic windows, denormalized, for plotting.
inline void write_samples_csv(const std::string& path, const PartitionBundle& bundle,
                              const std::vector<std::vector<Window>>& synth,
                              const std::vector<std::string>& feature_names) {
    CsvWriter out(path);
    out.row({"client_id", "kind", "window", "step", "feature", "value"});
    for (std::size_t c = 0; c < bundle.clients.size(); ++c) {
        const auto& schema = bundle.clients[c].schema;
        auto emit = [&](const std::string& kind, std::size_t w_idx, const Window& w) {
            const Window denorm = denormalize_matrix(w, bundle.client_stats[c]);
            for (std::size_t r = 0; r < denorm.rows(); ++r)
                for (std::size_t k = 0; k < denorm.cols(); ++k)
                    out.row({std::to_string(c), kind, std::to_string(w_idx),
                             std::to_string(r),
                             feature_names[schema.global_feature_ids[k]],
                             format_double(denorm(r, k))});
        };
        const std::size_t n_real = std::min<std::size_t>(3, bundle.oracle[c].windows.size());
        for (std::size_t w = 0; w < n_real; ++w)
            emit("real", w, bundle.oracle[c].windows[w]);
        if (c < synth.size())
            for (std::size_t w = 0; w < synth[c].size(); ++w) emit("synth", w, synth[c][w]);
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

inline RegimeOutcome run_regime(Regime regime, const Matrix& source,
                                const PartitionBundle& bundle, const FederationConfig& fed,
                                std::size_t window_stride) {
    switch (regime) {
        case Regime::FedTDD: return run_fedtdd(bundle, fed);
        case Regime::CentralizedStar:
            return run_centralized_star(source, bundle, fed, window_stride);
        case Regime::Centralized: return run_centralized(bundle, fed);
        case Regime::Local: return run_local(bundle, fed);
        case Regime::Pretrained: return run_pretrained(bundle, fed);
    }
    throw Error("run_regime: bad enum value");
}

inline Matrix load_source(const ExperimentConfig& cfg, std::vector<std::string>& names) {
    if (cfg.data_source == "csv") {
        SeriesCsv csv = read_series_csv(cfg.csv_path);
        names = csv.feature_names;
        return csv.values;
    }
    names = default_feature_names(cfg.n_channels);
    return generate_synthetic_source(cfg.n_timesteps, cfg.n_channels,
                                     derive_seed(cfg.seed, "source"), cfg.noise);
}

// Runs every configured regime and writes, per regime, a round trace, a
// metrics report and plot-ready sample windows, then a manifest naming every
// file. Any failure leaves a FAILED.txt marker behind and returns nonzero.
inline int run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    auto path_of = [&](const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); };
    std::vector<std::string> manifest;

    try {
        {
            std::ofstream echo(path_of("config_echo.txt"));
            if (!echo) throw Error("cannot write '" + path_of("config_echo.txt") + "'");
            echo << serialize_config(cfg);
        }
        manifest.push_back("config_echo.txt");

        std::vector<std::string> feature_names;
        const Matrix source = load_source(cfg, feature_names);
        FederationConfig fed = cfg.fed;
        fed.seed = cfg.seed;
        MissingnessConfig miss = cfg.miss;
        miss.rng_seed = cfg.seed;
        const PartitionBundle bundle = build_partition(source, miss, fed.n_clients,
                                                       cfg.common_fraction, cfg.window_len,
                                                       cfg.window_stride);

        for (const auto& name : cfg.regimes) {
            const Regime regime = regime_from_string(name);
            const RegimeOutcome outcome =
                run_regime(regime, source, bundle, fed, cfg.window_stride);

            write_trace_csv(path_of("trace_" + name + ".csv"), outcome.trace);
            manifest.push_back("trace_" + name + ".csv");

            const RegimeEvaluation eval = evaluate_regime(
                outcome, bundle, cfg.metric_trials, cfg.eval_windows, cfg.embed_dim, cfg.seed);
            require(eval.report.all_finite(), "run_experiment: non-finite metric value");
            write_metrics_csv(path_of("metrics_" + name + ".csv"), eval.report);
            manifest.push_back("metrics_" + name + ".csv");

            write_samples_csv(path_of("samples_" + name + ".csv"), bundle, eval.sample_synth,
                              feature_names);
            manifest.push_back("samples_" + name + ".csv");

            if (outcome.has_distiller) {
                save_checkpoint(path_of("distiller_" + name + ".ckpt"), outcome.distiller);
                manifest.push_back("distiller_" + name + ".ckpt");
            }
        }

        manifest.push_back("manifest.txt");
        std::ofstream mf(path_of("manifest.txt"));
        if (!mf) throw Error("cannot write '" + path_of("manifest.txt") + "'");
        for (const auto& f : manifest) mf << f << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::ofstream marker(path_of("FAILED.txt"));
        marker << e.what() << "\n";
        throw;
    }
}

}  // namespace fedtdd
