#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "fedtdd/dataset.hpp"
#include "fedtdd/diffusion.hpp"
#include "fedtdd/error.hpp"
#include "fedtdd/matrix.hpp"
#include "fedtdd/rng.hpp"

namespace fedtdd {

struct GuidanceConfig {
    double eta = 0.5;         // pull strength toward observed entries
    double gamma_prior = 0.0; // reserved; posterior term is used unmodified
};

struct FederationConfig {
    std::size_t n_clients = 10;
    std::size_t rounds = 5;
    double alpha = 0.5;
    std::size_t synth_per_client = 20;  // windows generated per client per round
    std::size_t epochs_first = 7500;    // nominal counts, divided by epoch_scale
    std::size_t epochs_rest = 5000;
    double epoch_scale = 50.0;
    GuidanceConfig guidance;
    std::size_t hidden = 128;
    std::size_t t_diff = 100;
    ScheduleKind schedule = ScheduleKind::Cosine;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    LossConfig loss;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    std::size_t effective_epochs(std::size_t nominal) const {
        if (nominal == 0) return 0;
        const auto scaled = static_cast<std::size_t>(
            std::llround(static_cast<double>(nominal) / epoch_scale));
        return std::max<std::size_t>(1, scaled);
    }

    void validate() const {
        require(n_clients >= 1, "FederationConfig: n_clients must be >= 1");
        require(rounds >= 1, "FederationConfig: rounds must be >= 1");
        require(alpha >= 0.0 && alpha <= 1.0, "FederationConfig: alpha must be in [0,1]");
        require(epoch_scale > 0.0, "FederationConfig: epoch_scale must be positive");
        require(guidance.eta >= 0.0, "FederationConfig: eta must be >= 0");
        require(loss.lambda_time + loss.lambda_freq > 0.0,
                "FederationConfig: loss weights must not both be zero");
    }

    TrainConfig train_config(std::size_t epochs) const {
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.lr = lr;
        tc.loss = loss;
        return tc;
    }
};

struct ClientState {
    std::size_t id = 0;
    ClientDataset dataset;
    DiffusionModel imputer;
    std::vector<Window> last_synthetic;
};

struct CoordinatorState {
    PublicDataset public_data;
    DiffusionModel distiller;
    std::size_t round = 0;
};

struct SyntheticContribution {
    std::size_t client_id = 0;
    std::vector<Window> windows;  // common channels only
};

// ---------------------------------------------------------------------------
// Partition bundle: one masked realization shared by every regime
// ---------------------------------------------------------------------------

// Everything downstream trains and evaluates in normalized space. Min/max
// stats come from what each party may see: public rows for common channels,
// the owning client's observed entries for exclusive channels.
struct PartitionBundle {
    PublicDataset public_data;           // normalized
    std::vector<ClientDataset> clients;  // normalized, masked
    std::vector<ClientDataset> oracle;   // normalized, pre-missingness truth, all-ones masks
    NormStats global_stats;              // indexed by global feature id
    std::vector<NormStats> client_stats; // per client, local channel order
    std::size_t n_common = 0;
    std::size_t window_len = 0;
    std::size_t n_channels_total = 0;
    std::size_t reserve_rows = 0;        // public region length in source rows
    std::size_t segment_rows = 0;        // per-client segment length
};

inline PartitionBundle build_partition(const Matrix& source, const MissingnessConfig& miss,
                                       std::size_t n_clients, double common_fraction,
                                       std::size_t window_len, std::size_t window_stride) {
    PartitionBundle b;
    auto [pub, clients] = partition_dataset(source, miss, n_clients, common_fraction,
                                            window_len, window_stride);
    b.oracle = clients;  // all-ones masks, true values
    for (auto& c : clients) apply_missingness(c, miss);

    b.n_common = clients.front().schema.common_indices.size();
    b.window_len = window_len;
    b.n_channels_total = source.cols();
    b.reserve_rows = static_cast<std::size_t>(
        std::ceil(miss.pr * static_cast<double>(source.rows())));
    b.segment_rows = (source.rows() - b.reserve_rows) / n_clients;

    // Common-channel stats from public data, exclusive-channel stats from the
    // owner's observed entries.
    NormStats pub_stats = compute_norm_stats(pub.windows);
    b.global_stats.min_value.assign(source.cols(), 0.0);
    b.global_stats.max_value.assign(source.cols(), 0.0);
    for (std::size_t k = 0; k < b.n_common; ++k) {
        b.global_stats.min_value[k] = pub_stats.min_value[k];
        b.global_stats.max_value[k] = pub_stats.max_value[k];
    }
    for (std::size_t i = 0; i < clients.size(); ++i) {
        const ClientDataset& c = clients[i];
        const NormStats local = compute_norm_stats(c.windows, &c.masks);
        for (std::size_t e : c.schema.exclusive_indices) {
            const std::size_t g = c.schema.global_feature_ids[e];
            b.global_stats.min_value[g] = local.min_value[e];
            b.global_stats.max_value[g] = local.max_value[e];
        }
    }

    auto stats_for = [&](const FeatureSchema& schema) {
        NormStats s;
        for (std::size_t g : schema.global_feature_ids) {
            s.min_value.push_back(b.global_stats.min_value[g]);
            s.max_value.push_back(b.global_stats.max_value[g]);
        }
        return s;
    };

    NormStats common_stats;
    for (std::size_t k = 0; k < b.n_common; ++k) {
        common_stats.min_value.push_back(b.global_stats.min_value[k]);
        common_stats.max_value.push_back(b.global_stats.max_value[k]);
    }
    b.public_data.windows = normalize(pub.windows, &common_stats).first;

    b.clients = std::move(clients);
    for (std::size_t i = 0; i < b.clients.size(); ++i) {
        const NormStats s = stats_for(b.clients[i].schema);
        b.client_stats.push_back(s);
        for (auto& w : b.clients[i].windows) w = normalize_matrix(w, s);
        for (auto& w : b.oracle[i].windows) w = normalize_matrix(w, s);
    }
    return b;
}

// ---------------------------------------------------------------------------
// Client round
// ---------------------------------------------------------------------------

struct ClientRoundResult {
    SyntheticContribution contribution;
    std::vector<Window> train_windows;  // imputed training data (client-local)
    std::vector<Mask> loss_masks;
    double train_loss = 0.0;
};

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// One client's work in round `round_index` (1-based): impute common channels
// with the distiller, impute exclusives (interpolation bootstrap in round 1,
// own imputer afterwards), train the imputer on the assembled windows, then
// synthesize and hand back only the common channels of the samples. Raw
// window values are only ever read through masked copies, so entries the mask
// hides can never influence any output.
inline ClientRoundResult client_round(ClientState& client, const DiffusionModel& distiller,
                                      std::size_t round_index, std::size_t epochs,
                                      const FederationConfig& cfg, std::uint64_t seed) {
    const FeatureSchema& schema = client.dataset.schema;
    const std::size_t n_common = schema.common_indices.size();
    require(distiller.channels() == n_common,
            "client_round: distiller/client common-channel mismatch");
    require(client.imputer.channels() == schema.channels(),
            "client_round: imputer/client channel mismatch");
    require(round_index >= 1, "client_round: rounds are 1-based");

    Rng rng(seed);
    const double eta = cfg.guidance.eta;
    ClientRoundResult out;
    out.contribution.client_id = client.id;

    for (std::size_t w = 0; w < client.dataset.windows.size(); ++w) {
        const Mask& mask = client.dataset.masks[w];
        const Window safe = masked_fill_zero(client.dataset.windows[w], mask);

        const Window obs_comm = safe.slice_cols(schema.common_indices);
        const Mask mask_comm = mask.slice_cols(schema.common_indices);
        const Window imputed_comm = impute_conditional(distiller, obs_comm, mask_comm, eta, rng);

        Window train = safe;
        for (std::size_t j = 0; j < n_common; ++j)
            train.set_column(schema.common_indices[j], imputed_comm.column(j));

        if (!schema.exclusive_indices.empty()) {
            if (round_index == 1) {
                const Window obs_ex = safe.slice_cols(schema.exclusive_indices);
                const Mask mask_ex = mask.slice_cols(schema.exclusive_indices);
                const Window filled = linear_interp_fill(obs_ex, mask_ex);
                for (std::size_t j = 0; j < schema.exclusive_indices.size(); ++j)
                    train.set_column(schema.exclusive_indices[j], filled.column(j));
            } else {
                // Condition the joint-channel imputer on everything known:
                // freshly imputed commons count as fully observed.
                Window cond = safe;
                Mask cond_mask = mask;
                for (std::size_t j = 0; j < n_common; ++j) {
                    cond.set_column(schema.common_indices[j], imputed_comm.column(j));
                    for (std::size_t r = 0; r < cond_mask.rows(); ++r)
                        cond_mask(r, schema.common_indices[j]) = 1;
                }
                const Window imputed = impute_conditional(client.imputer, cond, cond_mask,
                                                          eta, rng);
                for (std::size_t e : schema.exclusive_indices)
                    train.set_column(e, imputed.column(e));
            }
        }

        Mask loss_mask = Mask::ones(mask.rows(), mask.cols());
        for (std::size_t e : schema.exclusive_indices)
            for (std::size_t r = 0; r < mask.rows(); ++r) loss_mask(r, e) = mask(r, e);

        out.train_windows.push_back(std::move(train));
        out.loss_masks.push_back(std::move(loss_mask));
    }

    const std::vector<double> losses =
        train(client.imputer, out.train_windows, out.loss_masks, cfg.train_config(epochs), rng);
    out.train_loss = mean_of(losses);

    client.last_synthetic = sample_unconditional(client.imputer, cfg.synth_per_client, rng);
    out.contribution.windows.reserve(client.last_synthetic.size());
    for (const auto& s : client.last_synthetic)
        out.contribution.windows.push_back(s.slice_cols(schema.common_indices));
    return out;
}

// ---------------------------------------------------------------------------
// Coordinator side
// ---------------------------------------------------------------------------

inline double pretrain_distiller(CoordinatorState& coord, std::size_t epochs,
                                 const FederationConfig& cfg, std::uint64_t seed) {
    require(!coord.public_data.windows.empty(), "pretrain_distiller: empty public dataset");
    std::vector<Mask> masks;
    masks.reserve(coord.public_data.windows.size());
    for (const auto& w : coord.public_data.windows) masks.push_back(Mask::ones(w.rows(), w.cols()));
    Rng rng(seed);
    return mean_of(train(coord.distiller, coord.public_data.windows, masks,
                         cfg.train_config(epochs), rng));
}

inline std::size_t selection_count(std::size_t r, std::size_t R, double alpha, std::size_t L) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(r) /
                                               static_cast<double>(R) * alpha *
                                               static_cast<double>(L)));
}

// Absorbs n_r = floor((r/R) * alpha * L) windows per client into the public
// dataset, drawn uniformly without replacement, appended by client id then
// draw order.
inline std::size_t aggregate(CoordinatorState& coord,
                             std::vector<SyntheticContribution> contributions, std::size_t r,
                             std::size_t R, double alpha, std::size_t L, std::uint64_t seed) {
    require(r >= 1 && r <= R, "aggregate: round out of range");
    const std::size_t take = selection_count(r, R, alpha, L);
    std::sort(contributions.begin(), contributions.end(),
              [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
    for (const auto& contrib : contributions) {
        if (contrib.windows.size() < take)
            throw Error("aggregate: client " + std::to_string(contrib.client_id) +
                        " contributed " + std::to_string(contrib.windows.size()) +
                        " windows, need " + std::to_string(take));
        Rng rng(derive_seed(seed, "select", contrib.client_id));
        for (std::size_t idx : rng.sample_without_replacement(contrib.windows.size(), take))
            coord.public_data.windows.push_back(contrib.windows[idx]);
    }
    coord.round = r;
    return take;
}

inline double finetune_distiller(CoordinatorState& coord, std::size_t epochs,
                                 const FederationConfig& cfg, std::uint64_t seed) {
    std::vector<Mask> masks;
    masks.reserve(coord.public_data.windows.size());
    for (const auto& w : coord.public_data.windows) masks.push_back(Mask::ones(w.rows(), w.cols()));
    Rng rng(seed);
    return mean_of(train(coord.distiller, coord.public_data.windows, masks,
                         cfg.train_config(epochs), rng));
}

// ---------------------------------------------------------------------------
// Full protocol
// ---------------------------------------------------------------------------

struct ClientRoundRecord {
    std::size_t round = 0;
    std::size_t client_id = 0;
    double train_loss = 0.0;
    double imputation_rmse = std::numeric_limits<double>::quiet_NaN();
    std::size_t contribution_windows = 0;
};

struct RoundRecord {
    std::size_t round = 0;
    std::vector<ClientRoundRecord> clients;  // ordered by client id
    std::size_t selected_per_client = 0;
    std::size_t public_windows = 0;
    double distiller_loss = std::numeric_limits<double>::quiet_NaN();
};

struct MessageLog {
    std::vector<SyntheticContribution> contributions;  // everything coordinator-bound
};

struct FederationResult {
    CoordinatorState coordinator;
    std::vector<ClientState> clients;
    std::vector<RoundRecord> rounds;
    double pretrain_loss = 0.0;
};

// Root-mean-square error on masked-out entries, against the pre-missingness
// truth. Lives simulator-side: clients never see the oracle.
inline double imputation_rmse(const std::vector<Window>& imputed,
                              const std::vector<Mask>& masks,
                              const std::vector<Window>& truth) {
    require(imputed.size() == masks.size() && imputed.size() == truth.size(),
            "imputation_rmse: length mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t w = 0; w < imputed.size(); ++w)
        for (std::size_t r = 0; r < imputed[w].rows(); ++r)
            for (std::size_t c = 0; c < imputed[w].cols(); ++c) {
                if (masks[w](r, c)) continue;
                const double d = imputed[w](r, c) - truth[w](r, c);
                sum += d * d;
                ++n;
            }
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(sum / static_cast<double>(n));
}

namespace detail {

// Runs fn(i) for each index, at most `threads` at a time. Results land in
// caller-owned slots, so scheduling order cannot matter.
template <typename Fn>
void parallel_for_index(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t n_workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += n_workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace detail

// Executes pretraining plus `rounds` cycles of client rounds, aggregation and
// distiller fine-tuning. `oracle` (optional) enables the imputation-RMSE
// column of the trace. `client_order` permutes sequential execution for
// order-invariance checks; results are independent of it because every client
// draws from its own seed and aggregation sorts by id.
inline FederationResult run_federation(const PublicDataset& public_data,
                                       const std::vector<ClientDataset>& clients,
                                       const FederationConfig& cfg,
                                       const std::vector<ClientDataset>* oracle = nullptr,
                                       MessageLog* log = nullptr,
                                       const std::vector<std::size_t>* client_order = nullptr) {
    cfg.validate();
    require(clients.size() == cfg.n_clients, "run_federation: client count mismatch");
    require(!clients.empty(), "run_federation: no clients");
    if (oracle)
        require(oracle->size() == clients.size(), "run_federation: oracle count mismatch");
    const std::size_t window_len = clients.front().windows.front().rows();
    const std::size_t n_common = clients.front().schema.common_indices.size();

    FederationResult result;
    result.coordinator.public_data = public_data;
    result.coordinator.distiller =
        make_diffusion_model(window_len, n_common, cfg.hidden, cfg.t_diff, cfg.schedule,
                             derive_seed(cfg.seed, "distiller-init"));
    result.pretrain_loss =
        pretrain_distiller(result.coordinator, cfg.effective_epochs(cfg.epochs_first), cfg,
                           derive_seed(cfg.seed, "distiller-train"));

    for (std::size_t i = 0; i < clients.size(); ++i) {
        ClientState state;
        state.id = i;
        state.dataset = clients[i];
        state.imputer = make_diffusion_model(window_len, clients[i].schema.channels(),
                                             cfg.hidden, cfg.t_diff, cfg.schedule,
                                             derive_seed(cfg.seed, "imputer-init", i));
        result.clients.push_back(std::move(state));
    }

    std::vector<std::size_t> order(clients.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (client_order) {
        require(client_order->size() == clients.size(),
                "run_federation: client_order length mismatch");
        order = *client_order;
    }

    for (std::size_t r = 1; r <= cfg.rounds; ++r) {
        const std::size_t epochs =
            cfg.effective_epochs(r == 1 ? cfg.epochs_first : cfg.epochs_rest);
        std::vector<ClientRoundResult> round_results(clients.size());
        detail::parallel_for_index(order.size(), cfg.threads, [&](std::size_t slot) {
            const std::size_t i = order[slot];
            round_results[i] = client_round(result.clients[i], result.coordinator.distiller,
                                            r, epochs, cfg,
                                            derive_seed(cfg.seed, "client-round", r, i));
        });

        RoundRecord record;
        record.round = r;
        std::vector<SyntheticContribution> contributions;
        for (std::size_t i = 0; i < clients.size(); ++i) {
            ClientRoundRecord cr;
            cr.round = r;
            cr.client_id = i;
            cr.train_loss = round_results[i].train_loss;
            cr.contribution_windows = round_results[i].contribution.windows.size();
            if (oracle)
                cr.imputation_rmse =
                    imputation_rmse(round_results[i].train_windows,
                                    result.clients[i].dataset.masks, (*oracle)[i].windows);
            record.clients.push_back(cr);
            contributions.push_back(round_results[i].contribution);
        }
        if (log)
            log->contributions.insert(log->contributions.end(), contributions.begin(),
                                      contributions.end());

        record.selected_per_client =
            aggregate(result.coordinator, std::move(contributions), r, cfg.rounds, cfg.alpha,
                      cfg.synth_per_client, derive_seed(cfg.seed, "aggregate", r));
        record.distiller_loss =
            finetune_distiller(result.coordinator, cfg.effective_epochs(cfg.epochs_rest), cfg,
                               derive_seed(cfg.seed, "finetune", r));
        record.public_windows = result.coordinator.public_data.windows.size();
        result.rounds.push_back(std::move(record));
    }
    return result;
}

inline FederationResult run_federation(const Matrix& source, const MissingnessConfig& miss,
                                       const FederationConfig& cfg,
                                       double common_fraction = 0.5,
                                       std::size_t window_len = 24,
                                       std::size_t window_stride = 1) {
    const PartitionBundle bundle = build_partition(source, miss, cfg.n_clients,
                                                   common_fraction, window_len, window_stride);
    return run_federation(bundle.public_data, bundle.clients, cfg, &bundle.oracle);
}

}  // namespace fedtdd
