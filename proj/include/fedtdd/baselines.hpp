#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedtdd/dataset.hpp"
#include "fedtdd/diffusion.hpp"
#include "fedtdd/error.hpp"
#include "fedtdd/federation.hpp"

namespace fedtdd {

enum class Regime { FedTDD, CentralizedStar, Centralized, Local, Pretrained };

inline std::string regime_name(Regime r) {
    switch (r) {
        case Regime::FedTDD: return "fedtdd";
        case Regime::CentralizedStar: return "centralized_star";
        case Regime::Centralized: return "centralized";
        case Regime::Local: return "local";
        case Regime::Pretrained: return "pretrained";
    }
    throw Error("regime_name: bad enum value");
}

inline Regime regime_from_string(const std::string& s) {
    if (s == "fedtdd") return Regime::FedTDD;
    if (s == "centralized_star") return Regime::CentralizedStar;
    if (s == "centralized") return Regime::Centralized;
    if (s == "local") return Regime::Local;
    if (s == "pretrained") return Regime::Pretrained;
    throw Error("unknown regime '" + s +
                "' (expected fedtdd, centralized_star, centralized, local, pretrained)");
}

// Trained artifacts of one regime, in the shape the evaluator consumes: either
// one central model over every feature id, or one imputer per client.
struct RegimeOutcome {
    std::string name;
    bool uses_central_model = false;
    DiffusionModel central;
    std::vector<DiffusionModel> imputers;
    std::vector<std::vector<Window>> synthetic;  // per client, last synthesis pass
    DiffusionModel distiller;                    // pretrained/fedtdd only
    bool has_distiller = false;
    std::vector<RoundRecord> trace;
};

// Every non-federated regime trains its model in one pass with the same
// budget a first federation round gets, so regime comparisons vary only in
// how the training data is assembled.
inline std::size_t single_pass_epochs(const FederationConfig& cfg) {
    return cfg.effective_epochs(cfg.epochs_first);
}

inline std::vector<Mask> all_ones_masks(const std::vector<Window>& windows) {
    std::vector<Mask> masks;
    masks.reserve(windows.size());
    for (const auto& w : windows) masks.push_back(Mask::ones(w.rows(), w.cols()));
    return masks;
}

inline RoundRecord single_round_trace(const std::vector<double>& client_losses,
                                      const std::vector<double>& client_rmse,
                                      std::size_t dataset_windows) {
    RoundRecord rec;
    rec.round = 1;
    rec.public_windows = dataset_windows;
    for (std::size_t i = 0; i < client_losses.size(); ++i) {
        ClientRoundRecord cr;
        cr.round = 1;
        cr.client_id = i;
        cr.train_loss = client_losses[i];
        cr.imputation_rmse = client_rmse[i];
        rec.clients.push_back(cr);
    }
    return rec;
}

// Oracle regime: one model over every channel, trained on fully observed
// windows cut from the raw source (public region plus every client segment).
inline RegimeOutcome run_centralized_star(const Matrix& source, const PartitionBundle& bundle,
                                          const FederationConfig& cfg,
                                          std::size_t window_stride = 1) {
    RegimeOutcome out;
    out.name = regime_name(Regime::CentralizedStar);
    out.uses_central_model = true;

    const Matrix norm = normalize_matrix(source, bundle.global_stats);
    std::vector<Window> windows =
        sliding_window(norm.slice_rows(0, bundle.reserve_rows), bundle.window_len,
                       window_stride);
    for (const auto& client : bundle.clients) {
        const auto segment = sliding_window(
            norm.slice_rows(client.time_offset, client.time_offset + bundle.segment_rows),
            bundle.window_len, window_stride);
        windows.insert(windows.end(), segment.begin(), segment.end());
    }

    out.central = make_diffusion_model(bundle.window_len, bundle.n_channels_total, cfg.hidden,
                                       cfg.t_diff, cfg.schedule,
                                       derive_seed(cfg.seed, "central-star-init"));
    Rng rng(derive_seed(cfg.seed, "central-star-train"));
    const double loss = mean_of(
        train(out.central, windows, all_ones_masks(windows), cfg.train_config(single_pass_epochs(cfg)), rng));

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.trace.push_back(single_round_trace(std::vector<double>(cfg.n_clients, loss),
                                           std::vector<double>(cfg.n_clients, nan),
                                           windows.size()));
    return out;
}

// Zero-fill pooling: each contributor's window is widened to every channel,
// with the channels it owns placed at their global ids (masked values zeroed)
// and zero-filled padding elsewhere. Padding and masked entries are excluded
// from the loss but stay visible to the network as inputs.
inline std::pair<std::vector<Window>, std::vector<Mask>> centralized_training_set(
    const PartitionBundle& bundle) {
    const std::size_t c_total = bundle.n_channels_total;
    std::vector<Window> windows;
    std::vector<Mask> loss_masks;
    for (const auto& pub : bundle.public_data.windows) {
        Window w(pub.rows(), c_total, 0.0);
        Mask m = Mask::zeros(pub.rows(), c_total);
        for (std::size_t c = 0; c < pub.cols(); ++c) {
            for (std::size_t r = 0; r < pub.rows(); ++r) {
                w(r, c) = pub(r, c);
                m(r, c) = 1;
            }
        }
        windows.push_back(std::move(w));
        loss_masks.push_back(std::move(m));
    }
    for (const auto& client : bundle.clients) {
        for (std::size_t i = 0; i < client.windows.size(); ++i) {
            const Window safe = masked_fill_zero(client.windows[i], client.masks[i]);
            Window w(safe.rows(), c_total, 0.0);
            Mask m = Mask::zeros(safe.rows(), c_total);
            for (std::size_t k = 0; k < client.schema.channels(); ++k) {
                const std::size_t g = client.schema.global_feature_ids[k];
                for (std::size_t r = 0; r < safe.rows(); ++r) {
                    w(r, g) = safe(r, k);
                    m(r, g) = client.masks[i](r, k);
                }
            }
            windows.push_back(std::move(w));
            loss_masks.push_back(std::move(m));
        }
    }
    return {std::move(windows), std::move(loss_masks)};
}

inline RegimeOutcome run_centralized(const PartitionBundle& bundle,
                                     const FederationConfig& cfg) {
    RegimeOutcome out;
    out.name = regime_name(Regime::Centralized);
    out.uses_central_model = true;

    auto [windows, loss_masks] = centralized_training_set(bundle);
    out.central = make_diffusion_model(bundle.window_len, bundle.n_channels_total, cfg.hidden,
                                       cfg.t_diff, cfg.schedule,
                                       derive_seed(cfg.seed, "central-init"));
    Rng rng(derive_seed(cfg.seed, "central-train"));
    const double loss =
        mean_of(train(out.central, windows, loss_masks, cfg.train_config(single_pass_epochs(cfg)), rng));

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.trace.push_back(single_round_trace(std::vector<double>(cfg.n_clients, loss),
                                           std::vector<double>(cfg.n_clients, nan),
                                           windows.size()));
    return out;
}

// No-communication regime: each client bootstrap-fills its own windows by
// interpolation, trains its imputer on observed entries only, and synthesizes
// locally.
inline RegimeOutcome run_local(const PartitionBundle& bundle, const FederationConfig& cfg) {
    RegimeOutcome out;
    out.name = regime_name(Regime::Local);
    std::vector<double> losses, rmses;

    for (std::size_t i = 0; i < bundle.clients.size(); ++i) {
        const ClientDataset& client = bundle.clients[i];
        std::vector<Window> train_windows;
        std::vector<Mask> loss_masks;
        for (std::size_t w = 0; w < client.windows.size(); ++w) {
            const Window safe = masked_fill_zero(client.windows[w], client.masks[w]);
            train_windows.push_back(linear_interp_fill(safe, client.masks[w]));
            loss_masks.push_back(client.masks[w]);
        }

        DiffusionModel imputer =
            make_diffusion_model(bundle.window_len, client.schema.channels(), cfg.hidden,
                                 cfg.t_diff, cfg.schedule,
                                 derive_seed(cfg.seed, "imputer-init", i));
        Rng rng(derive_seed(cfg.seed, "local-round", i));
        losses.push_back(mean_of(
            train(imputer, train_windows, loss_masks, cfg.train_config(single_pass_epochs(cfg)), rng)));
        rmses.push_back(imputation_rmse(train_windows, client.masks, bundle.oracle[i].windows));

        out.synthetic.push_back(sample_unconditional(imputer, cfg.synth_per_client, rng));
        out.imputers.push_back(std::move(imputer));
    }
    std::size_t total = 0;
    for (const auto& c : bundle.clients) total += c.windows.size();
    out.trace.push_back(single_round_trace(losses, rmses, total));
    return out;
}

// Public-model regime: the distiller is pretrained once and each client runs
// exactly one federation round against it, with nothing sent back. Seed
// labels match run_federation's round 1, so with rounds=1 and alpha=0 the two
// paths produce bit-identical client states.
inline RegimeOutcome run_pretrained(const PartitionBundle& bundle, const FederationConfig& cfg) {
    RegimeOutcome out;
    out.name = regime_name(Regime::Pretrained);

    CoordinatorState coord;
    coord.public_data = bundle.public_data;
    coord.distiller = make_diffusion_model(bundle.window_len, bundle.n_common, cfg.hidden,
                                           cfg.t_diff, cfg.schedule,
                                           derive_seed(cfg.seed, "distiller-init"));
    pretrain_distiller(coord, cfg.effective_epochs(cfg.epochs_first), cfg,
                       derive_seed(cfg.seed, "distiller-train"));

    std::vector<double> losses, rmses;
    for (std::size_t i = 0; i < bundle.clients.size(); ++i) {
        ClientState state;
        state.id = i;
        state.dataset = bundle.clients[i];
        state.imputer = make_diffusion_model(bundle.window_len,
                                             bundle.clients[i].schema.channels(), cfg.hidden,
                                             cfg.t_diff, cfg.schedule,
                                             derive_seed(cfg.seed, "imputer-init", i));
        const ClientRoundResult res =
            client_round(state, coord.distiller, 1, cfg.effective_epochs(cfg.epochs_first),
                         cfg, derive_seed(cfg.seed, "client-round", 1, i));
        losses.push_back(res.train_loss);
        rmses.push_back(imputation_rmse(res.train_windows, state.dataset.masks,
                                        bundle.oracle[i].windows));
        out.synthetic.push_back(state.last_synthetic);
        out.imputers.push_back(std::move(state.imputer));
    }
    out.trace.push_back(single_round_trace(losses, rmses, bundle.public_data.windows.size()));
    out.distiller = std::move(coord.distiller);
    out.has_distiller = true;
    return out;
}

inline RegimeOutcome run_fedtdd(const PartitionBundle& bundle, const FederationConfig& cfg,
                                MessageLog* log = nullptr,
                                const std::vector<std::size_t>* client_order = nullptr) {
    FederationResult fed = run_federation(bundle.public_data, bundle.clients, cfg,
                                          &bundle.oracle, log, client_order);
    RegimeOutcome out;
    out.name = regime_name(Regime::FedTDD);
    out.trace = std::move(fed.rounds);
    for (auto& client : fed.clients) {
        out.imputers.push_back(std::move(client.imputer));
        out.synthetic.push_back(std::move(client.last_synthetic));
    }
    out.distiller = std::move(fed.coordinator.distiller);
    out.has_distiller = true;
    return out;
}

}  // namespace fedtdd
