#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <set>
#include <vector>

#include "fedtdd/baselines.hpp"
#include "fedtdd/federation.hpp"

using namespace fedtdd;

namespace {

// Small but structurally complete world: common and exclusive channels,
// nontrivial missingness, a few dozen windows per client.
PartitionBundle small_bundle(std::uint64_t seed, std::size_t n_clients = 2,
                             std::size_t n_channels = 4, std::size_t n_rows = 220) {
    const Matrix source = generate_synthetic_source(n_rows, n_channels, seed);
    MissingnessConfig miss;
    miss.rng_seed = seed;
    return build_partition(source, miss, n_clients, 0.5, 8, 4);
}

FederationConfig tiny_config(std::uint64_t seed, std::size_t n_clients, std::size_t rounds,
                             double alpha, std::size_t synth) {
    FederationConfig cfg;
    cfg.n_clients = n_clients;
    cfg.rounds = rounds;
    cfg.alpha = alpha;
    cfg.synth_per_client = synth;
    cfg.epochs_first = 6;
    cfg.epochs_rest = 4;
    cfg.epoch_scale = 1.0;
    cfg.hidden = 8;
    cfg.t_diff = 6;
    cfg.batch_size = 4;
    cfg.seed = seed;
    return cfg;
}

std::set<std::uint64_t> bit_patterns(const std::vector<ClientDataset>& clients) {
    std::set<std::uint64_t> out;
    for (const auto& c : clients)
        for (const auto& w : c.windows)
            for (double v : w.data()) out.insert(std::bit_cast<std::uint64_t>(v));
    return out;
}

}  // namespace

TEST_CASE("selection_count floors the growth schedule") {
    REQUIRE(selection_count(1, 4, 0.5, 40) == 5);
    REQUIRE(selection_count(4, 4, 0.5, 40) == 20);
    REQUIRE(selection_count(1, 3, 0.3, 7) == 0);  // floor(0.7)
    REQUIRE(selection_count(3, 3, 1.0, 7) == 7);
    REQUIRE(selection_count(2, 5, 0.0, 100) == 0);
}

TEST_CASE("effective epochs divide by the scale and clamp at one") {
    FederationConfig cfg;
    cfg.epoch_scale = 50.0;
    REQUIRE(cfg.effective_epochs(7500) == 150);
    REQUIRE(cfg.effective_epochs(5000) == 100);
    REQUIRE(cfg.effective_epochs(1) == 1);
    REQUIRE(cfg.effective_epochs(0) == 0);
    cfg.epoch_scale = 1.0;
    REQUIRE(cfg.effective_epochs(123) == 123);
}

TEST_CASE("client_round builds the loss mask as commons union observed exclusives") {
    PartitionBundle bundle = small_bundle(61);
    FederationConfig cfg = tiny_config(61, 2, 1, 0.5, 3);
    DiffusionModel distiller =
        make_diffusion_model(bundle.window_len, bundle.n_common, cfg.hidden, cfg.t_diff,
                             cfg.schedule, 1);

    ClientState state;
    state.id = 0;
    state.dataset = bundle.clients[0];
    state.imputer = make_diffusion_model(bundle.window_len,
                                         state.dataset.schema.channels(), cfg.hidden,
                                         cfg.t_diff, cfg.schedule, 2);
    const ClientRoundResult res = client_round(state, distiller, 1, 2, cfg, 99);

    const auto& schema = state.dataset.schema;
    REQUIRE(!schema.exclusive_indices.empty());
    REQUIRE(res.loss_masks.size() == state.dataset.windows.size());
    bool some_zero = false;
    for (std::size_t w = 0; w < res.loss_masks.size(); ++w) {
        const Mask& lm = res.loss_masks[w];
        const Mask& dm = state.dataset.masks[w];
        for (std::size_t c : schema.common_indices)
            for (std::size_t r = 0; r < lm.rows(); ++r) REQUIRE(lm(r, c) == 1);
        for (std::size_t c : schema.exclusive_indices)
            for (std::size_t r = 0; r < lm.rows(); ++r) {
                REQUIRE(lm(r, c) == dm(r, c));
                some_zero = some_zero || lm(r, c) == 0;
            }
    }
    REQUIRE(some_zero);

    // Observed entries survive imputation verbatim; missing ones got filled.
    for (std::size_t w = 0; w < res.train_windows.size(); ++w) {
        const Mask& dm = state.dataset.masks[w];
        for (std::size_t r = 0; r < dm.rows(); ++r)
            for (std::size_t c = 0; c < dm.cols(); ++c) {
                if (dm(r, c))
                    REQUIRE(res.train_windows[w](r, c) == state.dataset.windows[w](r, c));
                else
                    REQUIRE(std::isfinite(res.train_windows[w](r, c)));
            }
    }

    // Contributions carry exactly the common slice of the synthetic windows.
    REQUIRE(res.contribution.windows.size() == cfg.synth_per_client);
    for (std::size_t s = 0; s < res.contribution.windows.size(); ++s) {
        REQUIRE(res.contribution.windows[s].cols() == bundle.n_common);
        for (std::size_t r = 0; r < bundle.window_len; ++r)
            for (std::size_t j = 0; j < bundle.n_common; ++j)
                REQUIRE(res.contribution.windows[s](r, j) ==
                        state.last_synthetic[s](r, schema.common_indices[j]));
    }
}

TEST_CASE("a fully observed client trains on its own windows untouched") {
    const Matrix source = generate_synthetic_source(220, 4, 62);
    MissingnessConfig miss;
    miss.rng_seed = 62;
    auto [pub, clients] = partition_dataset(source, miss, 2, 0.5, 8, 4);
    // No apply_missingness: masks stay all-ones.

    NormStats stats = compute_norm_stats(clients[0].windows);
    auto [norm_windows, fitted] = normalize(clients[0].windows, &stats);
    clients[0].windows = norm_windows;

    FederationConfig cfg = tiny_config(62, 2, 1, 0.5, 2);
    DiffusionModel distiller = make_diffusion_model(8, 2, cfg.hidden, cfg.t_diff,
                                                    cfg.schedule, 3);
    ClientState state;
    state.id = 0;
    state.dataset = clients[0];
    state.imputer = make_diffusion_model(8, clients[0].schema.channels(), cfg.hidden,
                                         cfg.t_diff, cfg.schedule, 4);
    const ClientRoundResult res = client_round(state, distiller, 1, 2, cfg, 100);
    for (std::size_t w = 0; w < res.train_windows.size(); ++w)
        REQUIRE(res.train_windows[w] == state.dataset.windows[w]);
    for (const auto& lm : res.loss_masks) REQUIRE(lm.all_ones());
}

TEST_CASE("aggregate follows the floor schedule and appends by id then draw order") {
    CoordinatorState coord;
    coord.public_data.windows = {Window(4, 2, 0.0)};
    coord.distiller = make_diffusion_model(4, 2, 4, 4, ScheduleKind::Cosine, 5);

    auto mk = [&](std::size_t id, double base) {
        SyntheticContribution c;
        c.client_id = id;
        for (int i = 0; i < 6; ++i) c.windows.push_back(Window(4, 2, base + i));
        return c;
    };
    // Deliberately unsorted input.
    std::vector<SyntheticContribution> contribs = {mk(1, 100.0), mk(0, 0.0)};
    const std::size_t took = aggregate(coord, contribs, 2, 4, 1.0, 6, 77);
    REQUIRE(took == 3);  // floor(2/4 * 1.0 * 6)
    REQUIRE(coord.public_data.windows.size() == 1 + 2 * took);

    // Client 0's picks come first; replaying the seeded stream predicts them.
    Rng replay(derive_seed(77, "select", std::size_t{0}));
    const auto picks0 = replay.sample_without_replacement(6, took);
    for (std::size_t j = 0; j < took; ++j)
        REQUIRE(coord.public_data.windows[1 + j](0, 0) == static_cast<double>(picks0[j]));
    Rng replay1(derive_seed(77, "select", std::size_t{1}));
    const auto picks1 = replay1.sample_without_replacement(6, took);
    for (std::size_t j = 0; j < took; ++j)
        REQUIRE(coord.public_data.windows[1 + took + j](0, 0) ==
                100.0 + static_cast<double>(picks1[j]));

    // A short contribution is a contract violation once the take is positive.
    SyntheticContribution thin;
    thin.client_id = 0;
    thin.windows = {Window(4, 2, 0.0)};
    REQUIRE_THROWS_AS(aggregate(coord, {thin}, 4, 4, 1.0, 6, 78), Error);
}

TEST_CASE("public dataset growth matches the closed-form schedule") {
    const std::size_t n_clients = 3, rounds = 4, synth = 40;
    PartitionBundle bundle = small_bundle(63, n_clients, 4, 320);
    FederationConfig cfg = tiny_config(63, n_clients, rounds, 0.5, synth);
    cfg.epochs_first = 2;
    cfg.epochs_rest = 2;

    const std::size_t base = bundle.public_data.windows.size();
    const FederationResult result = run_federation(bundle.public_data, bundle.clients, cfg,
                                                   &bundle.oracle);
    REQUIRE(result.rounds.size() == rounds);
    std::size_t expect = base;
    for (std::size_t r = 1; r <= rounds; ++r) {
        const std::size_t n_r = selection_count(r, rounds, cfg.alpha, synth);
        expect += n_clients * n_r;
        const RoundRecord& rec = result.rounds[r - 1];
        REQUIRE(rec.selected_per_client == n_r);
        REQUIRE(rec.public_windows == expect);
        REQUIRE(rec.clients.size() == n_clients);
        for (const auto& cr : rec.clients) {
            REQUIRE(cr.contribution_windows == synth);
            REQUIRE(std::isfinite(cr.train_loss));
            REQUIRE(std::isfinite(cr.imputation_rmse));
            REQUIRE(cr.imputation_rmse >= 0.0);
        }
    }
    REQUIRE(result.coordinator.public_data.windows.size() == expect);

    // Zero share rate: the public dataset never grows.
    FederationConfig frozen = cfg;
    frozen.alpha = 0.0;
    const FederationResult none = run_federation(bundle.public_data, bundle.clients, frozen,
                                                 &bundle.oracle);
    for (const auto& rec : none.rounds) REQUIRE(rec.public_windows == base);
}

TEST_CASE("single round with zero share rate is the pretrained baseline bit for bit") {
    PartitionBundle bundle = small_bundle(64, 3, 5, 320);
    FederationConfig cfg = tiny_config(64, 3, 1, 0.0, 4);

    const RegimeOutcome fed = run_fedtdd(bundle, cfg);
    const RegimeOutcome pre = run_pretrained(bundle, cfg);

    REQUIRE(fed.imputers.size() == pre.imputers.size());
    for (std::size_t i = 0; i < fed.imputers.size(); ++i) {
        REQUIRE(fed.imputers[i].net.params() == pre.imputers[i].net.params());
        REQUIRE(fed.synthetic[i].size() == pre.synthetic[i].size());
        for (std::size_t s = 0; s < fed.synthetic[i].size(); ++s)
            REQUIRE(fed.synthetic[i][s] == pre.synthetic[i][s]);
    }
    for (std::size_t i = 0; i < cfg.n_clients; ++i) {
        REQUIRE(fed.trace[0].clients[i].train_loss == pre.trace[0].clients[i].train_loss);
        REQUIRE(fed.trace[0].clients[i].imputation_rmse ==
                pre.trace[0].clients[i].imputation_rmse);
    }
}

TEST_CASE("client execution order cannot influence results") {
    PartitionBundle bundle = small_bundle(65, 3, 4, 320);
    FederationConfig cfg = tiny_config(65, 3, 2, 0.5, 4);

    const FederationResult a = run_federation(bundle.public_data, bundle.clients, cfg,
                                              &bundle.oracle);
    const std::vector<std::size_t> order = {2, 0, 1};
    const FederationResult b = run_federation(bundle.public_data, bundle.clients, cfg,
                                              &bundle.oracle, nullptr, &order);

    for (std::size_t i = 0; i < cfg.n_clients; ++i) {
        REQUIRE(a.clients[i].imputer.net.params() == b.clients[i].imputer.net.params());
        REQUIRE(a.clients[i].last_synthetic.size() == b.clients[i].last_synthetic.size());
        for (std::size_t s = 0; s < a.clients[i].last_synthetic.size(); ++s)
            REQUIRE(a.clients[i].last_synthetic[s] == b.clients[i].last_synthetic[s]);
    }
    REQUIRE(a.coordinator.distiller.net.params() == b.coordinator.distiller.net.params());
    REQUIRE(a.coordinator.public_data.windows.size() ==
            b.coordinator.public_data.windows.size());
    for (std::size_t w = 0; w < a.coordinator.public_data.windows.size(); ++w)
        REQUIRE(a.coordinator.public_data.windows[w] == b.coordinator.public_data.windows[w]);
    for (std::size_t r = 0; r < a.rounds.size(); ++r) {
        REQUIRE(a.rounds[r].distiller_loss == b.rounds[r].distiller_loss);
        for (std::size_t i = 0; i < cfg.n_clients; ++i)
            REQUIRE(a.rounds[r].clients[i].train_loss == b.rounds[r].clients[i].train_loss);
    }
}

TEST_CASE("masked-out values are never read: poisoning them changes nothing") {
    PartitionBundle bundle = small_bundle(66, 2, 4, 220);
    FederationConfig cfg = tiny_config(66, 2, 2, 0.5, 3);

    std::vector<ClientDataset> poisoned = bundle.clients;
    std::size_t poked = 0;
    for (auto& client : poisoned)
        for (std::size_t w = 0; w < client.windows.size(); ++w)
            for (std::size_t r = 0; r < client.windows[w].rows(); ++r)
                for (std::size_t c = 0; c < client.windows[w].cols(); ++c)
                    if (!client.masks[w](r, c)) {
                        client.windows[w](r, c) = 999.0;
                        ++poked;
                    }
    REQUIRE(poked > 0);

    const FederationResult clean = run_federation(bundle.public_data, bundle.clients, cfg);
    const FederationResult dirty = run_federation(bundle.public_data, poisoned, cfg);
    for (std::size_t i = 0; i < cfg.n_clients; ++i) {
        REQUIRE(clean.clients[i].imputer.net.params() ==
                dirty.clients[i].imputer.net.params());
        for (std::size_t s = 0; s < clean.clients[i].last_synthetic.size(); ++s)
            REQUIRE(clean.clients[i].last_synthetic[s] == dirty.clients[i].last_synthetic[s]);
    }
    REQUIRE(clean.coordinator.distiller.net.params() ==
            dirty.coordinator.distiller.net.params());
}

TEST_CASE("coordinator-bound messages carry no raw values and no exclusive channels") {
    PartitionBundle bundle = small_bundle(67, 3, 5, 320);
    FederationConfig cfg = tiny_config(67, 3, 2, 0.5, 4);

    MessageLog log;
    run_federation(bundle.public_data, bundle.clients, cfg, &bundle.oracle, &log);

    REQUIRE(log.contributions.size() == cfg.n_clients * cfg.rounds);
    const std::set<std::uint64_t> raw = bit_patterns(bundle.clients);
    for (const auto& contrib : log.contributions) {
        REQUIRE(contrib.windows.size() == cfg.synth_per_client);
        for (const auto& w : contrib.windows) {
            REQUIRE(w.cols() == bundle.n_common);
            for (double v : w.data()) {
                REQUIRE(std::isfinite(v));
                REQUIRE(raw.find(std::bit_cast<std::uint64_t>(v)) == raw.end());
            }
        }
    }
}

TEST_CASE("imputation_rmse matches a hand-computed case and degrades to NaN") {
    std::vector<Window> imputed = {Window(2, 2, 0.0)};
    std::vector<Window> truth = {Window(2, 2, 0.0)};
    std::vector<Mask> masks = {Mask::ones(2, 2)};
    masks[0](0, 0) = 0;
    masks[0](1, 1) = 0;
    imputed[0](0, 0) = 1.0;  // error 3
    truth[0](0, 0) = 4.0;
    imputed[0](1, 1) = 2.0;  // error 4
    truth[0](1, 1) = 6.0;
    imputed[0](0, 1) = 50.0;  // observed, ignored
    REQUIRE(imputation_rmse(imputed, masks, truth) ==
            Catch::Approx(std::sqrt((9.0 + 16.0) / 2.0)));

    REQUIRE(std::isnan(imputation_rmse(imputed, {Mask::ones(2, 2)}, truth)));
}

TEST_CASE("run_federation validates the client count") {
    PartitionBundle bundle = small_bundle(68);
    FederationConfig cfg = tiny_config(68, 3, 1, 0.5, 2);  // bundle only has 2 clients
    REQUIRE_THROWS_AS(run_federation(bundle.public_data, bundle.clients, cfg), Error);
}
