#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedtdd/experiment.hpp"

namespace {

struct Overrides {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::size_t threads = 0;

    void apply(fedtdd::ExperimentConfig& cfg) const {
        if (seed_set) {
            cfg.seed = seed;
            cfg.seed_set = true;
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (threads > 0) cfg.fed.threads = threads;
    }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--seed", ov.seed, "Override run.seed")->each([&](const std::string&) {
        ov.seed_set = true;
    });
    cmd->add_option("--out-dir", ov.out_dir, "Override run.out_dir");
    cmd->add_option("--threads", ov.threads, "Override run.threads");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated time-series distillation simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string spec_path;
    std::string out_csv;
    Overrides ov;

    CLI::App* run = app.add_subcommand("run", "Run an experiment from a config file");
    run->add_option("config", config_path, "Experiment config")->required();
    add_override_flags(run, ov);

    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic source series");
    gen->add_option("spec", spec_path, "Generator spec")->required();
    gen->add_option("out", out_csv, "Output CSV path")->required();
    gen->add_option("--seed", ov.seed, "Override the spec seed")->each([&](const std::string&) {
        ov.seed_set = true;
    });

    CLI::App* validate = app.add_subcommand("validate", "Check a config and echo it back");
    validate->add_option("config", config_path, "Experiment config")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            fedtdd::ExperimentConfig cfg = fedtdd::load_config(config_path);
            ov.apply(cfg);
            return fedtdd::run_experiment(cfg);
        }
        if (gen->parsed()) {
            fedtdd::GenSpec spec = fedtdd::load_gen_spec(spec_path);
            if (ov.seed_set) spec.seed = ov.seed;
            fedtdd::gen_data(spec, out_csv);
            return 0;
        }
        fedtdd::ExperimentConfig cfg = fedtdd::load_config(config_path);
        std::cout << fedtdd::serialize_config(cfg);
        std::cout << "OK\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
