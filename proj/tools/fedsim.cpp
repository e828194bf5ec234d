// fedsim: federated training simulator with conflict-aware fair averaging.
//
// Subcommands:
//   run           train with fedavg or fedfv across seeds, write CSV/JSONL
//   ablate-order  compare loss_ascending / random / reverse target orders
//   theory        randomized bound and convergence checks
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 theory failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfv/experiment.hpp"

namespace {

struct CliOverrides {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string algorithm;
    std::string order_mode;
    double alpha = -1.0;
    int tau = -1;
    int rounds = -1;
    double sample_frac = -1.0;
    double dropout = -1.0;
    std::string out_dir;
    bool dump_data = false;
};

fedfv::ExperimentConfig build_config(const CliOverrides& o) {
    fedfv::ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = fedfv::load_config_file(o.config_path);
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (!o.algorithm.empty()) fedfv::apply_config_entry(cfg, "experiment", "algorithm", o.algorithm);
    if (!o.order_mode.empty()) fedfv::apply_config_entry(cfg, "experiment", "order_mode", o.order_mode);
    if (o.alpha >= 0.0) cfg.alpha = o.alpha;
    if (o.tau >= 0) cfg.tau = o.tau;
    if (o.rounds >= 0) cfg.rounds = o.rounds;
    if (o.sample_frac >= 0.0) {
        cfg.sample_frac = o.sample_frac;
        cfg.sample_count = 0;
    }
    if (o.dropout >= 0.0) cfg.dropout = o.dropout;
    if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
    fedfv::validate(cfg);
    return cfg;
}

void dump_federation(const fedfv::ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fedfv::FederationSpec fed = cfg.federation;
    fed.seed = cfg.seeds.front();
    const fedfv::Dataset data = fedfv::synth_classification(
        fed.num_classes, fed.examples_per_class, fed.feature_dim, fed.cluster_spread, fed.seed);
    const auto clients = fedfv::shard_partition(data, fed);
    const fs::path dir = fs::path(cfg.output_dir) / "data";
    fs::create_directories(dir);
    for (const auto& cd : clients) {
        std::ofstream tr(dir / ("client_" + std::to_string(cd.client_id) + "_train.txt"));
        fedfv::write_dataset_text(tr, cd.train_features, cd.train_labels);
        std::ofstream te(dir / ("client_" + std::to_string(cd.client_id) + "_test.txt"));
        fedfv::write_dataset_text(te, cd.test_features, cd.test_labels);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated fair-averaging simulator"};
    app.require_subcommand(1);

    CliOverrides o;
    std::uint64_t theory_seed = 1;
    int theory_count = 1000;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config_path, "config file (key = value with [sections])");
        cmd->add_option("--seed", o.seeds, "run seed; repeat for multiple seeds");
        cmd->add_option("--alpha", o.alpha, "fraction of highest-loss clients kept unprojected");
        cmd->add_option("--tau", o.tau, "history window for update-vs-history mitigation");
        cmd->add_option("--rounds", o.rounds, "communication rounds");
        cmd->add_option("--sample-frac", o.sample_frac, "fraction of clients sampled per round");
        cmd->add_option("--dropout", o.dropout, "per-client dropout probability");
        cmd->add_option("--out", o.out_dir, "output directory");
    };

    CLI::App* run = app.add_subcommand("run", "train across seeds and persist metrics");
    add_common(run);
    run->add_option("--algorithm", o.algorithm, "fedavg | fedfv");
    run->add_option("--order-mode", o.order_mode, "loss_ascending | random | reverse");
    run->add_flag("--dump-data", o.dump_data, "also dump the federation datasets as text");

    CLI::App* ablate = app.add_subcommand("ablate-order", "compare projection target orders");
    add_common(ablate);

    CLI::App* theory = app.add_subcommand("theory", "randomized bound and convergence checks");
    theory->add_option("--seed", theory_seed, "sweep seed");
    theory->add_option("--count", theory_count, "number of conflict ensembles");
    theory->add_option("--out", o.out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const fedfv::ExperimentConfig cfg = build_config(o);
            if (o.dump_data) dump_federation(cfg);
            const fedfv::ExperimentSummary s = fedfv::run_experiment(cfg);
            std::cout.precision(10);
            std::cout << "seeds: " << cfg.seeds.size() << "\n"
                      << "final accuracy mean: " << s.acc_mean.mean << " +- " << s.acc_mean.std_dev
                      << "\n"
                      << "final accuracy std:  " << s.acc_std.mean << " +- " << s.acc_std.std_dev
                      << "\n"
                      << "final worst 5%:      " << s.worst5.mean << " +- " << s.worst5.std_dev << "\n"
                      << "final best 5%:       " << s.best5.mean << " +- " << s.best5.std_dev << "\n"
                      << "outputs in: " << cfg.output_dir << "\n";
        } else if (ablate->parsed()) {
            const fedfv::ExperimentConfig cfg = build_config(o);
            const fedfv::AblationResult r = fedfv::run_order_ablation(cfg);
            std::cout.precision(10);
            for (const auto& row : r.rows) {
                const char* name = row.mode == fedfv::OrderMode::LossAscending
                                       ? "loss_ascending"
                                       : row.mode == fedfv::OrderMode::Random ? "random" : "reverse";
                std::cout << name << ": final std " << row.summary.acc_std.mean << " +- "
                          << row.summary.acc_std.std_dev << "\n";
            }
            std::cout << "outputs in: " << cfg.output_dir << "\n";
        } else if (theory->parsed()) {
            std::string report_path;
            if (!o.out_dir.empty()) {
                std::filesystem::create_directories(o.out_dir);
                report_path = (std::filesystem::path(o.out_dir) / "theory.jsonl").string();
            }
            const fedfv::TheorySuiteReport r =
                fedfv::run_theory_suite(theory_seed, theory_count, report_path);
            std::cout << "ensembles checked: " << r.ensembles_checked << " (skipped "
                      << r.ensembles_skipped << ")\n"
                      << "bound failures:    " << r.bound_failures << "\n"
                      << "trajectories:      " << r.trajectories << "\n"
                      << "descent failures:  " << r.descent_failures << "\n"
                      << "endpoint failures: " << r.endpoint_failures << "\n"
                      << "alignment premise: " << r.alignment_premise_held << "/"
                      << r.alignment_checked << "\n";
            if (r.failures() > 0) return 3;
        }
    } catch (const fedfv::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
