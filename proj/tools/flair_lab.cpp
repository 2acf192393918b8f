// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// flair-lab: dataset generation, training, evaluation, sweeps and the ERM
// baseline over the six-domain shifted benchmark.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "flair/harness.hpp"

namespace fs = std::filesystem;
using namespace flair;

namespace {

struct CliArgs {
    std::string config_path;
    std::string outdir;
    std::int64_t seed = -1;
    std::int64_t heldout = -2;  // -2 = not given, -1 = all
    std::string variant;
};

ExperimentConfig load_config(const CliArgs& args) {
    ExperimentConfig cfg =
        args.config_path.empty() ? ExperimentConfig{} : parse_config_file(args.config_path);
    if (!args.outdir.empty()) cfg.outdir = args.outdir;
    if (args.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(args.seed)};
    if (args.heldout >= 0) {
        cfg.rotate_all = false;
        cfg.heldout = static_cast<int>(args.heldout);
    } else if (args.heldout == -1) {
        cfg.rotate_all = true;
        cfg.heldout = -1;
    }
    if (!args.variant.empty()) cfg.variant = args.variant;
    cfg.validate();
    return cfg;
}

std::string cell_tag(int heldout, std::uint64_t seed) {
    return "_h" + std::to_string(heldout) + "_s" + std::to_string(seed);
}

int cmd_gen(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.outdir);
    for (std::uint64_t seed : cfg.seeds) {
        const Dataset ds = make_benchmark(seed, cfg.gen);
        const std::string path =
            (fs::path(cfg.outdir) / ("dataset_seed" + std::to_string(seed) + ".csv")).string();
        write_csv(ds, path);
        std::cout << "wrote " << path << " (" << ds.instances.size() << " instances)\n";
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    if (cfg.rotate_all || cfg.seeds.size() > 1) {
        // full protocol: leave-one-domain-out over the configured seeds
        const RunResult result = run_experiment(cfg);
        const auto written = emit_reports({result}, {}, cfg, cfg.outdir);
        std::cout << "ran " << result.cells.size() << " cells (" << result.failed_cells
                  << " failed), wrote " << written.size() << " files to " << cfg.outdir << "\n";
        return result.failed_cells == 0 ? 0 : 2;
    }
    // single cell: train and keep the checkpoint for later eval
    fs::create_directories(cfg.outdir);
    Dataset ds = make_benchmark(cfg.seeds[0], cfg.gen);
    ds.heldout = cfg.heldout;
    TrainerConfig tcfg = cfg.trainer;
    tcfg.seed = cfg.seeds[0];
    apply_variant(&tcfg, cfg.variant);
    const TrainResult tr = train(ds, tcfg);
    const std::string tag = cell_tag(cfg.heldout, cfg.seeds[0]);
    save_checkpoint(tr.model, (fs::path(cfg.outdir) / ("checkpoint" + tag + ".txt")).string());
    write_history_csv(tr.history, (fs::path(cfg.outdir) / ("history" + tag + ".csv")).string());
    if (!tr.model.gmm.empty())
        write_prototypes_csv(tr.model.gmm,
                             (fs::path(cfg.outdir) / ("prototypes" + tag + ".csv")).string());
    std::cout << "trained " << tr.steps_run << " steps"
              << (tr.plateaued ? " (plateaued)" : "") << ", checkpoint" << tag << ".txt written\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
    if (cfg.rotate_all || cfg.seeds.size() > 1)
        throw ConfigError("eval: needs a single --heldout and --seed");
    const std::string tag = cell_tag(cfg.heldout, cfg.seeds[0]);
    const std::string ckpt = (fs::path(cfg.outdir) / ("checkpoint" + tag + ".txt")).string();
    const ModelParams model = load_checkpoint(ckpt);
    Dataset ds = make_benchmark(cfg.seeds[0], cfg.gen);
    ds.heldout = cfg.heldout;
    const auto records = make_records(ds.test_split(), [&model](const Instance& inst) {
        const Prediction p = predict(inst.x, inst.a, model);
        return std::make_pair(p.label, p.score);
    });
    const MetricsReport report = evaluate(records, cfg.metric_k);
    const std::string report_path = (fs::path(cfg.outdir) / ("report" + tag + ".json")).string();
    {
        std::ofstream f(report_path, std::ios::binary);
        f << report_to_json(report, config_echo_map(cfg));
    }
    std::ostringstream emb;
    const int cdim = cfg.trainer.content_dim;
    emb << "split,domain,a,y";
    for (int j = 0; j < cdim; ++j) emb << ",c" << j;
    for (int j = 0; j < cdim; ++j) emb << ",ctilde" << j;
    emb << "\n";
    char buf[64];
    for (const Instance& inst : ds.instances) {
        const Embedding e = embed(inst.x, inst.a, model);
        emb << (inst.domain == ds.heldout ? "test" : "train") << ',' << inst.domain << ','
            << inst.a << ',' << inst.y;
        for (double v : e.content) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            emb << ',' << buf;
        }
        for (double v : e.fair_content) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            emb << ',' << buf;
        }
        emb << "\n";
    }
    {
        std::ofstream f((fs::path(cfg.outdir) / ("embeddings" + tag + ".csv")).string(),
                        std::ios::binary);
        f << emb.str();
    }
    std::cout << "accuracy " << report.avg.accuracy_pct << "%, delta_dp " << report.avg.delta_dp
              << ", auc_fair " << report.avg.auc_fair << ", consistency "
              << report.avg.consistency << "\n"
              << "wrote report" << tag << ".json\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    const auto rows = sweep(cfg);
    const auto written = emit_reports({}, rows, cfg, cfg.outdir);
    std::cout << "swept " << cfg.sweep_param << " over " << rows.size() << " values, wrote "
              << written.size() << " files to " << cfg.outdir << "\n";
    return 0;
}

int cmd_baseline(const ExperimentConfig& cfg) {
    const RunResult result = run_baseline_erm(cfg);
    const auto written = emit_reports({result}, {}, cfg, cfg.outdir);
    std::cout << "ran " << result.cells.size() << " baseline cells (" << result.failed_cells
              << " failed), wrote " << written.size() << " files to " << cfg.outdir << "\n";
    return result.failed_cells == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairness-aware invariant representation lab"};
    app.require_subcommand(1);

    CliArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "flat key=value config file");
        sub->add_option("--out", args.outdir, "output directory");
        sub->add_option("--seed", args.seed, "single seed (overrides config seeds)");
        sub->add_option("--heldout", args.heldout, "held-out domain id (-1 = all)");
        sub->add_option("--variant", args.variant, "full|no_g|no_T|no_Rfair|fixed_duals");
    };
    CLI::App* gen = app.add_subcommand("gen", "generate benchmark dataset CSVs");
    CLI::App* train_cmd = app.add_subcommand("train", "train (single cell or full protocol)");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained checkpoint");
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep lambda2, K or variant");
    CLI::App* baseline = app.add_subcommand("baseline", "ERM baseline protocol");
    for (CLI::App* sub : {gen, train_cmd, eval_cmd, sweep_cmd, baseline}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // bad usage is a config error
    }

    try {
        const ExperimentConfig cfg = load_config(args);
        if (gen->parsed()) return cmd_gen(cfg);
        if (train_cmd->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg);
        if (sweep_cmd->parsed()) return cmd_sweep(cfg);
        if (baseline->parsed()) return cmd_baseline(cfg);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
