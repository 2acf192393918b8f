// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flair/datagen.hpp"
#include "flair/metrics.hpp"
#include "flair/trainer.hpp"

namespace flair {

/// Bad configuration (maps to CLI exit code 1).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentConfig {
    GenParams gen;
    TrainerConfig trainer;
    int heldout = -1;        // domain id; -1 with rotate_all=true means "all"
    bool rotate_all = true;
    int metric_k = 5;
    std::string outdir = "out";
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string variant = "full";  // full|no_g|no_T|no_Rfair|fixed_duals
    std::string sweep_param;       // lambda2|K|variant
    std::vector<std::string> sweep_values;
    bool dump_all_embeddings = false;

    void validate() const;
};

/// Flat "key = value" files; '#' starts a comment; unknown keys are errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Applies a named ablation variant to trainer flags.
void apply_variant(TrainerConfig* cfg, const std::string& variant);

// ---------------- ERM baseline ----------------

struct ErmModel {
    Mlp net;  // x -> 2 logits
};

ErmModel train_erm(const Dataset& data, const TrainerConfig& cfg);
Prediction erm_predict(const std::vector<double>& x, const ErmModel& model);

// ---------------- experiment protocol ----------------

struct EmbeddingRow {
    std::string split;  // "train" or "test"
    int domain = 0, a = -1, y = 0;
    std::vector<double> content;
    std::vector<double> fair_content;
};

struct CellResult {
    int heldout = -1;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsReport report;
    std::vector<StepDiagnostics> history;       // empty for ERM cells
    FairGmmParams gmm;                          // prototype dump source
    std::vector<EmbeddingRow> embeddings;       // filled for the first cell
    int quartet_relaxations = 0;
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;  // population formula over seeds
};

struct RunResult {
    std::string name;
    std::vector<CellResult> cells;
    std::map<int, std::map<std::string, Stat>> per_heldout;  // metric -> stat
    std::map<std::string, Stat> overall;                     // over all ok cells
    int failed_cells = 0;
};

/// Leave-one-domain-out protocol: for every held-out domain and seed,
/// generate the benchmark, train on the remaining domains, evaluate on the
/// held-out one. Cell failures are recorded and the run continues.
RunResult run_experiment(const ExperimentConfig& cfg);
RunResult run_baseline_erm(const ExperimentConfig& cfg);

struct SweepRow {
    std::string param;
    std::string value;
    RunResult result;
};

/// One run per sweep value; param is lambda2, K or variant.
std::vector<SweepRow> sweep(const ExperimentConfig& cfg);

/// Writes report JSON, per-cell history CSVs, prototype dumps, embedding
/// dumps and (for sweeps) the accuracy/fairness trade-off CSV, plus a
/// manifest with content hashes. Returns the written paths.
std::vector<std::string> emit_reports(const std::vector<RunResult>& results,
                                      const std::vector<SweepRow>& sweep_rows,
                                      const ExperimentConfig& cfg, const std::string& outdir);

std::string run_result_to_json(const RunResult& r, const ExperimentConfig& cfg);

/// FNV-1a 64-bit content hash, hex encoded (manifest entries).
std::string fnv1a_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

std::map<std::string, std::string> config_echo_map(const ExperimentConfig& cfg);

}  // namespace flair
