// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flair/adam.hpp"
#include "flair/datagen.hpp"
#include "flair/disentangle.hpp"
#include "flair/fairgmm.hpp"
#include "flair/nn.hpp"

namespace flair {

struct TrainerConfig {
    double primal_lr = 1e-3;     // Adam step size
    double dual_step_inv = 0.01;   // ascent rate on the invariance multiplier
    double dual_step_fair = 0.01;  // ascent rate on the fairness multiplier
    double margin_inv = 0.05;
    double margin_fair = 0.05;
    double lambda_inv_init = 1.0;
    double lambda_fair_init = 0.5;
    int prototypes = 3;          // K
    int quartets_per_batch = 64; // Q
    int max_steps = 2000;
    int em_max_iter = 30;
    double em_tol = 1e-5;
    bool em_warm_start = true;  // warm-started params are re-aligned across
                                // groups every step; cold re-init is the
                                // fallback reading
    int content_dim = 8;
    int style_dim = 4;
    int hidden = 32;
    int classifier_hidden = 16;
    std::uint64_t seed = 0;
    // ablations
    bool no_g = false;        // drop the fair representation learner
    bool no_t = false;        // drop the transformation model
    bool no_rfair = false;    // keep the mixtures but drop the fairness term
    bool fixed_duals = false; // never move the multipliers
    // plateau stop: relative change of windowed means below this over the
    // window means converged
    double plateau_rel = 1e-4;
    int plateau_window = 20;

    void validate() const;
};

struct DualState;
struct ModelParams;

/// Called after every completed step with the current model and duals.
using StepObserver = std::function<void(int step, const ModelParams&, const DualState&)>;

/// Lagrange multipliers; projected to stay nonnegative.
struct DualState {
    double lambda_inv = 0.0;
    double lambda_fair = 0.0;
};

/// Projected dual ascent given current constraint values.
DualState dual_update(const DualState& duals, double r_inv_value, double rfair_hat,
                      const TrainerConfig& cfg);

struct ModelParams {
    Mlp content;     // x -> c
    Mlp style;       // x -> s
    Mlp decoder;     // (c, s) -> x_hat
    Mlp classifier;  // representation -> 2 logits
    FairGmmParams gmm;

    EncoderParams encoder() const { return EncoderParams{content, style, decoder}; }
};

ModelParams init_model(int feature_dim, const TrainerConfig& cfg);

/// Per-step scalar diagnostics; also the training history CSV row.
struct StepDiagnostics {
    int step = 0;
    double r_cls = 0.0;
    double r_inv = 0.0;
    double rfair_hat = 0.0;
    double rfair_exact = 0.0;
    double lambda_inv = 0.0;
    double lambda_fair = 0.0;
    double sum_pi_pos = 0.0;
    double sum_pi_neg = 0.0;
};

/// The classification loss split into its parts, per sensitive group, for
/// recomputation oracles. Values are means over quartets; gmm terms include
/// the weight-sum constant once per group.
struct RClsComponents {
    double d_neg = 0.0, d_pos = 0.0;        // L1 transform-alignment terms
    double gmm_neg = 0.0, gmm_pos = 0.0;    // mixture NLL + weight sum
    double rec_neg = 0.0, rec_pos = 0.0;    // Euclidean reconstruction
    double ce_neg = 0.0, ce_pos = 0.0;      // cross entropy
    double total() const {
        return d_neg + d_pos + gmm_neg + gmm_pos + rec_neg + rec_pos + ce_neg + ce_pos;
    }
};

/// Value-only classification loss on a batch (mixture params held fixed).
RClsComponents r_cls(const QuartetBatch& batch, const ModelParams& model,
                     const TrainerConfig& cfg);

struct TrainResult {
    ModelParams model;
    std::vector<StepDiagnostics> history;
    int steps_run = 0;
    bool plateaued = false;
    int quartet_relaxations = 0;
    DualState duals;
};

/// Raised when a step produces a non-finite loss or gradient; carries the
/// last step that completed cleanly so callers can recover that checkpoint.
struct TrainingAborted : std::runtime_error {
    int last_good_step;
    TrainingAborted(const std::string& what, int step)
        : std::runtime_error(what), last_good_step(step) {}
};

TrainResult train(const Dataset& data, const TrainerConfig& cfg,
                  const StepObserver& observer = {});

struct Prediction {
    int label = 0;
    double score = 0.5;  // P(y = 1), in (0, 1)
};

/// Full pipeline: content -> (fair reconstruction when mixtures exist) ->
/// classifier. The sensitive attribute selects the group mixture.
Prediction predict(const std::vector<double>& x, int a, const ModelParams& model);

/// Content and fair-content vectors for one instance (embedding dumps).
struct Embedding {
    std::vector<double> content;
    std::vector<double> fair_content;  // equals content when no mixtures
};
Embedding embed(const std::vector<double>& x, int a, const ModelParams& model);

// ---------------- checkpoint io ----------------
// Text format: header line, then one "tensor <name> <rank> <dims...>" line
// followed by a line of %.17g values per tensor. Key order is fixed:
// content.*, style.*, decoder.*, classifier.* (w0 b0 w1 b1 ...), then
// gmm.neg.mu/var/pi, gmm.pos.mu/var/pi when mixtures are present.
void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

void write_history_csv(const std::vector<StepDiagnostics>& history, const std::string& path);

/// Per-group prototype dump: group,k,pi,mu0..,sigma0.. (CSV).
void write_prototypes_csv(const FairGmmParams& gmm, const std::string& path);

}  // namespace flair
