// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "flair/tape.hpp"
#include "flair/tensor.hpp"

namespace flair {

/// Diagonal Gaussian mixture over content factors for one sensitive group.
struct GroupGmm {
    Tensor means;    // [K x c]
    Tensor vars;     // [K x c], diagonal covariance entries, floored
    Tensor weights;  // [1 x K], mixing weights (not renormalized after the
                     //          fairness-modified update)
    int k() const { return means.rows(); }
    int dim() const { return means.cols(); }
};

/// Mixtures for both sensitive groups with aligned prototype indices.
struct FairGmmParams {
    GroupGmm neg;  // a = -1
    GroupGmm pos;  // a = +1
    int k() const { return neg.k(); }
    bool empty() const { return neg.means.size() == 0; }
    const GroupGmm& group(int a) const { return a == 1 ? pos : neg; }
};

constexpr double kVarFloor = 1e-4;

/// Negative mixture log likelihood plus the sum of mixing weights.
/// contents is [N x c]. Throws if all weights are zero.
double gmm_loglik_loss(const Tensor& contents, const GroupGmm& g);

/// Responsibilities as a [K x N] matrix; every column sums to 1. Computed
/// in log space, never raises on small densities.
Tensor posterior(const Tensor& contents, const GroupGmm& g);

struct EmResult {
    FairGmmParams params;
    int iterations = 0;
    double final_pi_delta = 0.0;
    double sum_pi_min = 1.0;  // smallest per-group weight sum seen during EM
    double sum_pi_max = 1.0;
};

/// Pooled k-means++ initialization so prototype index k means the same
/// thing in both groups: shared means, shared diagonal variance, uniform
/// weights.
FairGmmParams init_gmm_params(const Tensor& contents_neg, const Tensor& contents_pos, int k,
                              std::uint64_t seed);

/// The fairness-modified mixing-weight update: the group whose weight is
/// currently larger divides by N + lambda, the other by N - lambda.
double pi_update(double sum_gamma, int n, double lambda_fair, bool this_group_geq);

/// Permutes the positive group's components so that like indices point at
/// like prototypes (minimal total mean distance). Like-index comparisons
/// are only meaningful while this holds; group-specific EM updates erode
/// it over successive warm starts.
void align_components(FairGmmParams* params);

/// EM for both groups in lockstep. Each iteration: responsibilities for
/// both groups, then means, variances and the lambda-modified weights,
/// with weight comparisons taken against the other group's pre-update
/// value. Stops when the largest weight change is below tol. Warm-start
/// params are re-aligned across groups before iterating.
EmResult fair_em(const Tensor& contents_neg, const Tensor& contents_pos, int k,
                 double lambda_fair, double tol, int max_iter, std::uint64_t seed,
                 const FairGmmParams* warm_start = nullptr);

/// Sum over prototypes of |mean responsibility gap| between groups; in [0, 2].
double fair_loss_exact(const Tensor& contents_neg, const Tensor& contents_pos,
                       const FairGmmParams& params);

/// Sum over prototypes of |weight gap| between groups; the surrogate used
/// by the primal-dual loop.
double fair_loss_approx(const FairGmmParams& params);

struct ReconstructResult {
    Tensor c_tilde;  // [N x c], responsibility-weighted prototype means
    double l_rec;    // sum of Euclidean distances ||c_i - c_tilde_i||
};

ReconstructResult reconstruct(const Tensor& contents, const GroupGmm& g);

// ------------------------------------------------------------------
// Tape builders: mixture params are constants, gradients flow to the
// contents only (the encoder is trained through these paths while EM owns
// the mixture parameters).
// ------------------------------------------------------------------

/// [N x K] log weights: ln pi_k + ln N(c_i | mu_k, var_k).
Tape::Id gmm_log_weights_node(Tape& t, Tape::Id contents, const GroupGmm& g);

/// Mixture NLL plus weight sum; mean over rows when mean_over_rows.
Tape::Id gmm_nll_node(Tape& t, Tape::Id contents, const GroupGmm& g, bool mean_over_rows);

/// [N x K] responsibilities (softmax of the log weights).
Tape::Id posterior_node(Tape& t, Tape::Id contents, const GroupGmm& g);

/// [N x c] reconstruction gamma . mu from a posterior node.
Tape::Id reconstruct_node(Tape& t, Tape::Id gamma, const GroupGmm& g);

/// Mean Euclidean reconstruction distance (mean over rows when requested).
Tape::Id l_rec_node(Tape& t, Tape::Id contents, Tape::Id c_tilde, bool mean_over_rows);

/// Sum_k |colmean(gamma_pos) - colmean(gamma_neg)|.
Tape::Id fair_exact_node(Tape& t, Tape::Id gamma_neg, Tape::Id gamma_pos);

}  // namespace flair
