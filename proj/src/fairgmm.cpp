// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/fairgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "flair/rng.hpp"

namespace flair {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_gauss_diag(const Tensor& contents, int i, const GroupGmm& g, int k) {
    double s = 0.0;
    for (int j = 0; j < g.dim(); ++j) {
        const double v = g.vars.at(k, j);
        const double d = contents.at(i, j) - g.means.at(k, j);
        s += kLog2Pi + std::log(v) + d * d / v;
    }
    return -0.5 * s;
}

// [N x K] log(pi_k) + logN; -inf where pi_k == 0
std::vector<double> log_weight_matrix(const Tensor& contents, const GroupGmm& g) {
    const int n = contents.rows(), k = g.k();
    std::vector<double> lw(static_cast<std::size_t>(n) * k);
    for (int kk = 0; kk < k; ++kk) {
        const double pi = g.weights.at(0, kk);
        const double lp = pi > 0.0 ? std::log(pi) : -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            lw[static_cast<std::size_t>(i) * k + kk] = lp + log_gauss_diag(contents, i, g, kk);
    }
    return lw;
}

void check_group(const Tensor& contents, const GroupGmm& g, const char* op) {
    if (contents.rows() < 1) throw std::invalid_argument(std::string(op) + ": empty content set");
    if (contents.cols() != g.dim())
        throw std::invalid_argument(std::string(op) + ": content dim " +
                                    std::to_string(contents.cols()) + " vs mixture dim " +
                                    std::to_string(g.dim()));
}

}  // namespace

double gmm_loglik_loss(const Tensor& contents, const GroupGmm& g) {
    check_group(contents, g, "gmm_loglik_loss");
    double wsum = 0.0;
    for (int k = 0; k < g.k(); ++k) wsum += g.weights.at(0, k);
    if (wsum <= 0.0)
        throw std::invalid_argument("gmm_loglik_loss: degenerate mixture, all weights zero");
    const int n = contents.rows(), k = g.k();
    const auto lw = log_weight_matrix(contents, g);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int kk = 0; kk < k; ++kk) mx = std::max(mx, lw[static_cast<std::size_t>(i) * k + kk]);
        double z = 0.0;
        for (int kk = 0; kk < k; ++kk) z += std::exp(lw[static_cast<std::size_t>(i) * k + kk] - mx);
        total -= mx + std::log(z);
    }
    return total + wsum;
}

Tensor posterior(const Tensor& contents, const GroupGmm& g) {
    check_group(contents, g, "posterior");
    const int n = contents.rows(), k = g.k();
    const auto lw = log_weight_matrix(contents, g);
    Tensor gamma = Tensor::zeros(k, n);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int kk = 0; kk < k; ++kk) mx = std::max(mx, lw[static_cast<std::size_t>(i) * k + kk]);
        double z = 0.0;
        for (int kk = 0; kk < k; ++kk) z += std::exp(lw[static_cast<std::size_t>(i) * k + kk] - mx);
        for (int kk = 0; kk < k; ++kk)
            gamma.at(kk, i) = std::exp(lw[static_cast<std::size_t>(i) * k + kk] - mx) / z;
    }
    return gamma;
}

FairGmmParams init_gmm_params(const Tensor& contents_neg, const Tensor& contents_pos, int k,
                              std::uint64_t seed) {
    if (contents_neg.cols() != contents_pos.cols())
        throw std::invalid_argument("init_gmm_params: content dims differ");
    const int dim = contents_neg.cols();
    const int n = contents_neg.rows() + contents_pos.rows();
    Tensor pooled = Tensor::zeros(n, dim);
    for (int i = 0; i < contents_neg.rows(); ++i)
        for (int j = 0; j < dim; ++j) pooled.at(i, j) = contents_neg.at(i, j);
    for (int i = 0; i < contents_pos.rows(); ++i)
        for (int j = 0; j < dim; ++j) pooled.at(contents_neg.rows() + i, j) = contents_pos.at(i, j);

    // k-means++ seeding on the pooled contents
    Rng rng(Rng::mix(seed, 0x6b6d7070ULL));
    Tensor means = Tensor::zeros(k, dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    int first = rng.uniform_int(0, n - 1);
    for (int j = 0; j < dim; ++j) means.at(0, j) = pooled.at(first, j);
    for (int kk = 1; kk < k; ++kk) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double d = pooled.at(i, j) - means.at(kk - 1, j);
                s += d * d;
            }
            d2[i] = std::min(d2[i], s);
            total += d2[i];
        }
        int chosen = n - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) { chosen = i; break; }
            }
        } else {
            chosen = rng.uniform_int(0, n - 1);
        }
        for (int j = 0; j < dim; ++j) means.at(kk, j) = pooled.at(chosen, j);
    }

    // shared diagonal variance from the pooled spread
    Tensor vars = Tensor::zeros(k, dim);
    for (int j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += pooled.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = pooled.at(i, j) - mean;
            var += d * d;
        }
        var = std::max(var / n, kVarFloor);
        for (int kk = 0; kk < k; ++kk) vars.at(kk, j) = var;
    }

    GroupGmm shared;
    shared.means = means;
    shared.vars = vars;
    shared.weights = Tensor::full(1, k, 1.0 / k);
    FairGmmParams params;
    params.neg = shared;
    params.pos = shared;
    return params;
}

double pi_update(double sum_gamma, int n, double lambda_fair, bool this_group_geq) {
    const double denom = this_group_geq ? n + lambda_fair : n - lambda_fair;
    if (denom <= 0.0)
        throw std::invalid_argument("pi_update: negative denominator, lambda " +
                                    std::to_string(lambda_fair) + " >= group size " +
                                    std::to_string(n));
    return sum_gamma / denom;
}

void align_components(FairGmmParams* params) {
    const int k = params->k();
    if (k < 2 || k > 8) return;  // factorial search; plenty for desk-scale K
    const int dim = params->neg.dim();
    std::vector<int> perm(k), best(k);
    for (int i = 0; i < k; ++i) perm[i] = i;
    best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    // pair live components with live ones; a dead component's mean is stale
    // and would otherwise hijack the match
    constexpr double kLiveWeight = 0.01;
    constexpr double kDeadMismatch = 1e6;
    auto live = [](const GroupGmm& g, int i) { return g.weights.at(0, i) > kLiveWeight; };
    do {
        double cost = 0.0;
        for (int i = 0; i < k; ++i) {
            if (live(params->neg, i) != live(params->pos, perm[i])) cost += kDeadMismatch;
            for (int j = 0; j < dim; ++j) {
                const double d = params->pos.means.at(perm[i], j) - params->neg.means.at(i, j);
                cost += d * d;
            }
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    GroupGmm reordered = params->pos;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < dim; ++j) {
            reordered.means.at(i, j) = params->pos.means.at(best[i], j);
            reordered.vars.at(i, j) = params->pos.vars.at(best[i], j);
        }
        reordered.weights.at(0, i) = params->pos.weights.at(0, best[i]);
    }
    params->pos = std::move(reordered);
}

EmResult fair_em(const Tensor& contents_neg, const Tensor& contents_pos, int k,
                 double lambda_fair, double tol, int max_iter, std::uint64_t seed,
                 const FairGmmParams* warm_start) {
    if (contents_neg.rows() == 0 || contents_pos.rows() == 0)
        throw std::invalid_argument("fair_em: empty sensitive group");
    if (contents_neg.rows() <= k || contents_pos.rows() <= k)
        throw std::invalid_argument("fair_em: need more than K=" + std::to_string(k) +
                                    " contents per group, have " +
                                    std::to_string(contents_neg.rows()) + " / " +
                                    std::to_string(contents_pos.rows()));
    if (lambda_fair >= std::min(contents_neg.rows(), contents_pos.rows()))
        throw std::invalid_argument("fair_em: lambda " + std::to_string(lambda_fair) +
                                    " >= smallest group size (negative denominator)");

    EmResult res;
    if (warm_start && !warm_start->empty() && warm_start->k() == k) {
        res.params = *warm_start;
        align_components(&res.params);
    } else {
        res.params = init_gmm_params(contents_neg, contents_pos, k, seed);
    }

    const Tensor* contents[2] = {&contents_neg, &contents_pos};
    GroupGmm* groups[2] = {&res.params.neg, &res.params.pos};
    const int dim = contents_neg.cols();

    for (int iter = 0; iter < max_iter; ++iter) {
        Tensor gammas[2];
        for (int gi = 0; gi < 2; ++gi) gammas[gi] = posterior(*contents[gi], *groups[gi]);

        const Tensor pi_old[2] = {groups[0]->weights, groups[1]->weights};
        double delta = 0.0;
        for (int gi = 0; gi < 2; ++gi) {
            const Tensor& c = *contents[gi];
            const Tensor& gamma = gammas[gi];
            GroupGmm& g = *groups[gi];
            const int n = c.rows();
            double sum_pi = 0.0;
            for (int kk = 0; kk < k; ++kk) {
                double nk = 0.0;
                for (int i = 0; i < n; ++i) nk += gamma.at(kk, i);
                if (nk > 1e-12) {
                    for (int j = 0; j < dim; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < n; ++i) s += gamma.at(kk, i) * c.at(i, j);
                        g.means.at(kk, j) = s / nk;
                    }
                    for (int j = 0; j < dim; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < n; ++i) {
                            const double d = c.at(i, j) - g.means.at(kk, j);
                            s += gamma.at(kk, i) * d * d;
                        }
                        g.vars.at(kk, j) = std::max(s / nk, kVarFloor);
                    }
                }  // dead component keeps previous mean/var
                const bool geq = pi_old[gi].at(0, kk) >= pi_old[1 - gi].at(0, kk);
                const double next = pi_update(nk, n, lambda_fair, geq);
                delta = std::max(delta, std::fabs(next - pi_old[gi].at(0, kk)));
                g.weights.at(0, kk) = next;
                sum_pi += next;
            }
            res.sum_pi_min = std::min(res.sum_pi_min, sum_pi);
            res.sum_pi_max = std::max(res.sum_pi_max, sum_pi);
        }
        res.iterations = iter + 1;
        res.final_pi_delta = delta;
        if (delta < tol) break;
    }
    return res;
}

double fair_loss_exact(const Tensor& contents_neg, const Tensor& contents_pos,
                       const FairGmmParams& params) {
    if (contents_neg.rows() == 0 || contents_pos.rows() == 0)
        throw std::invalid_argument("fair_loss_exact: empty sensitive group");
    const Tensor gn = posterior(contents_neg, params.neg);
    const Tensor gp = posterior(contents_pos, params.pos);
    double loss = 0.0;
    for (int k = 0; k < params.k(); ++k) {
        double mn = 0.0, mp = 0.0;
        for (int i = 0; i < gn.cols(); ++i) mn += gn.at(k, i);
        for (int i = 0; i < gp.cols(); ++i) mp += gp.at(k, i);
        loss += std::fabs(mp / gp.cols() - mn / gn.cols());
    }
    return loss;
}

double fair_loss_approx(const FairGmmParams& params) {
    double loss = 0.0;
    for (int k = 0; k < params.k(); ++k)
        loss += std::fabs(params.neg.weights.at(0, k) - params.pos.weights.at(0, k));
    return loss;
}

ReconstructResult reconstruct(const Tensor& contents, const GroupGmm& g) {
    check_group(contents, g, "reconstruct");
    const Tensor gamma = posterior(contents, g);
    const int n = contents.rows(), dim = g.dim(), k = g.k();
    ReconstructResult res;
    res.c_tilde = Tensor::zeros(n, dim);
    res.l_rec = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < dim; ++j)
                res.c_tilde.at(i, j) += gamma.at(kk, i) * g.means.at(kk, j);
        double s = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double d = contents.at(i, j) - res.c_tilde.at(i, j);
            s += d * d;
        }
        res.l_rec += std::sqrt(s);
    }
    return res;
}

// ---------------------------------------------------------------- tape side

Tape::Id gmm_log_weights_node(Tape& t, Tape::Id contents, const GroupGmm& g) {
    const int k = g.k(), dim = g.dim();
    std::vector<Tape::Id> cols;
    cols.reserve(k);
    std::vector<double> log_pi(k);
    for (int kk = 0; kk < k; ++kk) {
        const double pi = g.weights.at(0, kk);
        log_pi[kk] = pi > 0.0 ? std::log(pi) : -745.0;  // effectively -inf, keeps tape finite
        std::vector<double> mu(dim), inv_var(dim);
        double log_norm = 0.0;
        for (int j = 0; j < dim; ++j) {
            mu[j] = g.means.at(kk, j);
            const double v = g.vars.at(kk, j);
            inv_var[j] = 1.0 / v;
            log_norm += kLog2Pi + std::log(v);
        }
        Tape::Id centered = t.sub_row(contents, t.constant(Tensor::row(mu)));
        Tape::Id maha = t.row_sum(t.mul_row(t.square(centered), t.constant(Tensor::row(inv_var))));
        cols.push_back(t.add_const(t.scale(maha, -0.5), -0.5 * log_norm + log_pi[kk]));
    }
    return t.hstack(cols);
}

Tape::Id gmm_nll_node(Tape& t, Tape::Id contents, const GroupGmm& g, bool mean_over_rows) {
    double wsum = 0.0;
    for (int k = 0; k < g.k(); ++k) wsum += g.weights.at(0, k);
    const int n = t.value(contents).rows();
    Tape::Id lse = t.logsumexp_rows(gmm_log_weights_node(t, contents, g));
    Tape::Id nll = t.scale(t.sum(lse), mean_over_rows ? -1.0 / n : -1.0);
    return t.add_const(nll, wsum);
}

Tape::Id posterior_node(Tape& t, Tape::Id contents, const GroupGmm& g) {
    return t.softmax_rows(gmm_log_weights_node(t, contents, g));
}

Tape::Id reconstruct_node(Tape& t, Tape::Id gamma, const GroupGmm& g) {
    return t.matmul(gamma, t.constant(g.means));
}

Tape::Id l_rec_node(Tape& t, Tape::Id contents, Tape::Id c_tilde, bool mean_over_rows) {
    const int n = t.value(contents).rows();
    Tape::Id norms = t.sqrt_op(t.row_sum(t.square(t.sub(contents, c_tilde))));
    Tape::Id total = t.sum(norms);
    return mean_over_rows ? t.scale(total, 1.0 / n) : total;
}

Tape::Id fair_exact_node(Tape& t, Tape::Id gamma_neg, Tape::Id gamma_pos) {
    Tape::Id diff = t.sub(t.col_mean(gamma_pos), t.col_mean(gamma_neg));
    return t.sum(t.abs_op(diff));
}

}  // namespace flair
