// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flair/fairgmm.hpp"
#include "flair/rng.hpp"

using namespace flair;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Tensor blob_data(int n, int dim, const std::vector<std::vector<double>>& centers,
                 const std::vector<double>& weights, double sigma, Rng& rng) {
    Tensor out = Tensor::zeros(n, dim);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform(), acc = 0.0;
        std::size_t c = 0;
        for (; c < weights.size(); ++c) {
            acc += weights[c];
            if (u < acc) break;
        }
        if (c == weights.size()) c = weights.size() - 1;
        for (int j = 0; j < dim; ++j) out.at(i, j) = centers[c][j] + sigma * rng.normal();
    }
    return out;
}

std::vector<std::vector<double>> spread_centers(int k, int dim, Rng& rng, double scale = 4.0) {
    std::vector<std::vector<double>> centers(k, std::vector<double>(dim));
    for (auto& c : centers)
        for (double& v : c) v = scale * (rng.uniform() - 0.5) * 2.0;
    return centers;
}

// Reference EM written independently of fair_em: plain loops, no fairness
// modification, same diagonal model, variance floor and update order.
struct RefEm {
    Tensor mu, var, pi;  // [K x d], [K x d], [1 x K]
};

RefEm reference_em(const Tensor& data, RefEm init, int iters) {
    const int n = data.rows(), d = data.cols(), k = init.mu.rows();
    RefEm cur = std::move(init);
    for (int it = 0; it < iters; ++it) {
        // responsibilities in log space
        std::vector<std::vector<double>> resp(n, std::vector<double>(k));
        for (int i = 0; i < n; ++i) {
            double mx = -1e300;
            for (int c = 0; c < k; ++c) {
                double lp = cur.pi.at(0, c) > 0 ? std::log(cur.pi.at(0, c)) : -1e300;
                for (int j = 0; j < d; ++j) {
                    const double diff = data.at(i, j) - cur.mu.at(c, j);
                    lp += -0.5 * (kLog2Pi + std::log(cur.var.at(c, j)) +
                                  diff * diff / cur.var.at(c, j));
                }
                resp[i][c] = lp;
                mx = std::max(mx, lp);
            }
            double z = 0.0;
            for (int c = 0; c < k; ++c) z += std::exp(resp[i][c] - mx);
            for (int c = 0; c < k; ++c) resp[i][c] = std::exp(resp[i][c] - mx) / z;
        }
        for (int c = 0; c < k; ++c) {
            double nk = 0.0;
            for (int i = 0; i < n; ++i) nk += resp[i][c];
            if (nk > 1e-12) {
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < n; ++i) s += resp[i][c] * data.at(i, j);
                    cur.mu.at(c, j) = s / nk;
                }
                for (int j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < n; ++i) {
                        const double diff = data.at(i, j) - cur.mu.at(c, j);
                        s += resp[i][c] * diff * diff;
                    }
                    cur.var.at(c, j) = std::max(s / nk, kVarFloor);
                }
            }
            cur.pi.at(0, c) = nk / n;
        }
    }
    return cur;
}

GroupGmm simple_gmm(std::vector<std::vector<double>> mus, std::vector<double> vars,
                    std::vector<double> pis) {
    const int k = static_cast<int>(mus.size());
    const int d = static_cast<int>(mus[0].size());
    GroupGmm g;
    g.means = Tensor::zeros(k, d);
    g.vars = Tensor::zeros(k, d);
    for (int c = 0; c < k; ++c)
        for (int j = 0; j < d; ++j) {
            g.means.at(c, j) = mus[c][j];
            g.vars.at(c, j) = vars[c];
        }
    g.weights = Tensor::row(pis);
    return g;
}

}  // namespace

TEST_CASE("likelihood loss of a single component at its mean") {
    const int n = 7, dim = 3;
    Tensor contents = Tensor::zeros(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) contents.at(i, j) = 2.0;
    GroupGmm g = simple_gmm({{2.0, 2.0, 2.0}}, {1.0}, {1.0});
    // N * (dim/2) ln(2 pi) + sum of weights
    const double want = n * 0.5 * dim * kLog2Pi + 1.0;
    CHECK(gmm_loglik_loss(contents, g) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("likelihood loss is translation invariant") {
    Rng rng(3);
    Tensor contents = Tensor::zeros(20, 2);
    for (double& v : contents.data) v = rng.normal();
    GroupGmm g = simple_gmm({{0.5, -0.2}, {-1.0, 0.7}}, {0.8, 1.3}, {0.6, 0.4});
    const double base = gmm_loglik_loss(contents, g);
    Tensor shifted = contents;
    for (int i = 0; i < shifted.rows(); ++i)
        for (int j = 0; j < 2; ++j) shifted.at(i, j) += 5.0;
    GroupGmm gs = g;
    for (int c = 0; c < 2; ++c)
        for (int j = 0; j < 2; ++j) gs.means.at(c, j) += 5.0;
    CHECK(gmm_loglik_loss(shifted, gs) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("all-zero weights are a degenerate mixture") {
    Tensor contents = Tensor::zeros(3, 2);
    GroupGmm g = simple_gmm({{0, 0}, {1, 1}}, {1, 1}, {0.0, 0.0});
    CHECK_THROWS_WITH_AS(gmm_loglik_loss(contents, g), doctest::Contains("degenerate"),
                         std::invalid_argument);
}

TEST_CASE("unconstrained EM never increases the likelihood loss") {
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        Rng local = rng.fork(rep);
        const auto centers = spread_centers(3, 4, local);
        const Tensor data = blob_data(150, 4, centers, {0.3, 0.3, 0.4}, 0.7, local);
        FairGmmParams params = init_gmm_params(data, data, 3, rep);
        double prev = gmm_loglik_loss(data, params.neg);
        for (int it = 0; it < 25; ++it) {
            EmResult one = fair_em(data, data, 3, 0.0, 0.0, 1, rep, &params);
            params = one.params;
            const double cur = gmm_loglik_loss(data, params.neg);
            CHECK(cur <= prev + 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("posterior of a single component is one") {
    Tensor contents = Tensor::zeros(4, 2);
    GroupGmm g = simple_gmm({{0.0, 0.0}}, {1.0}, {1.0});
    const Tensor gamma = posterior(contents, g);
    for (int i = 0; i < 4; ++i) CHECK(gamma.at(0, i) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("posterior splits evenly between symmetric components") {
    Tensor contents = Tensor::zeros(1, 2);  // origin, equidistant
    GroupGmm g = simple_gmm({{1.0, 0.0}, {-1.0, 0.0}}, {0.5, 0.5}, {0.5, 0.5});
    const Tensor gamma = posterior(contents, g);
    CHECK(gamma.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gamma.at(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior matches direct density-ratio evaluation") {
    Rng rng(13);
    GroupGmm g = simple_gmm({{0.4, -1.2, 0.0}, {2.0, 0.3, -0.7}, {-1.5, 1.1, 0.9}},
                            {0.6, 1.1, 0.9}, {0.2, 0.5, 0.3});
    Tensor contents = Tensor::zeros(10, 3);
    for (double& v : contents.data) v = 2.0 * rng.normal();
    const Tensor gamma = posterior(contents, g);
    for (int i = 0; i < 10; ++i) {
        double dens[3], total = 0.0;
        for (int c = 0; c < 3; ++c) {
            double lp = 0.0;
            for (int j = 0; j < 3; ++j) {
                const double diff = contents.at(i, j) - g.means.at(c, j);
                lp += -0.5 * (kLog2Pi + std::log(g.vars.at(c, j)) + diff * diff / g.vars.at(c, j));
            }
            dens[c] = g.weights.at(0, c) * std::exp(lp);
            total += dens[c];
        }
        for (int c = 0; c < 3; ++c)
            CHECK(gamma.at(c, i) == doctest::Approx(dens[c] / total).epsilon(1e-10));
        double colsum = 0.0;
        for (int c = 0; c < 3; ++c) colsum += gamma.at(c, i);
        CHECK(colsum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("weight update arithmetic follows the modified rule") {
    CHECK(pi_update(60.0, 100, 10.0, true) == doctest::Approx(60.0 / 110.0).epsilon(1e-15));
    CHECK(pi_update(60.0, 100, 10.0, false) == doctest::Approx(60.0 / 90.0).epsilon(1e-15));
    CHECK(pi_update(60.0, 100, 0.0, true) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS_AS(pi_update(60.0, 100, 100.0, false), std::invalid_argument);
}

TEST_CASE("fair_em with zero lambda matches the independent reference EM") {
    for (int seed = 0; seed < 4; ++seed) {
        Rng rng(100 + seed);
        const auto centers = spread_centers(2, 3, rng);
        const Tensor data_neg = blob_data(90, 3, centers, {0.5, 0.5}, 0.6, rng);
        const Tensor data_pos = blob_data(110, 3, centers, {0.4, 0.6}, 0.6, rng);
        const FairGmmParams init = init_gmm_params(data_neg, data_pos, 2, seed);

        const int iters = 40;
        EmResult mine = fair_em(data_neg, data_pos, 2, 0.0, 0.0, iters, seed, &init);
        RefEm ref_neg = reference_em(data_neg, {init.neg.means, init.neg.vars, init.neg.weights},
                                     iters);
        RefEm ref_pos = reference_em(data_pos, {init.pos.means, init.pos.vars, init.pos.weights},
                                     iters);
        for (int c = 0; c < 2; ++c) {
            CHECK(mine.params.neg.weights.at(0, c) ==
                  doctest::Approx(ref_neg.pi.at(0, c)).epsilon(1e-8));
            CHECK(mine.params.pos.weights.at(0, c) ==
                  doctest::Approx(ref_pos.pi.at(0, c)).epsilon(1e-8));
            for (int j = 0; j < 3; ++j) {
                CHECK(mine.params.neg.means.at(c, j) ==
                      doctest::Approx(ref_neg.mu.at(c, j)).epsilon(1e-8));
                CHECK(mine.params.neg.vars.at(c, j) ==
                      doctest::Approx(ref_neg.var.at(c, j)).epsilon(1e-8));
                CHECK(mine.params.pos.means.at(c, j) ==
                      doctest::Approx(ref_pos.mu.at(c, j)).epsilon(1e-8));
                CHECK(mine.params.pos.vars.at(c, j) ==
                      doctest::Approx(ref_pos.var.at(c, j)).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("positive lambda shrinks the group weight gap on shifted blobs") {
    Rng rng(31);
    const auto centers = spread_centers(2, 3, rng);
    const Tensor data_neg = blob_data(120, 3, centers, {0.7, 0.3}, 0.5, rng);
    const Tensor data_pos = blob_data(120, 3, centers, {0.3, 0.7}, 0.5, rng);
    const FairGmmParams init = init_gmm_params(data_neg, data_pos, 2, 7);
    EmResult plain = fair_em(data_neg, data_pos, 2, 0.0, 1e-6, 200, 7, &init);
    EmResult fair = fair_em(data_neg, data_pos, 2, 0.5, 1e-6, 200, 7, &init);
    CHECK(fair_loss_approx(fair.params) < fair_loss_approx(plain.params));
}

TEST_CASE("fair_em rejects bad shapes and lambdas") {
    Tensor small = Tensor::zeros(2, 2);
    Tensor ok = Tensor::zeros(30, 2);
    CHECK_THROWS_AS(fair_em(small, ok, 2, 0.0, 1e-5, 10, 1), std::invalid_argument);
    CHECK_THROWS_WITH_AS(fair_em(ok, ok, 2, 30.0, 1e-5, 10, 1),
                         doctest::Contains("negative denominator"), std::invalid_argument);
}

TEST_CASE("exact fair loss is zero for identical groups and single components") {
    Rng rng(41);
    Tensor contents = Tensor::zeros(25, 3);
    for (double& v : contents.data) v = rng.normal();
    GroupGmm shared = simple_gmm({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}, {1.0, 1.0}, {0.5, 0.5});
    FairGmmParams params;
    params.neg = shared;
    params.pos = shared;
    CHECK(fair_loss_exact(contents, contents, params) == doctest::Approx(0.0).epsilon(1e-15));

    FairGmmParams single;
    single.neg = simple_gmm({{0.0, 0.0, 0.0}}, {1.0}, {1.0});
    single.pos = simple_gmm({{2.0, 2.0, 2.0}}, {1.0}, {1.0});
    Tensor other = contents;
    for (double& v : other.data) v += 1.0;
    CHECK(fair_loss_exact(contents, other, single) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("exact fair loss matches hand enumeration on separated groups") {
    // group -1: both points in component 0's basin; group +1: one in each
    GroupGmm shared = simple_gmm({{0.0, 0.0}, {10.0, 0.0}}, {0.5, 0.5}, {0.5, 0.5});
    FairGmmParams params;
    params.neg = shared;
    params.pos = shared;
    Tensor cn({2, 2}, {0.1, 0.0, -0.1, 0.0});
    Tensor cp({2, 2}, {0.1, 0.0, 9.9, 0.0});
    // responsibilities saturate: mean_neg ~ (1, 0), mean_pos ~ (0.5, 0.5)
    const double loss = fair_loss_exact(cn, cp, params);
    CHECK(loss == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("approximate fair loss is plain weight-gap arithmetic") {
    FairGmmParams params;
    params.neg = simple_gmm({{0, 0}, {1, 1}}, {1, 1}, {0.7, 0.3});
    params.pos = simple_gmm({{0, 0}, {1, 1}}, {1, 1}, {0.4, 0.6});
    CHECK(fair_loss_approx(params) == doctest::Approx(0.6).epsilon(1e-15));
    params.pos.weights = params.neg.weights;
    CHECK(fair_loss_approx(params) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("reconstruction with one component returns its mean everywhere") {
    GroupGmm g = simple_gmm({{1.5, -0.5}}, {1.0}, {1.0});
    Rng rng(51);
    Tensor contents = Tensor::zeros(6, 2);
    for (double& v : contents.data) v = rng.normal();
    const ReconstructResult res = reconstruct(contents, g);
    for (int i = 0; i < 6; ++i) {
        CHECK(res.c_tilde.at(i, 0) == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(res.c_tilde.at(i, 1) == doctest::Approx(-0.5).epsilon(1e-12));
    }
}

TEST_CASE("saturated points reconstruct to their own prototype") {
    GroupGmm g = simple_gmm({{0.0, 0.0}, {20.0, 0.0}}, {0.5, 0.5}, {0.5, 0.5});
    Tensor contents({1, 2}, {0.05, -0.02});
    const ReconstructResult res = reconstruct(contents, g);
    CHECK(res.c_tilde.at(0, 0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(res.c_tilde.at(0, 1) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("reconstruction loss matches an independent recomputation") {
    Rng rng(61);
    GroupGmm g = simple_gmm({{0.4, -1.2}, {2.0, 0.3}, {-1.5, 1.1}}, {0.6, 1.1, 0.9},
                            {0.2, 0.5, 0.3});
    Tensor contents = Tensor::zeros(15, 2);
    for (double& v : contents.data) v = 2.0 * rng.normal();
    const ReconstructResult res = reconstruct(contents, g);
    const Tensor gamma = posterior(contents, g);
    double want = 0.0;
    for (int i = 0; i < 15; ++i) {
        double ct[2] = {0.0, 0.0};
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < 2; ++j) ct[j] += gamma.at(c, i) * g.means.at(c, j);
        double s = 0.0;
        for (int j = 0; j < 2; ++j) {
            CHECK(res.c_tilde.at(i, j) == doctest::Approx(ct[j]).epsilon(1e-10));
            const double d = contents.at(i, j) - ct[j];
            s += d * d;
        }
        want += std::sqrt(s);
    }
    CHECK(res.l_rec == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("reconstruction is translation equivariant") {
    Rng rng(71);
    GroupGmm g = simple_gmm({{0.0, 0.5}, {1.2, -0.4}}, {0.7, 0.7}, {0.5, 0.5});
    Tensor contents = Tensor::zeros(8, 2);
    for (double& v : contents.data) v = rng.normal();
    const ReconstructResult base = reconstruct(contents, g);
    const double shift = 3.25;
    Tensor moved = contents;
    for (double& v : moved.data) v += shift;
    GroupGmm gm = g;
    for (double& v : gm.means.data) v += shift;
    const ReconstructResult res = reconstruct(moved, gm);
    for (std::size_t i = 0; i < base.c_tilde.data.size(); ++i)
        CHECK(res.c_tilde.data[i] == doctest::Approx(base.c_tilde.data[i] + shift).epsilon(1e-9));
    CHECK(res.l_rec == doctest::Approx(base.l_rec).epsilon(1e-9));
}

TEST_CASE("posterior columns sum to one on random inputs") {
    Rng rng(81);
    for (int rep = 0; rep < 10; ++rep) {
        Rng local = rng.fork(rep);
        const auto centers = spread_centers(3, 5, local);
        const Tensor data = blob_data(40, 5, centers, {0.2, 0.5, 0.3}, 1.0, local);
        FairGmmParams params = init_gmm_params(data, data, 3, rep);
        const Tensor gamma = posterior(data, params.neg);
        for (int i = 0; i < 40; ++i) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c) {
                s += gamma.at(c, i);
                CHECK(gamma.at(c, i) >= 0.0);
                CHECK(gamma.at(c, i) <= 1.0);
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("weight sums stay inside the drift bound during EM") {
    Rng rng(91);
    const auto centers = spread_centers(3, 3, rng);
    const Tensor data_neg = blob_data(100, 3, centers, {0.5, 0.3, 0.2}, 0.8, rng);
    const Tensor data_pos = blob_data(100, 3, centers, {0.2, 0.3, 0.5}, 0.8, rng);
    // lambda = 10 = 0.1 * N
    EmResult res = fair_em(data_neg, data_pos, 3, 10.0, 1e-6, 100, 3);
    CHECK(res.sum_pi_min >= 0.5);
    CHECK(res.sum_pi_max <= 1.5);
}

TEST_CASE("component alignment pairs live components by proximity") {
    FairGmmParams params;
    params.neg = simple_gmm({{0, 0}, {5, 5}, {9, 9}}, {1, 1, 1}, {0.5, 0.5, 0.0});
    // pos components permuted: index 0 is the (5,5) cluster
    params.pos = simple_gmm({{5.1, 5.1}, {8.8, 8.8}, {0.1, 0.1}}, {1, 1, 1}, {0.5, 0.0, 0.5});
    align_components(&params);
    CHECK(params.pos.means.at(0, 0) == doctest::Approx(0.1));
    CHECK(params.pos.means.at(1, 0) == doctest::Approx(5.1));
    CHECK(params.pos.means.at(2, 0) == doctest::Approx(8.8));
    CHECK(params.pos.weights.at(0, 0) == doctest::Approx(0.5));
}
