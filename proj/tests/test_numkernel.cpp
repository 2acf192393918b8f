// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "flair/adam.hpp"
#include "flair/nn.hpp"
#include "flair/rng.hpp"
#include "flair/tape.hpp"

using namespace flair;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(r, c);
    for (double& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
}

// central finite differences of a scalar-valued function of one tensor
double fd_grad(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i,
               double h = 1e-5) {
    Tensor hi = x, lo = x;
    hi.data[i] += h;
    lo.data[i] -= h;
    return (f(hi) - f(lo)) / (2.0 * h);
}

bool grad_close(double analytic, double numeric, double tol = 1e-4) {
    const double err = std::fabs(analytic - numeric);
    return err <= tol * std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
}

}  // namespace

TEST_CASE("matmul identity maps vectors to themselves") {
    Tape t;
    Tape::Id eye = t.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Tape::Id v = t.constant(Tensor({2, 1}, {3.5, -1.25}));
    const Tensor& out = t.value(t.matmul(eye, v));
    CHECK(out.data[0] == 3.5);
    CHECK(out.data[1] == -1.25);
}

TEST_CASE("relu clamps negatives") {
    Tape t;
    const Tensor& out = t.value(t.relu(t.constant(Tensor({1, 2}, {-1.0, 2.0}))));
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[1] == 2.0);
}

TEST_CASE("cross entropy of uniform two-class logits is ln 2") {
    Tape t;
    Tape::Id logits = t.constant(Tensor({1, 2}, {0.0, 0.0}));
    const double ce = t.value(t.cross_entropy_logits(logits, {1})).data[0];
    CHECK(ce == doctest::Approx(0.6931471805599453).epsilon(1e-12));
}

TEST_CASE("shape mismatch names both shapes") {
    Tape t;
    Tape::Id a = t.constant(Tensor::zeros(2, 3));
    Tape::Id b = t.constant(Tensor::zeros(3, 2));
    CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
    Tape::Id c = t.constant(Tensor::zeros(4, 5));
    CHECK_THROWS_AS(t.matmul(a, c), std::invalid_argument);
}

TEST_CASE("backward of sum of squares") {
    Tape t;
    Tape::Id w = t.leaf(Tensor({1, 1}, {3.0}), true);
    t.backward(t.sum(t.mul(w, w)));
    CHECK(t.grad(w).data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward of L1 distance gives signs") {
    Tape t;
    Tape::Id u = t.leaf(Tensor({1, 2}, {1.0, -2.0}), true);
    Tape::Id v = t.constant(Tensor({1, 2}, {0.0, 0.0}));
    t.backward(t.l1_distance(u, v));
    CHECK(t.grad(u).data[0] == 1.0);
    CHECK(t.grad(u).data[1] == -1.0);
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Tape::Id w = t.leaf(Tensor({2, 1}, {1.0, 2.0}), true);
    CHECK_THROWS_AS(t.backward(t.mul(w, w)), std::invalid_argument);
}

TEST_CASE("two-layer MLP loss gradient matches finite differences") {
    Rng rng(1234);
    Mlp net = Mlp::create({4, 6, 2}, rng);
    const Tensor x = random_tensor(3, 4, rng);
    const std::vector<int> labels = {0, 1, 0};

    auto loss_with = [&](const Mlp& m) {
        Tape t;
        BoundMlp b = bind(t, m);
        return t.value(t.cross_entropy_logits(b.forward(t, t.constant(x)), labels)).data[0];
    };

    Tape t;
    BoundMlp b = bind(t, net);
    t.backward(t.cross_entropy_logits(b.forward(t, t.constant(x)), labels));

    double max_err = 0.0;
    for (std::size_t p = 0; p < net.params.size(); ++p) {
        const Tensor& g = t.grad(b.param_ids[p]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            Mlp probe = net;
            auto f = [&](const Tensor& v) {
                probe.params[p] = v;
                return loss_with(probe);
            };
            const double num = fd_grad(f, net.params[p], i);
            const double err = std::fabs(g.data[i] - num) /
                               std::max({std::fabs(g.data[i]), std::fabs(num), 1.0});
            max_err = std::max(max_err, err);
        }
    }
    CHECK(max_err < 1e-4);
}

TEST_CASE("every elementwise op matches finite differences on random input") {
    Rng rng(99);
    struct OpCase {
        const char* name;
        std::function<Tape::Id(Tape&, Tape::Id)> apply;
        double lo, hi;
    };
    const OpCase cases[] = {
        {"tanh", [](Tape& t, Tape::Id a) { return t.tanh_op(a); }, -2, 2},
        {"exp", [](Tape& t, Tape::Id a) { return t.exp_op(a); }, -2, 2},
        {"log", [](Tape& t, Tape::Id a) { return t.log_op(a); }, 0.1, 2},
        {"square", [](Tape& t, Tape::Id a) { return t.square(a); }, -2, 2},
        {"abs", [](Tape& t, Tape::Id a) { return t.abs_op(a); }, -2, 2},
        {"sqrt", [](Tape& t, Tape::Id a) { return t.sqrt_op(a); }, 0.1, 2},
        {"relu", [](Tape& t, Tape::Id a) { return t.relu(a); }, -2, 2},
        {"softmax", [](Tape& t, Tape::Id a) { return t.softmax_rows(a); }, -2, 2},
        {"logsumexp", [](Tape& t, Tape::Id a) { return t.logsumexp_rows(a); }, -2, 2},
        {"standardize", [](Tape& t, Tape::Id a) { return t.standardize_rows(a); }, -2, 2},
        {"row_sum", [](Tape& t, Tape::Id a) { return t.row_sum(a); }, -2, 2},
        {"col_mean", [](Tape& t, Tape::Id a) { return t.col_mean(a); }, -2, 2},
        {"mean", [](Tape& t, Tape::Id a) { return t.mean(a); }, -2, 2},
    };
    for (const OpCase& c : cases) {
        CAPTURE(c.name);
        const Tensor x = random_tensor(3, 4, rng, c.lo, c.hi);
        auto loss_with = [&](const Tensor& v) {
            Tape t;
            Tape::Id a = t.leaf(v, true);
            return t.value(t.sum(c.apply(t, a))).data[0];
        };
        Tape t;
        Tape::Id a = t.leaf(x, true);
        t.backward(t.sum(c.apply(t, a)));
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double num = fd_grad(loss_with, x, i);
            CHECK_MESSAGE(grad_close(t.grad(a).data[i], num), c.name << " entry " << i);
        }
    }
}

TEST_CASE("binary op gradients match finite differences") {
    Rng rng(7);
    const Tensor xa = random_tensor(3, 3, rng);
    const Tensor xb = random_tensor(3, 3, rng);
    struct BinCase {
        const char* name;
        std::function<Tape::Id(Tape&, Tape::Id, Tape::Id)> apply;
    };
    const BinCase cases[] = {
        {"add", [](Tape& t, Tape::Id a, Tape::Id b) { return t.add(a, b); }},
        {"sub", [](Tape& t, Tape::Id a, Tape::Id b) { return t.sub(a, b); }},
        {"mul", [](Tape& t, Tape::Id a, Tape::Id b) { return t.mul(a, b); }},
        {"matmul", [](Tape& t, Tape::Id a, Tape::Id b) { return t.matmul(a, b); }},
        {"l1", [](Tape& t, Tape::Id a, Tape::Id b) { return t.l1_distance(a, b); }},
        {"sqeuclid", [](Tape& t, Tape::Id a, Tape::Id b) { return t.sqeuclid_distance(a, b); }},
    };
    for (const BinCase& c : cases) {
        CAPTURE(c.name);
        auto loss_with_a = [&](const Tensor& v) {
            Tape t;
            Tape::Id a = t.leaf(v, true);
            Tape::Id b = t.constant(xb);
            return t.value(t.sum(c.apply(t, a, b))).data[0];
        };
        Tape t;
        Tape::Id a = t.leaf(xa, true);
        Tape::Id b = t.leaf(xb, true);
        t.backward(t.sum(c.apply(t, a, b)));
        for (std::size_t i = 0; i < xa.data.size(); ++i)
            CHECK_MESSAGE(grad_close(t.grad(a).data[i], fd_grad(loss_with_a, xa, i)),
                          c.name << " lhs entry " << i);
    }
}

TEST_CASE("softmax rows sum to one and stay positive") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor x = random_tensor(4, 5, rng, -30, 30);
        Tape t;
        const Tensor& s = t.value(t.softmax_rows(t.constant(x)));
        for (int i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 5; ++j) {
                CHECK(s.at(i, j) > 0.0);
                sum += s.at(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward pass is deterministic") {
    Rng rng1(42), rng2(42);
    Mlp m1 = Mlp::create({5, 8, 3}, rng1);
    Mlp m2 = Mlp::create({5, 8, 3}, rng2);
    const std::vector<double> x = {0.1, -0.4, 2.0, 1.0, -1.5};
    CHECK(m1.forward(x) == m2.forward(x));
    CHECK(m1.forward(x) == m1.forward(x));
}

TEST_CASE("adam leaves params unchanged on zero gradient") {
    std::vector<Tensor> params = {Tensor({1, 3}, {1.0, -2.0, 0.5})};
    AdamState st = AdamState::like(params, 0.1);
    const std::vector<Tensor> zero = {Tensor::zeros(1, 3)};
    adam_step(params, zero, st);
    CHECK(params[0].data == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("one adam step with unit gradient moves by about lr") {
    std::vector<Tensor> params = {Tensor({1, 1}, {1.0})};
    AdamState st = AdamState::like(params, 0.1);
    adam_step(params, {Tensor({1, 1}, {1.0})}, st);
    CHECK(params[0].data[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam is deterministic across identical runs") {
    auto run = [] {
        std::vector<Tensor> params = {Tensor({1, 2}, {0.3, -0.8})};
        AdamState st = AdamState::like(params, 0.01);
        for (int i = 0; i < 5; ++i)
            adam_step(params, {Tensor({1, 2}, {0.5, -0.25})}, st);
        return params[0].data;
    };
    CHECK(run() == run());
}

TEST_CASE("adam aborts on non-finite gradients") {
    std::vector<Tensor> params = {Tensor({1, 1}, {1.0})};
    AdamState st = AdamState::like(params, 0.1);
    CHECK_THROWS_AS(adam_step(params, {Tensor({1, 1}, {std::nan("")})}, st), std::runtime_error);
}

TEST_CASE("tensor rejects inconsistent shape") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Tape t;
    Tape::Id logits = t.constant(Tensor::zeros(1, 2));
    CHECK_THROWS_AS(t.cross_entropy_logits(logits, {2}), std::invalid_argument);
}
