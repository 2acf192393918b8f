// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "flair/datagen.hpp"

using namespace flair;

namespace {

std::map<std::pair<int, int>, int> cell_counts(const std::vector<Instance>& insts) {
    std::map<std::pair<int, int>, int> counts;
    for (const Instance& i : insts) counts[{i.y, i.a}]++;
    return counts;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("zero correlation gives independent sensitive attribute") {
    auto [p0, p1] = benchmark_prototypes(16);
    Rng rng(3);
    const auto insts = make_domain(p0, p1, DomainSpec{0, 0.0, 0.0}, 2000, 0.3, 0.2, rng);
    const auto counts = cell_counts(insts);
    // exact apportioning: P(a=1|y) = 0.5 for both labels
    CHECK(counts.at({0, 1}) == 500);
    CHECK(counts.at({1, 1}) == 500);
    CHECK(counts.at({0, -1}) == 500);
    CHECK(counts.at({1, -1}) == 500);
}

TEST_CASE("correlation 0.8 hits the balanced-marginal joint by enumeration") {
    auto [p0, p1] = benchmark_prototypes(16);
    Rng rng(4);
    const int n = 2000;
    const auto insts = make_domain(p0, p1, DomainSpec{0, 0.0, 0.8}, n, 0.3, 0.2, rng);
    const auto counts = cell_counts(insts);
    // P(a=1, y=1) = (1+rho)/4 = 0.45
    CHECK(counts.at({1, 1}) == doctest::Approx(0.45 * n).epsilon(1e-12));
    CHECK(phi_coefficient(insts) == doctest::Approx(0.8).epsilon(1e-2));
}

TEST_CASE("zero angle and zero noise reproduce the prototype on rotation coords") {
    auto [p0, p1] = benchmark_prototypes(16);
    Rng rng(5);
    const auto insts = make_domain(p0, p1, DomainSpec{0, 0.0, 0.0}, 10, 0.0, 0.2, rng);
    for (const Instance& inst : insts) {
        const auto& proto = inst.y == 1 ? p1 : p0;
        CHECK(inst.x[0] == doctest::Approx(proto[0]).epsilon(1e-12));
        CHECK(inst.x[1] == doctest::Approx(proto[1]).epsilon(1e-12));
    }
}

TEST_CASE("empirical phi stays within 0.05 of the target at n=2000") {
    auto [p0, p1] = benchmark_prototypes(16);
    for (double rho : {-0.9, -0.3, 0.0, 0.1, 0.5, 0.8}) {
        Rng rng(11);
        const auto insts = make_domain(p0, p1, DomainSpec{0, 30.0, rho}, 2000, 0.3, 0.2, rng);
        CHECK(std::fabs(phi_coefficient(insts) - rho) < 0.05);
    }
}

TEST_CASE("odd n with unit correlation is an infeasible joint") {
    auto [p0, p1] = benchmark_prototypes(16);
    Rng rng(6);
    CHECK_THROWS_WITH_AS(make_domain(p0, p1, DomainSpec{0, 0.0, 1.0}, 101, 0.3, 0.2, rng),
                         doctest::Contains("infeasible"), std::invalid_argument);
    CHECK_THROWS_AS(make_domain(p0, p1, DomainSpec{0, 0.0, 0.5}, 101, 0.3, 0.2, rng),
                    std::invalid_argument);
}

TEST_CASE("dependent prototypes are rejected") {
    std::vector<double> p0(16, 0.0), p1(16, 0.0);
    p0[0] = 1.0;
    p1[0] = -2.0;  // exact multiple
    Rng rng(6);
    CHECK_THROWS_AS(make_domain(p0, p1, DomainSpec{0, 0.0, 0.0}, 10, 0.3, 0.2, rng),
                    std::invalid_argument);
}

TEST_CASE("benchmark has the fixed angle and correlation schedule") {
    const Dataset ds = make_benchmark(1, GenParams{200, 16, 0.3, 0.2});
    REQUIRE(ds.domains.size() == 6);
    const double want_angle[6] = {0, 15, 30, 45, 60, 75};
    const double want_corr[6] = {0, 0.8, 0.5, 0.1, 0.3, 0.6};
    for (int d = 0; d < 6; ++d) {
        CHECK(ds.domains[d].id == d);
        CHECK(ds.domains[d].angle_deg == want_angle[d]);
        CHECK(ds.domains[d].corr == want_corr[d]);
    }
    CHECK(ds.instances.size() == 6 * 200);
}

TEST_CASE("generation is a pure function of the seed") {
    const Dataset a = make_benchmark(99, GenParams{100, 16, 0.3, 0.2});
    const Dataset b = make_benchmark(99, GenParams{100, 16, 0.3, 0.2});
    REQUIRE(a.instances.size() == b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        CHECK(a.instances[i].x == b.instances[i].x);
        CHECK(a.instances[i].a == b.instances[i].a);
        CHECK(a.instances[i].y == b.instances[i].y);
    }
}

TEST_CASE("quartets satisfy the structural invariants") {
    Dataset ds = make_benchmark(2, GenParams{200, 16, 0.3, 0.2});
    ds.heldout = 5;
    Rng rng(17);
    const QuartetBatch batch = sample_quartets(ds, 500, rng);
    REQUIRE(batch.quartets.size() == 500);
    CHECK(batch.relaxed_count == 0);
    for (const Quartet& q : batch.quartets) {
        CHECK(q.r1.domain == q.r2.domain);
        CHECK(q.r3.domain == q.r4.domain);
        CHECK(q.r1.domain != q.r3.domain);
        CHECK(q.r1.y == q.r3.y);
        CHECK(q.r2.y == q.r4.y);
        CHECK(q.r1.y != q.r2.y);
        CHECK(q.r1.a == -1);
        CHECK(q.r2.a == 1);
        CHECK(q.r3.a == -1);
        CHECK(q.r4.a == 1);
        CHECK(q.r1.domain != ds.heldout);
        CHECK(q.r3.domain != ds.heldout);
    }
}

TEST_CASE("single-domain training data cannot form quartets") {
    Dataset ds;
    ds.domains.push_back(DomainSpec{0, 0.0, 0.0});
    auto [p0, p1] = benchmark_prototypes(16);
    Rng g(1);
    for (auto& inst : make_domain(p0, p1, ds.domains[0], 40, 0.3, 0.2, g))
        ds.instances.push_back(inst);
    Rng rng(2);
    CHECK_THROWS_AS(sample_quartets(ds, 4, rng), std::invalid_argument);
}

TEST_CASE("domain pairs appear uniformly over many quartets") {
    Dataset ds = make_benchmark(3, GenParams{200, 16, 0.3, 0.2});
    ds.heldout = 0;  // five training domains -> 20 ordered pairs
    Rng rng(23);
    const int q = 10000;
    const QuartetBatch batch = sample_quartets(ds, q, rng);
    std::map<std::pair<int, int>, int> pair_counts;
    for (const Quartet& quartet : batch.quartets)
        pair_counts[{quartet.r1.domain, quartet.r3.domain}]++;
    CHECK(pair_counts.size() == 20);
    const double expect = q / 20.0;
    const double sigma = std::sqrt(q * (1.0 / 20) * (19.0 / 20));
    for (const auto& [pair, count] : pair_counts)
        CHECK(std::fabs(count - expect) <= 3.0 * sigma);
}

TEST_CASE("empty sensitive cell falls back to a relaxed draw and counts it") {
    Dataset ds = make_benchmark(4, GenParams{100, 16, 0.3, 0.2});
    // strip every (domain 1, y=0, a=1) instance so r2 draws must relax
    std::vector<Instance> kept;
    for (const Instance& inst : ds.instances)
        if (!(inst.domain == 1 && inst.y == 0 && inst.a == 1)) kept.push_back(inst);
    ds.instances = std::move(kept);
    Rng rng(29);
    const QuartetBatch batch = sample_quartets(ds, 400, rng);
    CHECK(batch.relaxed_count > 0);
    for (const Quartet& q : batch.quartets) {
        CHECK(q.r1.y != q.r2.y);  // label structure survives relaxation
        CHECK(q.r1.domain == q.r2.domain);
    }
}

TEST_CASE("csv round-trips the benchmark bit-exactly") {
    const Dataset ds = make_benchmark(5, GenParams{50, 16, 0.3, 0.2});
    const std::string path = temp_path("flair_test_roundtrip.csv");
    write_csv(ds, path);
    const Dataset back = read_csv(path);
    REQUIRE(back.instances.size() == ds.instances.size());
    REQUIRE(back.domains.size() == ds.domains.size());
    for (std::size_t i = 0; i < ds.instances.size(); ++i) {
        CHECK(back.instances[i].x == ds.instances[i].x);
        CHECK(back.instances[i].a == ds.instances[i].a);
        CHECK(back.instances[i].y == ds.instances[i].y);
        CHECK(back.instances[i].domain == ds.instances[i].domain);
    }
    for (std::size_t d = 0; d < ds.domains.size(); ++d) {
        CHECK(back.domains[d].angle_deg == ds.domains[d].angle_deg);
        CHECK(back.domains[d].corr == ds.domains[d].corr);
    }
    std::filesystem::remove(path);
}

TEST_CASE("empty dataset writes a bare header and reads back empty") {
    Dataset ds;
    const std::string path = temp_path("flair_test_empty.csv");
    write_csv(ds, path);
    const Dataset back = read_csv(path);
    CHECK(back.instances.empty());
    std::filesystem::remove(path);
}

TEST_CASE("rows with a=0 or short rows are parse errors naming the line") {
    const std::string path = temp_path("flair_test_bad.csv");
    {
        std::ofstream f(path);
        f << "domain,angle,corr,a,y,x0\n";
        f << "0,0,0,-1,1,0.5\n";
        f << "0,0,0,0,1,0.5\n";  // a = 0
    }
    CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("line 3"), std::runtime_error);
    {
        std::ofstream f(path);
        f << "domain,angle,corr,a,y,x0\n";
        f << "0,0,0,-1\n";  // short row
    }
    CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("line 2"), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("train and test splits partition by the held-out domain") {
    Dataset ds = make_benchmark(6, GenParams{60, 16, 0.3, 0.2});
    ds.heldout = 2;
    const auto train = ds.train_split();
    const auto test = ds.test_split();
    CHECK(train.size() + test.size() == ds.instances.size());
    CHECK(test.size() == 60);
    std::set<int> train_domains;
    for (const Instance* p : train) train_domains.insert(p->domain);
    CHECK(train_domains.count(2) == 0);
    CHECK(train_domains.size() == 5);
}
