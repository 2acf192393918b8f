// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flair/rng.hpp"
#include "flair/tensor.hpp"

namespace flair {

/// One domain: a style parameter (planar rotation angle) plus the target
/// correlation between label and sensitive attribute.
struct DomainSpec {
    int id = 0;
    double angle_deg = 0.0;
    double corr = 0.0;  // target phi coefficient of (Y, A), in [-1, 1]
};

struct Instance {
    std::vector<double> x;
    int a = -1;      // sensitive attribute, -1 or 1
    int y = 0;       // label, 0 or 1
    int domain = 0;  // DomainSpec id
};

struct Dataset {
    std::vector<DomainSpec> domains;
    std::vector<Instance> instances;
    int heldout = -1;  // domain id held out as test split; -1 = no split

    const DomainSpec& domain_by_id(int id) const;
    std::vector<const Instance*> train_split() const;
    std::vector<const Instance*> test_split() const;
};

struct GenParams {
    int n_per_domain = 2000;
    int dim = 16;
    double noise_sigma = 0.3;
    double sensitive_offset = 0.2;  // magnitude of the a-channel offset
};

/// Class prototypes for the generator: class signal lives mostly in the
/// rotated plane (coords 0,1); coord 2 is the sensitive-attribute channel.
std::pair<std::vector<double>, std::vector<double>> benchmark_prototypes(int dim);

/// Generate one domain: labels balanced n/2 each, a sampled from the
/// balanced-marginal joint P(a=1,y=1)=(1+corr)/4 with exact integer cell
/// counts, features = rotate(prototype_y) + a-offset + Gaussian noise.
std::vector<Instance> make_domain(const std::vector<double>& proto0,
                                  const std::vector<double>& proto1, const DomainSpec& spec, int n,
                                  double noise_sigma, double sensitive_offset, Rng& rng);

/// Six domains with angles {0,15,30,45,60,75} deg and correlations
/// {0, 0.8, 0.5, 0.1, 0.3, 0.6}, ids 0..5.
Dataset make_benchmark(std::uint64_t seed, const GenParams& gp = {});

/// Empirical phi coefficient of (y, a) over a set of instances.
double phi_coefficient(const std::vector<const Instance*>& insts);
double phi_coefficient(const std::vector<Instance>& insts);

struct Quartet {
    Instance r1, r2, r3, r4;
    // invariant: r1/r2 share domain e, r3/r4 share domain e' != e;
    //            r1/r3 share label y, r2/r4 share label y' != y.
};

struct QuartetBatch {
    std::vector<Quartet> quartets;
    int relaxed_count = 0;  // slots filled with the sensitive pattern relaxed
};

/// Sample Q quartets uniformly over ordered domain pairs and labels.
/// When a (domain, label, a) cell is empty the sensitive pattern for that
/// slot is relaxed to (domain, label, any) and relaxed_count is bumped.
QuartetBatch sample_quartets(const Dataset& ds, int q, Rng& rng);

/// CSV with header domain,angle,corr,a,y,x0..x{d-1}; floats with 17
/// significant digits so round-trips are bit exact.
void write_csv(const Dataset& ds, const std::string& path);
Dataset read_csv(const std::string& path);

// convenience: stack instance features as a [N x d] matrix
Tensor stack_features(const std::vector<const Instance*>& insts);

}  // namespace flair
