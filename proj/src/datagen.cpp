// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace flair {

namespace {

constexpr double kPi = 3.14159265358979323846;

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i);
        std::swap(idx[i], idx[j]);
    }
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

const DomainSpec& Dataset::domain_by_id(int id) const {
    for (const DomainSpec& d : domains)
        if (d.id == id) return d;
    throw std::invalid_argument("Dataset: unknown domain id " + std::to_string(id));
}

std::vector<const Instance*> Dataset::train_split() const {
    std::vector<const Instance*> out;
    for (const Instance& inst : instances)
        if (inst.domain != heldout) out.push_back(&inst);
    return out;
}

std::vector<const Instance*> Dataset::test_split() const {
    std::vector<const Instance*> out;
    for (const Instance& inst : instances)
        if (inst.domain == heldout) out.push_back(&inst);
    return out;
}

std::pair<std::vector<double>, std::vector<double>> benchmark_prototypes(int dim) {
    if (dim < 4) throw std::invalid_argument("benchmark_prototypes: dim must be >= 4");
    std::vector<double> p0(dim, 0.0), p1(dim, 0.0);
    // class signal concentrated in the rotated plane, with a weaker
    // rotation-invariant component spread over the remaining coords
    p0[0] = 0.45;
    p0[1] = -0.2;
    p1[0] = -0.45;
    p1[1] = 0.28;
    for (int j = 3; j < dim; ++j) {
        const double v = 0.1 * std::cos(0.7 * j);
        p0[j] = v;
        p1[j] = -v;
    }
    return {p0, p1};
}

std::vector<Instance> make_domain(const std::vector<double>& proto0,
                                  const std::vector<double>& proto1, const DomainSpec& spec, int n,
                                  double noise_sigma, double sensitive_offset, Rng& rng) {
    const int dim = static_cast<int>(proto0.size());
    if (proto1.size() != proto0.size())
        throw std::invalid_argument("make_domain: prototype dimensions differ");
    {
        int piv = -1;
        double best = 0.0;
        for (int j = 0; j < dim; ++j)
            if (std::fabs(proto0[j]) > best) { best = std::fabs(proto0[j]); piv = j; }
        bool dependent = false;
        if (piv < 0) {
            dependent = true;  // zero vector
        } else {
            const double lam = proto1[piv] / proto0[piv];
            dependent = true;
            for (int j = 0; j < dim; ++j)
                if (std::fabs(proto1[j] - lam * proto0[j]) > 1e-9) { dependent = false; break; }
        }
        if (dependent)
            throw std::invalid_argument("make_domain: prototypes must be linearly independent");
    }
    if (std::fabs(spec.corr) > 1.0)
        throw std::invalid_argument("make_domain: |corr| must be <= 1");
    if (n % 2 != 0) {
        if (std::fabs(spec.corr) == 1.0)
            throw std::invalid_argument("make_domain: infeasible joint, |corr| = 1 requires an even "
                                        "instance count per cell (n = " + std::to_string(n) + ")");
        throw std::invalid_argument("make_domain: n must be even, got " + std::to_string(n));
    }

    const double theta = spec.angle_deg * kPi / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const int per_label = n / 2;

    std::vector<Instance> out;
    out.reserve(n);
    for (int y = 0; y <= 1; ++y) {
        const std::vector<double>& proto = (y == 1) ? proto1 : proto0;
        // P(a=1 | y) from the balanced-marginal joint with phi = corr
        const double p_a1 = (1.0 + (y == 1 ? spec.corr : -spec.corr)) / 2.0;
        const int n_a1 = static_cast<int>(std::llround(p_a1 * per_label));
        std::vector<int> a_vals(per_label, -1);
        for (int i = 0; i < n_a1; ++i) a_vals[i] = 1;
        shuffle_indices(a_vals, rng);

        for (int i = 0; i < per_label; ++i) {
            Instance inst;
            inst.y = y;
            inst.a = a_vals[i];
            inst.domain = spec.id;
            inst.x.resize(dim);
            // planar rotation of coords (0,1), identity elsewhere
            inst.x[0] = ct * proto[0] - st * proto[1];
            inst.x[1] = st * proto[0] + ct * proto[1];
            for (int j = 2; j < dim; ++j) inst.x[j] = proto[j];
            inst.x[2] += sensitive_offset * inst.a;
            for (int j = 0; j < dim; ++j) inst.x[j] += noise_sigma * rng.normal();
            out.push_back(std::move(inst));
        }
    }
    // interleave labels so instance order carries no block structure
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    shuffle_indices(order, rng);
    std::vector<Instance> shuffled;
    shuffled.reserve(n);
    for (int i : order) shuffled.push_back(std::move(out[i]));
    return shuffled;
}

Dataset make_benchmark(std::uint64_t seed, const GenParams& gp) {
    static const double kAngles[6] = {0.0, 15.0, 30.0, 45.0, 60.0, 75.0};
    static const double kCorrs[6] = {0.0, 0.8, 0.5, 0.1, 0.3, 0.6};
    auto [p0, p1] = benchmark_prototypes(gp.dim);
    Dataset ds;
    Rng root(seed);
    for (int d = 0; d < 6; ++d) {
        DomainSpec spec{d, kAngles[d], kCorrs[d]};
        ds.domains.push_back(spec);
        Rng drng = root.fork(static_cast<std::uint64_t>(d) + 1);
        auto insts = make_domain(p0, p1, spec, gp.n_per_domain, gp.noise_sigma,
                                 gp.sensitive_offset, drng);
        for (Instance& inst : insts) ds.instances.push_back(std::move(inst));
    }
    return ds;
}

double phi_coefficient(const std::vector<const Instance*>& insts) {
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (const Instance* p : insts) {
        if (p->y == 1 && p->a == 1) ++n11;
        else if (p->y == 1) ++n10;
        else if (p->a == 1) ++n01;
        else ++n00;
    }
    const double ny1 = n11 + n10, ny0 = n01 + n00;
    const double na1 = n11 + n01, na0 = n10 + n00;
    const double denom = std::sqrt(ny1 * ny0 * na1 * na0);
    if (denom == 0.0) return 0.0;
    return (n11 * n00 - n10 * n01) / denom;
}

double phi_coefficient(const std::vector<Instance>& insts) {
    std::vector<const Instance*> ptrs;
    ptrs.reserve(insts.size());
    for (const Instance& i : insts) ptrs.push_back(&i);
    return phi_coefficient(ptrs);
}

// ---------------------------------------------------------------- quartets

QuartetBatch sample_quartets(const Dataset& ds, int q, Rng& rng) {
    const auto train = ds.train_split();
    std::vector<int> domain_ids;
    for (const DomainSpec& d : ds.domains)
        if (d.id != ds.heldout) domain_ids.push_back(d.id);
    if (domain_ids.size() < 2)
        throw std::invalid_argument("sample_quartets: need at least two training domains, have " +
                                    std::to_string(domain_ids.size()));

    // cells[(domain, y, a01)] -> indices into train
    std::map<std::tuple<int, int, int>, std::vector<int>> cells;
    std::map<std::pair<int, int>, std::vector<int>> label_cells;  // relaxed over a
    for (std::size_t i = 0; i < train.size(); ++i) {
        const Instance* p = train[i];
        cells[{p->domain, p->y, p->a == 1 ? 1 : 0}].push_back(static_cast<int>(i));
        label_cells[{p->domain, p->y}].push_back(static_cast<int>(i));
    }
    for (int d : domain_ids)
        for (int y = 0; y <= 1; ++y)
            if (label_cells.find({d, y}) == label_cells.end())
                throw std::invalid_argument("sample_quartets: domain " + std::to_string(d) +
                                            " has no instances with label " + std::to_string(y));

    QuartetBatch batch;
    batch.quartets.reserve(q);
    auto draw = [&](int domain, int y, int a, int* relaxed) -> const Instance* {
        auto it = cells.find({domain, y, a == 1 ? 1 : 0});
        if (it == cells.end() || it->second.empty()) {
            ++(*relaxed);
            const auto& pool = label_cells.at({domain, y});
            return train[pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]];
        }
        const auto& pool = it->second;
        return train[pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]];
    };

    // base labels are stratified exactly: with y' = 1 - y inside every
    // quartet, the two sensitive groups see mirrored label fractions, so an
    // iid label draw would keep the group responsibilities apart by
    // sampling noise alone
    std::vector<int> base_labels(q, 0);
    for (int k = q / 2; k < q; ++k) base_labels[k] = 1;
    shuffle_indices(base_labels, rng);

    const int nd = static_cast<int>(domain_ids.size());
    for (int k = 0; k < q; ++k) {
        const int ei = rng.uniform_int(0, nd - 1);
        int ej = rng.uniform_int(0, nd - 2);
        if (ej >= ei) ++ej;
        const int e = domain_ids[ei], ep = domain_ids[ej];
        const int y = base_labels[k];
        const int yp = 1 - y;
        Quartet quartet;
        quartet.r1 = *draw(e, y, -1, &batch.relaxed_count);
        quartet.r2 = *draw(e, yp, 1, &batch.relaxed_count);
        quartet.r3 = *draw(ep, y, -1, &batch.relaxed_count);
        quartet.r4 = *draw(ep, yp, 1, &batch.relaxed_count);
        batch.quartets.push_back(std::move(quartet));
    }
    return batch;
}

// ---------------------------------------------------------------- csv

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_csv: cannot open " + path);
    int dim = 0;
    if (!ds.instances.empty()) dim = static_cast<int>(ds.instances.front().x.size());
    f << "domain,angle,corr,a,y";
    for (int j = 0; j < dim; ++j) f << ",x" << j;
    f << "\n";
    for (const Instance& inst : ds.instances) {
        const DomainSpec& d = ds.domain_by_id(inst.domain);
        f << inst.domain << ',' << format_double(d.angle_deg) << ',' << format_double(d.corr) << ','
          << inst.a << ',' << inst.y;
        for (double v : inst.x) f << ',' << format_double(v);
        f << "\n";
    }
}

Dataset read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_csv: empty file " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> parts;
        std::string cur;
        std::istringstream is(s);
        while (std::getline(is, cur, ',')) parts.push_back(cur);
        if (!s.empty() && s.back() == ',') parts.push_back("");
        return parts;
    };

    const auto header = split(line);
    if (header.size() < 5 || header[0] != "domain" || header[1] != "angle" ||
        header[2] != "corr" || header[3] != "a" || header[4] != "y")
        throw std::runtime_error("read_csv: unexpected header in " + path);
    const int dim = static_cast<int>(header.size()) - 5;
    for (int j = 0; j < dim; ++j)
        if (header[5 + j] != "x" + std::to_string(j))
            throw std::runtime_error("read_csv: unexpected feature column " + header[5 + j]);

    Dataset ds;
    std::map<int, DomainSpec> domains;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto parts = split(line);
        if (static_cast<int>(parts.size()) != 5 + dim)
            throw std::runtime_error("read_csv: line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(5 + dim) + " fields, got " +
                                     std::to_string(parts.size()));
        try {
            Instance inst;
            inst.domain = std::stoi(parts[0]);
            const double angle = std::stod(parts[1]);
            const double corr = std::stod(parts[2]);
            inst.a = std::stoi(parts[3]);
            inst.y = std::stoi(parts[4]);
            if (inst.a != -1 && inst.a != 1)
                throw std::runtime_error("sensitive attribute must be -1 or 1, got " + parts[3]);
            if (inst.y != 0 && inst.y != 1)
                throw std::runtime_error("label must be 0 or 1, got " + parts[4]);
            inst.x.resize(dim);
            for (int j = 0; j < dim; ++j) inst.x[j] = std::stod(parts[5 + j]);
            auto it = domains.find(inst.domain);
            if (it == domains.end()) {
                domains[inst.domain] = DomainSpec{inst.domain, angle, corr};
            } else if (it->second.angle_deg != angle || it->second.corr != corr) {
                throw std::runtime_error("inconsistent domain metadata for id " + parts[0]);
            }
            ds.instances.push_back(std::move(inst));
        } catch (const std::exception& e) {
            throw std::runtime_error("read_csv: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (auto& [id, spec] : domains) ds.domains.push_back(spec);
    return ds;
}

Tensor stack_features(const std::vector<const Instance*>& insts) {
    if (insts.empty()) throw std::invalid_argument("stack_features: empty instance list");
    const int dim = static_cast<int>(insts.front()->x.size());
    Tensor out = Tensor::zeros(static_cast<int>(insts.size()), dim);
    for (std::size_t i = 0; i < insts.size(); ++i)
        for (int j = 0; j < dim; ++j) out.at(static_cast<int>(i), j) = insts[i]->x[j];
    return out;
}

}  // namespace flair
