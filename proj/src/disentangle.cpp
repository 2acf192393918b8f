// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/disentangle.hpp"

#include <cmath>
#include <stdexcept>

namespace flair {

namespace {

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s;
}

Tensor rows_of(const std::vector<Quartet>& qs, const Instance Quartet::*member) {
    std::vector<const Instance*> ptrs;
    ptrs.reserve(qs.size());
    for (const Quartet& q : qs) ptrs.push_back(&(q.*member));
    return stack_features(ptrs);
}

}  // namespace

std::vector<double> standardize(const std::vector<double>& v) {
    constexpr double kEps = 1e-8;
    const int n = static_cast<int>(v.size());
    double ms = 0.0;
    for (double x : v) ms += x * x;
    ms /= n;
    const double inv = 1.0 / std::sqrt(ms + kEps);
    std::vector<double> out(v.size());
    for (int j = 0; j < n; ++j) out[j] = v[j] * inv;
    return out;
}

Tensor standardize_batch(const Tensor& m) {
    Tensor out = m;
    for (int i = 0; i < m.rows(); ++i) {
        std::vector<double> row(m.cols());
        for (int j = 0; j < m.cols(); ++j) row[j] = m.at(i, j);
        row = standardize(row);
        for (int j = 0; j < m.cols(); ++j) out.at(i, j) = row[j];
    }
    return out;
}

std::vector<double> encode_content(const Mlp& content, const std::vector<double>& x) {
    return standardize(content.forward(x));
}

Tensor encode_content_batch(const Mlp& content, const Tensor& xs) {
    return standardize_batch(content.forward_batch(xs));
}

Tape::Id content_node(Tape& t, const BoundMlp& content, Tape::Id x) {
    return t.standardize_rows(content.forward(t, x));
}

std::vector<double> transform(const EncoderParams& enc, const std::vector<double>& x_src,
                              const std::vector<double>& x_style_ref) {
    const std::vector<double> c = encode_content(enc.content, x_src);
    const std::vector<double> s = enc.style.forward(x_style_ref);
    std::vector<double> cs;
    cs.reserve(c.size() + s.size());
    cs.insert(cs.end(), c.begin(), c.end());
    cs.insert(cs.end(), s.begin(), s.end());
    return enc.decoder.forward(cs);
}

void check_invariance_pairing(const QuartetBatch& batch) {
    for (const Quartet& q : batch.quartets) {
        if (q.r1.domain != q.r2.domain || q.r1.y == q.r2.y)
            throw std::logic_error("invariance pairing violated: r1/r2 must share domain and "
                                   "differ in label");
        if (q.r3.domain != q.r4.domain || q.r3.y == q.r4.y)
            throw std::logic_error("invariance pairing violated: r3/r4 must share domain and "
                                   "differ in label");
        if (q.r1.domain == q.r3.domain)
            throw std::logic_error("invariance pairing violated: r1/r3 must come from distinct "
                                   "domains");
    }
}

double r_inv_with(const QuartetBatch& batch, const TransformFn& tf) {
    if (batch.quartets.empty()) throw std::invalid_argument("r_inv: empty batch");
    double total = 0.0;
    for (const Quartet& q : batch.quartets) {
        total += l1(q.r1.x, tf(q.r1.x, q.r2.x));
        total += l1(q.r3.x, tf(q.r3.x, q.r4.x));
    }
    return total / static_cast<double>(batch.quartets.size());
}

double r_inv(const QuartetBatch& batch, const EncoderParams& enc) {
    check_invariance_pairing(batch);
    return r_inv_with(batch, [&enc](const std::vector<double>& src, const std::vector<double>& ref) {
        return transform(enc, src, ref);
    });
}

Tape::Id r_inv_node(Tape& t, const BoundMlp& content, const BoundMlp& style,
                    const BoundMlp& decoder, const QuartetBatch& batch) {
    check_invariance_pairing(batch);
    const int q = static_cast<int>(batch.quartets.size());
    const Tape::Id x1 = t.constant(rows_of(batch.quartets, &Quartet::r1));
    const Tape::Id x2 = t.constant(rows_of(batch.quartets, &Quartet::r2));
    const Tape::Id x3 = t.constant(rows_of(batch.quartets, &Quartet::r3));
    const Tape::Id x4 = t.constant(rows_of(batch.quartets, &Quartet::r4));

    auto transform_node = [&](Tape::Id src, Tape::Id ref) {
        const Tape::Id c = content_node(t, content, src);
        const Tape::Id s = style.forward(t, ref);
        const Tape::Id cs[] = {c, s};
        return decoder.forward(t, t.hstack(cs));
    };
    const Tape::Id d12 = t.l1_distance(x1, transform_node(x1, x2));
    const Tape::Id d34 = t.l1_distance(x3, transform_node(x3, x4));
    return t.scale(t.add(d12, d34), 1.0 / q);
}

}  // namespace flair
