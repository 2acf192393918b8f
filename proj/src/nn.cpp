// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace flair {

Mlp Mlp::create(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
    Mlp net;
    net.dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l], out = dims[l + 1];
        Tensor w = Tensor::zeros(in, out);
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : w.data) v = s * rng.normal();
        net.params.push_back(std::move(w));
        net.params.push_back(Tensor::zeros(1, out));
    }
    return net;
}

Mlp Mlp::zeros(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
    Mlp net;
    net.dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        net.params.push_back(Tensor::zeros(dims[l], dims[l + 1]));
        net.params.push_back(Tensor::zeros(1, dims[l + 1]));
    }
    return net;
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != in_dim())
        throw std::invalid_argument("Mlp::forward: input size " + std::to_string(x.size()) +
                                    " does not match " + std::to_string(in_dim()));
    std::vector<double> cur = x;
    for (int l = 0; l < layers(); ++l) {
        const Tensor& w = params[2 * l];
        const Tensor& b = params[2 * l + 1];
        std::vector<double> next(w.cols(), 0.0);
        for (int j = 0; j < w.cols(); ++j) {
            double s = b.at(0, j);
            for (int i = 0; i < w.rows(); ++i) s += cur[i] * w.at(i, j);
            next[j] = (l + 1 < layers()) ? std::tanh(s) : s;
        }
        cur = std::move(next);
    }
    return cur;
}

Tensor Mlp::forward_batch(const Tensor& X) const {
    if (X.cols() != in_dim())
        throw std::invalid_argument("Mlp::forward_batch: input " + X.shape_str() +
                                    " does not match in_dim " + std::to_string(in_dim()));
    Tensor cur = X;
    for (int l = 0; l < layers(); ++l) {
        const Tensor& w = params[2 * l];
        const Tensor& b = params[2 * l + 1];
        Tensor next = Tensor::zeros(cur.rows(), w.cols());
        for (int r = 0; r < cur.rows(); ++r)
            for (int j = 0; j < w.cols(); ++j) {
                double s = b.at(0, j);
                for (int i = 0; i < w.rows(); ++i) s += cur.at(r, i) * w.at(i, j);
                next.at(r, j) = (l + 1 < layers()) ? std::tanh(s) : s;
            }
        cur = std::move(next);
    }
    return cur;
}

BoundMlp bind(Tape& t, const Mlp& net) {
    BoundMlp b;
    b.net = &net;
    b.param_ids.reserve(net.params.size());
    for (const Tensor& p : net.params) b.param_ids.push_back(t.leaf(p, true));
    return b;
}

Tape::Id BoundMlp::forward(Tape& t, Tape::Id x) const {
    Tape::Id cur = x;
    const int n_layers = net->layers();
    for (int l = 0; l < n_layers; ++l) {
        cur = t.add_row(t.matmul(cur, param_ids[2 * l]), param_ids[2 * l + 1]);
        if (l + 1 < n_layers) cur = t.tanh_op(cur);
    }
    return cur;
}

std::vector<Tensor> collect_grads(const Tape& t, const BoundMlp& b) {
    std::vector<Tensor> out;
    out.reserve(b.param_ids.size());
    for (Tape::Id id : b.param_ids) out.push_back(t.grad_or_zero(id));
    return out;
}

}  // namespace flair
