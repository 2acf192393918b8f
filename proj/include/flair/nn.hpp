// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "flair/rng.hpp"
#include "flair/tape.hpp"
#include "flair/tensor.hpp"

namespace flair {

/// Fully connected network with tanh hidden activations and a linear output
/// layer. Weights are stored as [W0, b0, W1, b1, ...] with W [in x out] and
/// b [1 x out].
struct Mlp {
    std::vector<int> dims;       // {in, hidden..., out}
    std::vector<Tensor> params;  // 2 tensors per layer

    static Mlp create(const std::vector<int>& dims, Rng& rng);
    static Mlp zeros(const std::vector<int>& dims);

    int in_dim() const { return dims.front(); }
    int out_dim() const { return dims.back(); }
    int layers() const { return static_cast<int>(dims.size()) - 1; }

    /// Plain forward pass on a single input vector (no tape).
    std::vector<double> forward(const std::vector<double>& x) const;

    /// Plain forward pass on a [N x in] batch (no tape).
    Tensor forward_batch(const Tensor& X) const;
};

/// A network registered on a tape: params as gradient-tracked leaves.
struct BoundMlp {
    const Mlp* net = nullptr;
    std::vector<Tape::Id> param_ids;

    Tape::Id forward(Tape& t, Tape::Id x) const;
};

BoundMlp bind(Tape& t, const Mlp& net);

/// Gradients of a bound network after backward, in parameter order.
std::vector<Tensor> collect_grads(const Tape& t, const BoundMlp& b);

}  // namespace flair
