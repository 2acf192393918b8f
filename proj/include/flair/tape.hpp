// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "flair/tensor.hpp"

namespace flair {

/// Reverse-mode autodiff on a single-use tape. Nodes are appended in
/// topological order, so the backward pass is a reverse walk over the node
/// vector. One training step owns one tape; tapes are not thread-safe.
class Tape {
  public:
    using Id = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf holding a value; set requires_grad for trainable parameters.
    Id leaf(Tensor value, bool requires_grad);
    Id constant(Tensor value) { return leaf(std::move(value), false); }

    // -------- arithmetic --------
    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);  // elementwise
    Id add_row(Id a, Id r);  // broadcast [1xn] over rows of [mxn]
    Id sub_row(Id a, Id r);
    Id mul_row(Id a, Id r);
    Id scale(Id a, double s);
    Id add_const(Id a, double v);

    // -------- elementwise functions --------
    Id relu(Id a);
    Id tanh_op(Id a);
    Id log_op(Id a);
    Id exp_op(Id a);
    Id square(Id a);
    Id abs_op(Id a);   // subgradient 0 at 0
    Id sqrt_op(Id a);  // subgradient 0 at 0

    // -------- reductions / structure --------
    Id sum(Id a);       // scalar
    Id mean(Id a);      // scalar
    Id row_sum(Id a);   // [mxn] -> [mx1]
    Id col_mean(Id a);  // [mxn] -> [1xn]
    Id hstack(std::span<const Id> parts);  // concat along columns

    /// Per-row standardization (zero mean, unit variance across columns).
    Id standardize_rows(Id a);

    // -------- batched softmax family --------
    Id softmax_rows(Id a);
    Id logsumexp_rows(Id a);  // [mxn] -> [mx1], stable

    /// Mean over rows of the softmax negative log likelihood; labels[i] is
    /// the class index for row i.
    Id cross_entropy_logits(Id logits, std::vector<int> labels);

    // -------- distances (scalar outputs over whole tensors) --------
    Id l1_distance(Id a, Id b);        // sum |a - b|
    Id sqeuclid_distance(Id a, Id b);  // sum (a - b)^2

    /// Populate gradients of every node reachable from a scalar root.
    void backward(Id root);

    const Tensor& value(Id id) const { return nodes_[id].value; }
    const Tensor& grad(Id id) const;
    /// Gradient if populated, zeros otherwise (for params unused by a loss).
    Tensor grad_or_zero(Id id) const;
    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        bool needs_grad = false;
        bool grad_ready = false;
        std::function<void()> back;  // captures indices, pulls from grads
    };

    Id push(Tensor value, bool needs_grad, std::function<void()> back);
    Tensor& grad_buf(Id id);
    bool track(Id a) const { return nodes_[a].needs_grad; }

    std::vector<Node> nodes_;
    friend struct TapeAccess;
};

}  // namespace flair
