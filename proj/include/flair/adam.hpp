// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "flair/tensor.hpp"

namespace flair {

/// Adam optimizer state for a fixed list of parameter tensors.
struct AdamState {
    std::vector<Tensor> m;  // first moment, one per parameter tensor
    std::vector<Tensor> v;  // second moment
    long long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-3;

    static AdamState like(const std::vector<Tensor>& params, double lr);
};

/// One Adam update in place. Throws on non-finite gradients so a training
/// loop can abort with a diagnostic instead of silently corrupting params.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace flair
