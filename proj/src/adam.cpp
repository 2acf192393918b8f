// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flair {

AdamState AdamState::like(const std::vector<Tensor>& params, double lr_in) {
    AdamState st;
    st.lr = lr_in;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor& p : params) {
        st.m.push_back(Tensor(p.shape, std::vector<double>(p.size(), 0.0)));
        st.v.push_back(Tensor(p.shape, std::vector<double>(p.size(), 0.0)));
    }
    return st;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!params[t].same_shape(grads[t]))
            throw std::invalid_argument("adam_step: shape mismatch " + params[t].shape_str() +
                                        " vs " + grads[t].shape_str() + " in tensor " +
                                        std::to_string(t));
        if (!grads[t].all_finite())
            throw std::runtime_error("adam_step: non-finite gradient in tensor " +
                                     std::to_string(t) + "; training aborted");
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = params[t];
        const Tensor& g = grads[t];
        Tensor& m = st.m[t];
        Tensor& v = st.v[t];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = st.beta1 * m.data[i] + (1.0 - st.beta1) * g.data[i];
            v.data[i] = st.beta2 * v.data[i] + (1.0 - st.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace flair
