// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "flair/datagen.hpp"
#include "flair/nn.hpp"

namespace flair {

/// Content encoder, style encoder and decoder. The transformation maps
/// (content source, style source) back to feature space.
struct EncoderParams {
    Mlp content;  // x -> c
    Mlp style;    // x -> s
    Mlp decoder;  // (c, s) -> x_hat
};

/// Per-instance standardization (zero mean, unit variance over the vector).
/// The content encoder output is standardized so the mixture losses cannot
/// be gamed by shrinking the content scale.
std::vector<double> standardize(const std::vector<double>& v);
Tensor standardize_batch(const Tensor& m);

std::vector<double> encode_content(const Mlp& content, const std::vector<double>& x);
Tensor encode_content_batch(const Mlp& content, const Tensor& xs);

/// Tape-side content encoding: MLP forward plus row standardization.
Tape::Id content_node(Tape& t, const BoundMlp& content, Tape::Id x);

/// D(h_c(x_src), h_s(x_style_ref)).
std::vector<double> transform(const EncoderParams& enc, const std::vector<double>& x_src,
                              const std::vector<double>& x_style_ref);

using TransformFn =
    std::function<std::vector<double>(const std::vector<double>&, const std::vector<double>&)>;

/// Mean over quartets of d[r1, T(r1, r2)] + d[r3, T(r3, r4)] with d = L1.
/// The generic form exists so tests can plug in reference transforms.
double r_inv_with(const QuartetBatch& batch, const TransformFn& tf);
double r_inv(const QuartetBatch& batch, const EncoderParams& enc);

/// Checks the loss pairing structure: both distance terms compare an
/// instance against a transform whose style source shares its domain and
/// differs in label. Throws on violation.
void check_invariance_pairing(const QuartetBatch& batch);

/// Tape builder used by the trainer; asserts the pairing structure.
Tape::Id r_inv_node(Tape& t, const BoundMlp& content, const BoundMlp& style,
                    const BoundMlp& decoder, const QuartetBatch& batch);

// checkpoint io for a named tensor list lives in trainer.hpp (model level)

}  // namespace flair
