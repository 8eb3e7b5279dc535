#pragma once

#include "sslkit/autodiff.hpp"

namespace sslkit::model {

using ad::Tensor;

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // each d x d
  int num_heads = 1;
};

AttentionParams make_attention(int dim, int num_heads, Rng& rng);

// Multi-head scaled dot-product cross-attention: queries project from the
// first operand, keys and values from the second.
Tensor cross_attention(const Tensor& queries, const Tensor& keys_values,
                       const AttentionParams& params);

// Keeps only the top_t post-softmax weights per query row, renormalized to
// sum 1; gradients flow through the kept entries only. top_t larger than the
// key count is clamped.
Tensor sparse_cross_attention(const Tensor& queries, const Tensor& keys_values,
                              const AttentionParams& params, int top_t);

// Residual merge: layer_norm(residual + attended).
Tensor fuse_residual(const Tensor& attended, const Tensor& residual,
                     const Tensor& gain, const Tensor& bias);

// Post-norm transformer block: self-attention and a gelu MLP, each wrapped
// with a residual connection and layer normalization.
struct TransformerBlock {
  AttentionParams attn;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gain, ln2_bias;
};

TransformerBlock make_block(int dim, int num_heads, int ffn_mult, Rng& rng);

Tensor apply_block(const TransformerBlock& block, const Tensor& x);

}  // namespace sslkit::model
