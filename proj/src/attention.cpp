#include "sslkit/attention.hpp"

#include <cmath>
#include <cstdio>

namespace sslkit::model {

using namespace sslkit::ad;

namespace {

Tensor multi_head(const Tensor& queries, const Tensor& keys_values,
                  const AttentionParams& p, int top_t) {
  const int dim = p.w_q.cols();
  if (queries.cols() != dim || keys_values.cols() != dim) {
    throw ShapeError("attention operands must match the projection width");
  }
  if (dim % p.num_heads != 0) {
    throw ShapeError("embedding width must divide evenly into heads");
  }
  const int dk = dim / p.num_heads;
  const int keys = keys_values.rows();
  int t = top_t;
  if (t > keys) {
    std::fprintf(stderr, "sslkit: top_t %d clamped to key count %d\n", t, keys);
    t = keys;
  }

  const Tensor q = matmul(queries, p.w_q);
  const Tensor k = matmul(keys_values, p.w_k);
  const Tensor v = matmul(keys_values, p.w_v);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(p.num_heads));
  for (int h = 0; h < p.num_heads; ++h) {
    const Tensor qh = slice(q, 1, h * dk, dk);
    const Tensor kh = slice(k, 1, h * dk, dk);
    const Tensor vh = slice(v, 1, h * dk, dk);
    const Tensor scores =
        scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dk)));
    Tensor weights = softmax(scores, 1);
    if (t > 0 && t < keys) {
      const Tensor mask = topk_row_mask(weights, t);
      const Tensor kept = mul(weights, mask);
      weights = mul(kept, reciprocal(row_sum(kept)));
    }
    // t == keys keeps every weight: identical to the dense path.
    heads.push_back(matmul(weights, vh));
  }
  const Tensor merged = p.num_heads == 1 ? heads[0] : concat(heads, 1);
  return matmul(merged, p.w_o);
}

}  // namespace

AttentionParams make_attention(int dim, int num_heads, Rng& rng) {
  if (dim % num_heads != 0) {
    throw ConfigError("embedding width must be divisible by the head count");
  }
  AttentionParams p;
  p.num_heads = num_heads;
  p.w_q = param_xavier(dim, dim, rng);
  p.w_k = param_xavier(dim, dim, rng);
  p.w_v = param_xavier(dim, dim, rng);
  p.w_o = param_xavier(dim, dim, rng);
  return p;
}

Tensor cross_attention(const Tensor& queries, const Tensor& keys_values,
                       const AttentionParams& params) {
  return multi_head(queries, keys_values, params, 0);
}

Tensor sparse_cross_attention(const Tensor& queries, const Tensor& keys_values,
                              const AttentionParams& params, int top_t) {
  if (top_t < 1) throw ConfigError("top_t must be at least 1");
  return multi_head(queries, keys_values, params, top_t);
}

Tensor fuse_residual(const Tensor& attended, const Tensor& residual,
                     const Tensor& gain, const Tensor& bias) {
  return layer_norm(add(residual, attended), gain, bias);
}

TransformerBlock make_block(int dim, int num_heads, int ffn_mult, Rng& rng) {
  TransformerBlock b;
  b.attn = make_attention(dim, num_heads, rng);
  b.ln1_gain = param_ones(1, dim);
  b.ln1_bias = param_zeros(1, dim);
  b.ffn_w1 = param_xavier(dim, ffn_mult * dim, rng);
  b.ffn_b1 = param_zeros(1, ffn_mult * dim);
  b.ffn_w2 = param_xavier(ffn_mult * dim, dim, rng);
  b.ffn_b2 = param_zeros(1, dim);
  b.ln2_gain = param_ones(1, dim);
  b.ln2_bias = param_zeros(1, dim);
  return b;
}

Tensor apply_block(const TransformerBlock& block, const Tensor& x) {
  const Tensor attended = cross_attention(x, x, block.attn);
  const Tensor h = layer_norm(add(x, attended), block.ln1_gain, block.ln1_bias);
  const Tensor ff =
      add(matmul(gelu(add(matmul(h, block.ffn_w1), block.ffn_b1)), block.ffn_w2),
          block.ffn_b2);
  return layer_norm(add(h, ff), block.ln2_gain, block.ln2_bias);
}

}  // namespace sslkit::model
