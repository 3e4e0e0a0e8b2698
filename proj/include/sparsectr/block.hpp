#pragma once

#include <cmath>
#include <vector>

#include "sparsectr/attention.hpp"
#include "sparsectr/common.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/tensor.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Residual block, pre-norm on both sublayers:
//
//   y   = x + Attention(RMSNorm(x))
//   out = y + FFN(RMSNorm(y)),  FFN(u) = (swish(u W1) ⊙ (u W2)) W3
//
// W1 and W2 expand d -> 3d, W3 projects back. No bias vectors anywhere, so a
// zero row stays zero through every sublayer and padding rows ride the
// residual stream untouched.
// ---------------------------------------------------------------------------

struct BlockParams {
  AttentionParams attn;
  Tensor norm1_gain, norm2_gain;  // 1 x d, init 1
  Tensor ffn_w1, ffn_w2;          // d x 3d
  Tensor ffn_w3;                  // 3d x d
};

inline BlockParams make_block_params(std::size_t dim, std::size_t heads, std::size_t user_dim,
                                     Rng& rng) {
  auto randn = [&rng](std::size_t r, std::size_t c, double stddev) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::param(r, c, std::move(v));
  };
  BlockParams b;
  b.attn = make_attention_params(dim, heads, user_dim, rng);
  b.norm1_gain = Tensor::param(1, dim, std::vector<double>(dim, 1.0));
  b.norm2_gain = Tensor::param(1, dim, std::vector<double>(dim, 1.0));
  const std::size_t hidden = 3 * dim;
  b.ffn_w1 = randn(dim, hidden, 1.0 / std::sqrt(static_cast<double>(dim)));
  b.ffn_w2 = randn(dim, hidden, 1.0 / std::sqrt(static_cast<double>(dim)));
  b.ffn_w3 = randn(hidden, dim, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return b;
}

inline Tensor block_ffn(const BlockParams& p, const Tensor& u) {
  return matmul(mul(swish(matmul(u, p.ffn_w1)), matmul(u, p.ffn_w2)), p.ffn_w3);
}

struct BlockResult {
  Tensor output;
  EvoResult attn;
};

inline BlockResult block_forward(const BlockParams& p, const AttentionContext& ctx,
                                 const Tensor& x, const Tensor& e_user) {
  BlockResult res;
  res.attn = evo_attention(p.attn, ctx, rmsnorm(x, p.norm1_gain), e_user);
  Tensor y = add(x, res.attn.output);
  res.output = add(y, block_ffn(p, rmsnorm(y, p.norm2_gain)));
  return res;
}

// Same residual structure with the dense reference in the attention slot.
inline Tensor block_forward_full(const BlockParams& p, const FullContext& ctx, const Tensor& x) {
  Tensor y = add(x, full_attention(p.attn, ctx, rmsnorm(x, p.norm1_gain)));
  return add(y, block_ffn(p, rmsnorm(y, p.norm2_gain)));
}

}  // namespace sparsectr
