#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsectr/chunking.hpp"
#include "sparsectr/common.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/temporal.hpp"
#include "sparsectr/tensor.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Evolving sparse self-attention.
//
// The input sequence holds |B| behavior rows (left-padded) followed by |C|
// candidate rows. Queries come from every row; keys and values come from
// behavior rows only, so candidates never see each other and scoring one
// candidate is unaffected by the rest of the slate. Each head mixes three
// sparse views instead of the full n x n score matrix:
//
//   global:      the query against one aggregate per time chunk (mean-pooled
//                behaviors through a gated MLP), capturing long-range drift
//                at |P| keys per query;
//   transition:  the query against the last m events of every chunk, the
//                hand-off points where interest shifts;
//   local:       the query against its own trailing window of w events plus
//                a compressed user row u_c, capturing short-term intent
//                anchored by stable user identity.
//
// A per-head learned gate (softmax over three logits computed from the
// concatenated branch outputs) fuses the branches per query row. All score
// logits carry the composite relative temporal bias; chunk keys use the
// chunk's mean event time. Scores scale by 1 / sqrt(d_h).
//
// Padding rows neither serve as keys nor receive meaningful outputs: their
// query rows are fully masked and come out exactly zero.
// ---------------------------------------------------------------------------

struct AttentionParams {
  std::size_t dim = 0;
  std::size_t heads = 0;
  Tensor w_q, w_k, w_v, w_o;      // d x d projections
  Tensor agg_w1, agg_w2;          // d x d chunk-aggregation MLP (swish hidden)
  Tensor user_w1, user_w2;        // user_dim x d, d x d user-compression MLP
  std::vector<Tensor> w_gate;     // per head: (3 * head_dim) x 3
  TemporalSlopes slopes;          // three 1 x heads slope rows

  std::size_t head_dim() const { return dim / heads; }
};

inline AttentionParams make_attention_params(std::size_t dim, std::size_t heads,
                                             std::size_t user_dim, Rng& rng) {
  if (heads == 0 || dim % heads != 0)
    throw ShapeError("attention: dim " + std::to_string(dim) + " not divisible by heads " +
                     std::to_string(heads));
  auto randn = [&rng](std::size_t r, std::size_t c, double stddev) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::param(r, c, std::move(v));
  };
  AttentionParams p;
  p.dim = dim;
  p.heads = heads;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(dim));
  p.w_q = randn(dim, dim, proj_std);
  p.w_k = randn(dim, dim, proj_std);
  p.w_v = randn(dim, dim, proj_std);
  p.w_o = randn(dim, dim, proj_std);
  p.agg_w1 = randn(dim, dim, proj_std);
  p.agg_w2 = randn(dim, dim, proj_std);
  p.user_w1 = randn(user_dim, dim, 1.0 / std::sqrt(static_cast<double>(user_dim)));
  p.user_w2 = randn(dim, dim, proj_std);
  // Zero gate logits start every query at an even one-third blend.
  for (std::size_t h = 0; h < heads; ++h)
    p.w_gate.push_back(Tensor::param_zeros(3 * p.head_dim(), 3));
  p.slopes = make_temporal_slopes(heads);
  return p;
}

// --------------------------------------------------------------------------
// Per-sample geometry: chunk layout, key indices, masks, and temporal bias
// coefficients. Depends only on timestamps and sizes, so one context serves
// every layer and every training step that touches the sample.
// --------------------------------------------------------------------------

struct AttentionContext {
  std::size_t num_behaviors = 0;
  std::size_t num_candidates = 0;
  std::size_t window = 0;      // w
  std::size_t transition = 0;  // m
  ChunkPartition part;
  Tensor pool;                          // |P| x |B| chunk mean-pooling matrix
  std::vector<std::int64_t> trans_idx;  // m|P| behavior positions, -1 absent
  std::vector<std::int64_t> local_idx;  // n*(w+1) rows into [u_c; behaviors], -1 absent
  Tensor global_mask;                   // n x |P|
  Tensor trans_mask;                    // n x m|P|
  Tensor local_mask;                    // n x (w+1)
  BiasCoefficients global_coeff, trans_coeff, local_coeff;

  std::size_t total_rows() const { return num_behaviors + num_candidates; }
};

inline AttentionContext make_attention_context(const std::vector<std::uint64_t>& behavior_times,
                                               const std::vector<std::uint64_t>& candidate_times,
                                               std::size_t num_chunks,
                                               std::size_t transition_width,
                                               std::size_t window) {
  if (transition_width == 0 || window == 0)
    throw DataError("attention context: transition width and window must be positive");
  AttentionContext ctx;
  ctx.num_behaviors = behavior_times.size();
  ctx.num_candidates = candidate_times.size();
  ctx.window = window;
  ctx.transition = transition_width;
  ctx.part = chunk_sequence(behavior_times, num_chunks);

  const std::size_t nb = ctx.num_behaviors, nc = ctx.num_candidates, n = nb + nc;
  const std::size_t np = num_chunks, m = transition_width, w = window;
  const std::size_t z = ctx.part.padding;

  ctx.pool = Tensor::zeros(np, nb);
  for (std::size_t k = 0; k < np; ++k)
    if (!ctx.part.empty(k)) {
      const double inv = 1.0 / static_cast<double>(ctx.part.size(k));
      for (std::size_t i = ctx.part.begin(k); i < ctx.part.end(k); ++i) ctx.pool.at(k, i) = inv;
    }

  std::vector<double> chunk_mean(np);
  std::vector<bool> chunk_weekend(np);
  for (std::size_t k = 0; k < np; ++k) {
    chunk_mean[k] = chunk_mean_time(behavior_times, ctx.part, k);
    chunk_weekend[k] = is_weekend_real(chunk_mean[k]);
  }

  const auto query_time = [&](std::size_t i) -> std::uint64_t {
    return i < nb ? behavior_times[i] : candidate_times[i - nb];
  };
  const auto is_padding_query = [&](std::size_t i) { return i < nb && i < z; };

  // Global branch: one key per non-empty chunk; a behavior query sees a chunk
  // only once the chunk is fully in its past; candidates see every chunk.
  ctx.global_mask = Tensor::zeros(n, np);
  ctx.global_coeff = {Tensor::zeros(n, np), Tensor::zeros(n, np), Tensor::zeros(n, np)};
  for (std::size_t i = 0; i < n; ++i) {
    if (is_padding_query(i)) continue;
    const bool cand = i >= nb;
    for (std::size_t k = 0; k < np; ++k) {
      if (ctx.part.empty(k)) continue;
      if (!cand && ctx.part.end(k) > i + 1) continue;
      ctx.global_mask.at(i, k) = 1.0;
      const double delta = static_cast<double>(query_time(i)) - chunk_mean[k];
      ctx.global_coeff.interval.at(i, k) = interval_coeff(delta);
      ctx.global_coeff.hour.at(i, k) = hour_coeff(delta);
      ctx.global_coeff.week.at(i, k) =
          week_coeff(is_weekend(query_time(i)), chunk_weekend[k]);
    }
  }

  // Transition branch: the last min(m, size) events of each chunk occupy the
  // chunk's m slots in event order; unused slots stay absent.
  ctx.trans_idx.assign(np * m, -1);
  for (std::size_t k = 0; k < np; ++k) {
    const std::size_t take = std::min(m, ctx.part.size(k));
    for (std::size_t r = 0; r < take; ++r)
      ctx.trans_idx[k * m + r] =
          static_cast<std::int64_t>(ctx.part.end(k) - take + r);
  }
  ctx.trans_mask = Tensor::zeros(n, np * m);
  ctx.trans_coeff = {Tensor::zeros(n, np * m), Tensor::zeros(n, np * m),
                     Tensor::zeros(n, np * m)};
  for (std::size_t i = 0; i < n; ++i) {
    if (is_padding_query(i)) continue;
    const bool cand = i >= nb;
    for (std::size_t s = 0; s < np * m; ++s) {
      const std::int64_t src = ctx.trans_idx[s];
      if (src < 0) continue;
      if (!cand && static_cast<std::size_t>(src) > i) continue;
      ctx.trans_mask.at(i, s) = 1.0;
      const std::uint64_t kt = behavior_times[static_cast<std::size_t>(src)];
      const double delta = static_cast<double>(query_time(i)) - static_cast<double>(kt);
      ctx.trans_coeff.interval.at(i, s) = interval_coeff(delta);
      ctx.trans_coeff.hour.at(i, s) = hour_coeff(delta);
      ctx.trans_coeff.week.at(i, s) = week_coeff(is_weekend(query_time(i)), is_weekend(kt));
    }
  }

  // Local branch: slot 0 is the compressed user row, slots 1..w the trailing
  // event window (for candidates, the window ending at the newest behavior).
  ctx.local_idx.assign(n * (w + 1), -1);
  ctx.local_mask = Tensor::zeros(n, w + 1);
  ctx.local_coeff = {Tensor::zeros(n, w + 1), Tensor::zeros(n, w + 1),
                     Tensor::zeros(n, w + 1)};
  for (std::size_t i = 0; i < n; ++i) {
    if (is_padding_query(i)) continue;
    ctx.local_idx[i * (w + 1)] = 0;  // u_c; no temporal relation, zero bias
    ctx.local_mask.at(i, 0) = 1.0;
    const std::size_t anchor = i < nb ? i : nb - 1;  // candidates use the newest window
    if (nb == 0 || z == nb) continue;                // no valid behaviors at all
    for (std::size_t c = 1; c <= w; ++c) {
      const std::int64_t pos = static_cast<std::int64_t>(anchor) -
                               static_cast<std::int64_t>(w) + static_cast<std::int64_t>(c);
      if (pos < static_cast<std::int64_t>(z)) continue;
      ctx.local_idx[i * (w + 1) + c] = pos + 1;  // +1 for the u_c row in front
      ctx.local_mask.at(i, c) = 1.0;
      const std::uint64_t kt = behavior_times[static_cast<std::size_t>(pos)];
      const double delta = static_cast<double>(query_time(i)) - static_cast<double>(kt);
      ctx.local_coeff.interval.at(i, c) = interval_coeff(delta);
      ctx.local_coeff.hour.at(i, c) = hour_coeff(delta);
      ctx.local_coeff.week.at(i, c) = week_coeff(is_weekend(query_time(i)), is_weekend(kt));
    }
  }
  return ctx;
}

// --------------------------------------------------------------------------
// Forward pass
// --------------------------------------------------------------------------

struct EvoResult {
  Tensor output;                        // n x d
  std::vector<Tensor> branch_global;    // per head, n x head_dim
  std::vector<Tensor> branch_transition;
  std::vector<Tensor> branch_local;
  std::vector<Tensor> alphas;           // per head, n x 3 gate weights
};

inline EvoResult evo_attention(const AttentionParams& p, const AttentionContext& ctx,
                               const Tensor& e_seq, const Tensor& e_user) {
  const std::size_t n = ctx.total_rows(), nb = ctx.num_behaviors;
  const std::size_t dh = p.head_dim(), w1 = ctx.window + 1;
  if (e_seq.rows() != n || e_seq.cols() != p.dim)
    throw ShapeError("evo_attention: sequence " + detail::shape_str(e_seq.rows(), e_seq.cols()) +
                     " vs expected " + detail::shape_str(n, p.dim));
  if (e_user.rows() != 1 || e_user.cols() != p.user_w1.rows())
    throw ShapeError("evo_attention: user row " + detail::shape_str(e_user.rows(), e_user.cols()) +
                     " vs expected " + detail::shape_str(1, p.user_w1.rows()));

  Tensor u_c = matmul(swish(matmul(e_user, p.user_w1)), p.user_w2);
  Tensor e_b = slice_rows(e_seq, 0, nb);
  Tensor q = matmul(e_seq, p.w_q);
  Tensor k = matmul(e_b, p.w_k);
  Tensor v = matmul(e_b, p.w_v);
  Tensor agg_mean = matmul(ctx.pool, e_b);
  Tensor agg = matmul(swish(matmul(agg_mean, p.agg_w1)), p.agg_w2);
  Tensor k_chunk = matmul(agg, p.w_k);
  Tensor v_chunk = matmul(agg, p.w_v);
  Tensor k_local_src = concat_rows({u_c, k});
  Tensor v_local_src = concat_rows({u_c, v});

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor gate_mask = Tensor::full(n, 3, 1.0);

  EvoResult res;
  std::vector<Tensor> fused;
  fused.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t off = h * dh;
    Tensor qh = slice_cols(q, off, dh);
    Tensor kh = slice_cols(k, off, dh);
    Tensor vh = slice_cols(v, off, dh);

    Tensor global_logits;
    {
      FlopScope scope(FlopCategory::scores);
      global_logits = scale(matmul(qh, transpose(slice_cols(k_chunk, off, dh))), inv_scale);
    }
    global_logits = add(global_logits, head_bias(p.slopes, h, ctx.global_coeff));
    Tensor global_probs = softmax_masked(global_logits, ctx.global_mask);
    Tensor out_global;
    {
      FlopScope scope(FlopCategory::scores);
      out_global = matmul(global_probs, slice_cols(v_chunk, off, dh));
    }

    Tensor k_trans = gather_rows(kh, ctx.trans_idx);
    Tensor v_trans = gather_rows(vh, ctx.trans_idx);
    Tensor trans_logits;
    {
      FlopScope scope(FlopCategory::scores);
      trans_logits = scale(matmul(qh, transpose(k_trans)), inv_scale);
    }
    trans_logits = add(trans_logits, head_bias(p.slopes, h, ctx.trans_coeff));
    Tensor trans_probs = softmax_masked(trans_logits, ctx.trans_mask);
    Tensor out_trans;
    {
      FlopScope scope(FlopCategory::scores);
      out_trans = matmul(trans_probs, v_trans);
    }

    Tensor local_logits;
    {
      FlopScope scope(FlopCategory::scores);
      local_logits = window_logits(qh, slice_cols(k_local_src, off, dh), ctx.local_idx, w1,
                                   inv_scale);
    }
    local_logits = add(local_logits, head_bias(p.slopes, h, ctx.local_coeff));
    Tensor local_probs = softmax_masked(local_logits, ctx.local_mask);
    Tensor out_local;
    {
      FlopScope scope(FlopCategory::scores);
      out_local = window_mix(local_probs, slice_cols(v_local_src, off, dh), ctx.local_idx, w1);
    }

    Tensor gate_logits = matmul(concat_cols({out_global, out_trans, out_local}), p.w_gate[h]);
    Tensor alphas = softmax_masked(gate_logits, gate_mask);
    Tensor fh = add(add(row_scale(slice_cols(alphas, 0, 1), out_global),
                        row_scale(slice_cols(alphas, 1, 1), out_trans)),
                    row_scale(slice_cols(alphas, 2, 1), out_local));

    fused.push_back(fh);
    res.branch_global.push_back(out_global);
    res.branch_transition.push_back(out_trans);
    res.branch_local.push_back(out_local);
    res.alphas.push_back(alphas);
  }
  res.output = matmul(concat_cols(fused), p.w_o);
  return res;
}

// --------------------------------------------------------------------------
// Dense reference: ordinary causal multi-head attention over every valid
// behavior key, with the same projections and temporal biases but no
// chunking, windows, user row, or gating. Used for accuracy and cost
// comparisons against the sparse path.
// --------------------------------------------------------------------------

struct FullContext {
  std::size_t num_behaviors = 0;
  std::size_t num_candidates = 0;
  Tensor mask;             // n x |B|
  BiasCoefficients coeff;  // n x |B|

  std::size_t total_rows() const { return num_behaviors + num_candidates; }
};

inline FullContext make_full_context(const std::vector<std::uint64_t>& behavior_times,
                                     const std::vector<std::uint64_t>& candidate_times) {
  FullContext ctx;
  ctx.num_behaviors = behavior_times.size();
  ctx.num_candidates = candidate_times.size();
  const std::size_t nb = ctx.num_behaviors, n = nb + ctx.num_candidates;
  std::size_t z = 0;
  while (z < nb && behavior_times[z] == 0) ++z;

  ctx.mask = Tensor::zeros(n, nb);
  ctx.coeff = {Tensor::zeros(n, nb), Tensor::zeros(n, nb), Tensor::zeros(n, nb)};
  for (std::size_t i = 0; i < n; ++i) {
    const bool cand = i >= nb;
    const std::uint64_t qt = cand ? candidate_times[i - nb] : behavior_times[i];
    if (!cand && i < z) continue;
    for (std::size_t j = z; j < nb; ++j) {
      if (!cand && j > i) continue;
      ctx.mask.at(i, j) = 1.0;
      const double delta = static_cast<double>(qt) - static_cast<double>(behavior_times[j]);
      ctx.coeff.interval.at(i, j) = interval_coeff(delta);
      ctx.coeff.hour.at(i, j) = hour_coeff(delta);
      ctx.coeff.week.at(i, j) = week_coeff(is_weekend(qt), is_weekend(behavior_times[j]));
    }
  }
  return ctx;
}

inline Tensor full_attention(const AttentionParams& p, const FullContext& ctx,
                             const Tensor& e_seq) {
  const std::size_t n = ctx.total_rows(), nb = ctx.num_behaviors, dh = p.head_dim();
  if (e_seq.rows() != n || e_seq.cols() != p.dim)
    throw ShapeError("full_attention: sequence " +
                     detail::shape_str(e_seq.rows(), e_seq.cols()) + " vs expected " +
                     detail::shape_str(n, p.dim));
  Tensor e_b = slice_rows(e_seq, 0, nb);
  Tensor q = matmul(e_seq, p.w_q);
  Tensor k = matmul(e_b, p.w_k);
  Tensor v = matmul(e_b, p.w_v);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t off = h * dh;
    Tensor qh = slice_cols(q, off, dh);
    Tensor kh = slice_cols(k, off, dh);
    Tensor vh = slice_cols(v, off, dh);
    Tensor logits;
    {
      FlopScope scope(FlopCategory::scores);
      logits = scale(matmul(qh, transpose(kh)), inv_scale);
    }
    logits = add(logits, head_bias(p.slopes, h, ctx.coeff));
    Tensor probs = softmax_masked(logits, ctx.mask);
    Tensor out;
    {
      FlopScope scope(FlopCategory::scores);
      out = matmul(probs, vh);
    }
    heads.push_back(out);
  }
  return matmul(concat_cols(heads), p.w_o);
}

}  // namespace sparsectr
