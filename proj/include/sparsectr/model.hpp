#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsectr/block.hpp"
#include "sparsectr/common.hpp"
#include "sparsectr/data.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/tensor.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// The full ranking model: per-field embeddings, a stack of residual sparse
// attention blocks over [behaviors; candidates], and an elementwise
// user-candidate interaction head producing one click probability per
// candidate. Candidates never key into attention, so a slate of |C|
// candidates scores identically to |C| separate single-candidate calls.
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t blocks = 2;
  std::size_t heads = 8;
  std::size_t max_behaviors = 64;     // |B|, fixed padded history length
  std::size_t num_chunks = 8;         // |P|
  std::size_t transition = 2;         // m, events kept per chunk boundary
  std::size_t window = 8;             // w, local window length
  std::size_t num_items = 1000;
  std::size_t num_categories = 20;
  std::size_t num_user_values = 1000; // vocabulary per user profile field
  std::size_t num_user_fields = 2;
  std::size_t predict_hidden = 0;     // 0 = use dim
  std::string attention = "evo";      // "evo" or "full"
  bool per_block_bias_slopes = false; // true: each block learns its own slopes
  std::uint64_t candidate_gap_seconds = 3600;  // exposure lag after newest event

  std::size_t user_dim() const { return num_user_fields * dim; }
  std::size_t hidden() const { return predict_hidden == 0 ? dim : predict_hidden; }

  void validate() const {
    if (dim == 0 || blocks == 0 || heads == 0 || dim % heads != 0)
      throw DataError("config: dim must be a positive multiple of heads");
    if (max_behaviors == 0 || num_chunks == 0 || transition == 0 || window == 0)
      throw DataError("config: sequence geometry values must be positive");
    if (num_items == 0 || num_categories == 0 || num_user_values == 0 ||
        num_user_fields == 0)
      throw DataError("config: vocabulary sizes must be positive");
    if (attention != "evo" && attention != "full")
      throw DataError("config: attention must be \"evo\" or \"full\", got \"" + attention +
                      "\"");
  }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"dim", c.dim},
                        {"blocks", c.blocks},
                        {"heads", c.heads},
                        {"max_behaviors", c.max_behaviors},
                        {"num_chunks", c.num_chunks},
                        {"transition", c.transition},
                        {"window", c.window},
                        {"num_items", c.num_items},
                        {"num_categories", c.num_categories},
                        {"num_user_values", c.num_user_values},
                        {"num_user_fields", c.num_user_fields},
                        {"predict_hidden", c.predict_hidden},
                        {"attention", c.attention},
                        {"per_block_bias_slopes", c.per_block_bias_slopes},
                        {"candidate_gap_seconds", c.candidate_gap_seconds}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig d;  // defaults
  ModelConfig c;
  c.dim = j.value("dim", d.dim);
  c.blocks = j.value("blocks", d.blocks);
  c.heads = j.value("heads", d.heads);
  c.max_behaviors = j.value("max_behaviors", d.max_behaviors);
  c.num_chunks = j.value("num_chunks", d.num_chunks);
  c.transition = j.value("transition", d.transition);
  c.window = j.value("window", d.window);
  c.num_items = j.value("num_items", d.num_items);
  c.num_categories = j.value("num_categories", d.num_categories);
  c.num_user_values = j.value("num_user_values", d.num_user_values);
  c.num_user_fields = j.value("num_user_fields", d.num_user_fields);
  c.predict_hidden = j.value("predict_hidden", d.predict_hidden);
  c.attention = j.value("attention", d.attention);
  c.per_block_bias_slopes = j.value("per_block_bias_slopes", d.per_block_bias_slopes);
  c.candidate_gap_seconds = j.value("candidate_gap_seconds", d.candidate_gap_seconds);
  c.validate();
  return c;
}

struct ModelParams {
  ModelConfig config;
  Tensor item_table;               // num_items x d
  Tensor category_table;           // num_categories x d
  Tensor hour_table;               // 24 x d
  Tensor weekend_table;            // 2 x d
  Tensor numeric_row;              // 1 x d, scaled by the numeric feature value
  std::vector<Tensor> user_tables; // per field: num_user_values x d
  Tensor behavior_proj;            // 2d x d
  Tensor candidate_proj;           // 5d x d
  std::vector<BlockParams> blocks;
  Tensor w4;                       // d x d, candidate side of the head
  Tensor w5;                       // user_dim x d, user side of the head
  Tensor predict_w1;               // d x hidden
  Tensor predict_w2;               // hidden x 1
};

inline ModelParams make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.dim;
  auto randn = [&rng](std::size_t r, std::size_t c, double stddev) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::param(r, c, std::move(v));
  };
  const double table_std = 1.0 / std::sqrt(static_cast<double>(d));

  ModelParams p;
  p.config = config;
  p.item_table = randn(config.num_items, d, table_std);
  p.category_table = randn(config.num_categories, d, table_std);
  p.hour_table = randn(24, d, table_std);
  p.weekend_table = randn(2, d, table_std);
  p.numeric_row = randn(1, d, table_std);
  for (std::size_t f = 0; f < config.num_user_fields; ++f)
    p.user_tables.push_back(randn(config.num_user_values, d, table_std));
  p.behavior_proj = randn(2 * d, d, 1.0 / std::sqrt(2.0 * static_cast<double>(d)));
  p.candidate_proj = randn(5 * d, d, 1.0 / std::sqrt(5.0 * static_cast<double>(d)));
  for (std::size_t b = 0; b < config.blocks; ++b)
    p.blocks.push_back(make_block_params(d, config.heads, config.user_dim(), rng));
  if (!config.per_block_bias_slopes)
    for (std::size_t b = 1; b < config.blocks; ++b)
      p.blocks[b].attn.slopes = p.blocks[0].attn.slopes;  // shared handles
  p.w4 = randn(d, d, table_std);
  p.w5 = randn(config.user_dim(), d, 1.0 / std::sqrt(static_cast<double>(config.user_dim())));
  p.predict_w1 = randn(d, config.hidden(), table_std);
  p.predict_w2 = randn(config.hidden(), 1, 1.0 / std::sqrt(static_cast<double>(config.hidden())));
  return p;
}

// Deterministically ordered (name, tensor) list of every distinct learnable
// tensor. Tensors shared between blocks (bias slopes by default) appear once,
// under the first block that owns them.
inline std::vector<std::pair<std::string, Tensor>> named_params(const ModelParams& p) {
  std::vector<std::pair<std::string, Tensor>> out;
  std::unordered_set<const TensorNode*> seen;
  auto push = [&](const std::string& name, const Tensor& t) {
    if (seen.insert(t.node().get()).second) out.emplace_back(name, t);
  };
  push("embed.item", p.item_table);
  push("embed.category", p.category_table);
  push("embed.hour", p.hour_table);
  push("embed.weekend", p.weekend_table);
  push("embed.numeric", p.numeric_row);
  for (std::size_t f = 0; f < p.user_tables.size(); ++f)
    push("embed.user" + std::to_string(f), p.user_tables[f]);
  push("proj.behavior", p.behavior_proj);
  push("proj.candidate", p.candidate_proj);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    const BlockParams& blk = p.blocks[b];
    push(pre + "attn.wq", blk.attn.w_q);
    push(pre + "attn.wk", blk.attn.w_k);
    push(pre + "attn.wv", blk.attn.w_v);
    push(pre + "attn.wo", blk.attn.w_o);
    push(pre + "attn.agg_w1", blk.attn.agg_w1);
    push(pre + "attn.agg_w2", blk.attn.agg_w2);
    push(pre + "attn.user_w1", blk.attn.user_w1);
    push(pre + "attn.user_w2", blk.attn.user_w2);
    for (std::size_t h = 0; h < blk.attn.w_gate.size(); ++h)
      push(pre + "attn.gate" + std::to_string(h), blk.attn.w_gate[h]);
    push(pre + "attn.slope_interval", blk.attn.slopes.interval);
    push(pre + "attn.slope_hour", blk.attn.slopes.hour);
    push(pre + "attn.slope_week", blk.attn.slopes.week);
    push(pre + "norm1", blk.norm1_gain);
    push(pre + "norm2", blk.norm2_gain);
    push(pre + "ffn.w1", blk.ffn_w1);
    push(pre + "ffn.w2", blk.ffn_w2);
    push(pre + "ffn.w3", blk.ffn_w3);
  }
  push("predict.w4", p.w4);
  push("predict.w5", p.w5);
  push("predict.mlp_w1", p.predict_w1);
  push("predict.mlp_w2", p.predict_w2);
  return out;
}

// --------------------------------------------------------------------------
// Forward pass
// --------------------------------------------------------------------------

struct ModelForward {
  Tensor predictions;  // |C| x 1 click probabilities
  Tensor sequence;     // final (|B| + |C|) x d states
  Tensor e_user;       // 1 x user_dim
};

inline void validate_sample(const ModelConfig& c, const ListwiseSample& s) {
  if (s.behaviors.size() != c.max_behaviors)
    throw DataError("sample has " + std::to_string(s.behaviors.size()) +
                    " behavior slots, config expects " + std::to_string(c.max_behaviors));
  if (s.candidates.empty()) throw DataError("sample has no candidates");
  if (s.user.size() != c.num_user_fields)
    throw DataError("sample has " + std::to_string(s.user.size()) +
                    " user fields, config expects " + std::to_string(c.num_user_fields));
  for (const auto& cand : s.candidates) {
    if (cand.hour < 0 || cand.hour >= 24)
      throw DataError("candidate hour " + std::to_string(cand.hour) + " outside [0, 24)");
    if (cand.weekend != 0 && cand.weekend != 1)
      throw DataError("candidate weekend flag must be 0 or 1");
    if (cand.label != 0 && cand.label != 1)
      throw DataError("candidate label must be 0 or 1");
  }
}

// Candidates are scored as if exposed one gap after the newest event; with an
// all-padding history the exposure time is just the gap.
inline std::uint64_t candidate_exposure_time(const ModelConfig& c,
                                             const std::vector<BehaviorEvent>& behaviors) {
  std::uint64_t latest = 0;
  for (const auto& b : behaviors) latest = std::max(latest, b.time);
  return latest + c.candidate_gap_seconds;
}

inline ModelForward model_forward(const ModelParams& p, const ListwiseSample& s) {
  const ModelConfig& c = p.config;
  validate_sample(c, s);
  const std::size_t nb = s.behaviors.size(), nc = s.candidates.size();

  std::vector<std::int64_t> b_items, b_cats;
  std::vector<std::uint64_t> b_times;
  for (const auto& b : s.behaviors) {
    b_items.push_back(b.item);
    b_cats.push_back(b.category);
    b_times.push_back(b.time);
  }
  std::vector<std::int64_t> c_items, c_cats, c_hours, c_weekends;
  std::vector<double> c_nums;
  for (const auto& cand : s.candidates) {
    c_items.push_back(cand.item);
    c_cats.push_back(cand.category);
    c_hours.push_back(cand.hour);
    c_weekends.push_back(cand.weekend);
    c_nums.push_back(cand.numeric);
  }

  Tensor e_user;
  {
    std::vector<Tensor> fields;
    for (std::size_t f = 0; f < c.num_user_fields; ++f)
      fields.push_back(embedding_lookup(p.user_tables[f], {s.user[f]}));
    e_user = fields.size() == 1 ? fields[0] : concat_cols(fields);
  }

  Tensor behavior_rows = matmul(
      concat_cols({embedding_lookup(p.item_table, b_items),
                   embedding_lookup(p.category_table, b_cats)}),
      p.behavior_proj);
  Tensor numeric_part = matmul(Tensor::from(nc, 1, c_nums), p.numeric_row);
  Tensor candidate_rows = matmul(
      concat_cols({embedding_lookup(p.item_table, c_items),
                   embedding_lookup(p.category_table, c_cats),
                   embedding_lookup(p.hour_table, c_hours),
                   embedding_lookup(p.weekend_table, c_weekends), numeric_part}),
      p.candidate_proj);
  Tensor x = concat_rows({behavior_rows, candidate_rows});

  const std::vector<std::uint64_t> exposure(nc, candidate_exposure_time(c, s.behaviors));
  if (c.attention == "evo") {
    AttentionContext ctx =
        make_attention_context(b_times, exposure, c.num_chunks, c.transition, c.window);
    for (const auto& blk : p.blocks) x = block_forward(blk, ctx, x, e_user).output;
  } else {
    FullContext ctx = make_full_context(b_times, exposure);
    for (const auto& blk : p.blocks) x = block_forward_full(blk, ctx, x);
  }

  Tensor e_c = slice_rows(x, nb, nc);
  Tensor interact = mul(relu(matmul(e_c, p.w4)),
                        repeat_row(sigmoid(matmul(e_user, p.w5)), nc));
  Tensor logits = matmul(relu(matmul(interact, p.predict_w1)), p.predict_w2);

  ModelForward out;
  out.predictions = sigmoid(logits);
  out.sequence = x;
  out.e_user = e_user;
  return out;
}

// Mean binary cross-entropy over the sample's slate.
inline Tensor model_loss(const ModelParams& p, const ListwiseSample& s) {
  ModelForward fwd = model_forward(p, s);
  std::vector<int> labels;
  for (const auto& cand : s.candidates) labels.push_back(cand.label);
  return bce_mean(fwd.predictions, labels);
}

// --------------------------------------------------------------------------
// Checkpoints: a versioned container holding the config as JSON plus every
// named tensor as 64-bit little-endian floats, written in enumeration order.
// Layout:
//   bytes 0-3   magic "SCTR"
//   u32         format version (currently 1)
//   u64 n, n bytes   config JSON
//   u64         tensor count
//   per tensor: u64 name length, name bytes, u64 rows, u64 cols,
//               rows*cols f64 values
// All integers little-endian.
// --------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write("SCTR", 4);
  detail::write_u32(out, kCheckpointVersion);
  const std::string config = config_to_json(p.config).dump();
  detail::write_u64(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  const auto params = named_params(p);
  detail::write_u64(out, params.size());
  for (const auto& [name, t] : params) {
    detail::write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u64(out, t.rows());
    detail::write_u64(out, t.cols());
    for (double v : t.values()) detail::write_f64(out, v);
  }
  if (!out) throw DataError("write to " + path + " failed");
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "SCTR")
    throw DataError(path + " is not a checkpoint (bad magic)");
  const std::uint32_t version = detail::read_u32(in);
  if (version != kCheckpointVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t config_len = detail::read_u64(in);
  std::string config_str(config_len, '\0');
  in.read(config_str.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw DataError(path + ": truncated config");
  ModelConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(config_str));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad config JSON: " + e.what());
  }

  ModelParams p = make_model(config, 0);
  auto params = named_params(p);
  const std::uint64_t count = detail::read_u64(in);
  if (count != params.size())
    throw DataError(path + ": holds " + std::to_string(count) + " tensors, model needs " +
                    std::to_string(params.size()));
  for (auto& [name, t] : params) {
    const std::uint64_t name_len = detail::read_u64(in);
    std::string got(name_len, '\0');
    in.read(got.data(), static_cast<std::streamsize>(name_len));
    if (!in || got != name)
      throw DataError(path + ": expected tensor \"" + name + "\", found \"" + got + "\"");
    const std::uint64_t rows = detail::read_u64(in), cols = detail::read_u64(in);
    if (rows != t.rows() || cols != t.cols())
      throw DataError(path + ": tensor \"" + name + "\" has shape " +
                      std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                      std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    for (std::size_t i = 0; i < t.size(); ++i) t.values_mut()[i] = detail::read_f64(in);
    if (!in) throw DataError(path + ": truncated while reading \"" + name + "\"");
  }
  return p;
}

}  // namespace sparsectr
