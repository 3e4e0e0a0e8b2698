#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsectr/attention.hpp"
#include "sparsectr/common.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/tensor.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Instrumented attention benchmarking plus the compute-vs-quality power-law
// fit. Costs are measured on synthetic fully-valid sequences: `behaviors`
// history rows (no padding) plus `candidates` query-only rows.
// ---------------------------------------------------------------------------

struct BenchGeometry {
  std::size_t behaviors = 1016;
  std::size_t candidates = 8;
  std::size_t dim = 32;
  std::size_t heads = 8;
  std::size_t chunks = 32;
  std::size_t transition = 2;
  std::size_t window = 16;
  std::size_t layers = 2;
  std::uint64_t seed = 1;

  std::size_t total_rows() const { return behaviors + candidates; }
};

namespace detail {

struct BenchInputs {
  std::vector<std::uint64_t> behavior_times, candidate_times;
  Tensor e_seq, e_user;
  AttentionParams params;
};

inline BenchInputs make_bench_inputs(const BenchGeometry& g) {
  if (g.behaviors == 0 || g.candidates == 0)
    throw DataError("bench: need at least one behavior and one candidate");
  Rng rng(g.seed);
  BenchInputs in{{},
                 {},
                 Tensor::zeros(g.total_rows(), g.dim),
                 Tensor::zeros(1, g.dim),
                 make_attention_params(g.dim, g.heads, g.dim, rng)};

  // Fully valid, strictly increasing times: short gaps with occasional long
  // session breaks so chunking has real structure to find.
  std::uint64_t t = 86400;
  for (std::size_t i = 0; i < g.behaviors; ++i) {
    t += rng.bernoulli(0.05) ? static_cast<std::uint64_t>(3600 * rng.uniform(4.0, 40.0))
                             : static_cast<std::uint64_t>(1 + rng.exponential(120.0));
    in.behavior_times.push_back(t);
  }
  for (std::size_t k = 0; k < g.candidates; ++k) in.candidate_times.push_back(t + 3600);

  auto seq = in.e_seq.values_mut();
  for (auto& v : seq) v = rng.normal(0.0, 1.0) / std::sqrt(static_cast<double>(g.dim));
  auto usr = in.e_user.values_mut();
  for (auto& v : usr) v = rng.normal(0.0, 1.0) / std::sqrt(static_cast<double>(g.dim));
  return in;
}

}  // namespace detail

// Counted forward flops for `layers` sparse attention calls vs. the dense
// reference on the same inputs, split into score work and everything else,
// alongside the closed-form score-work estimates (2 flops per multiply-add in
// both the logit and mixing products).
struct AttentionFlopCounts {
  double evo_total = 0.0;
  double evo_scores = 0.0;
  double full_total = 0.0;
  double full_scores = 0.0;
  double analytic_evo_scores = 0.0;
  double analytic_full_scores = 0.0;

  double sparse_ratio() const { return full_total > 0.0 ? evo_total / full_total : 0.0; }
};

inline AttentionFlopCounts count_attention_flops(const BenchGeometry& g) {
  detail::BenchInputs in = detail::make_bench_inputs(g);
  const AttentionContext ctx =
      make_attention_context(in.behavior_times, in.candidate_times, g.chunks, g.transition,
                             g.window);
  const FullContext fctx = make_full_context(in.behavior_times, in.candidate_times);

  AttentionFlopCounts out;
  auto& counter = flop_counter();
  {
    FlopCounting guard;
    counter.reset();
    for (std::size_t l = 0; l < g.layers; ++l) evo_attention(in.params, ctx, in.e_seq, in.e_user);
    out.evo_total = counter.total();
    out.evo_scores = counter.scores;

    counter.reset();
    for (std::size_t l = 0; l < g.layers; ++l) full_attention(in.params, fctx, in.e_seq);
    out.full_total = counter.total();
    out.full_scores = counter.scores;
    counter.reset();
  }

  const double n = static_cast<double>(g.total_rows());
  const double d = static_cast<double>(g.dim);
  const double P = static_cast<double>(g.chunks);
  const double m = static_cast<double>(g.transition);
  const double w = static_cast<double>(g.window);
  const double l = static_cast<double>(g.layers);
  out.analytic_evo_scores = 4.0 * l * (n * P * d + n * m * P * d + n * w * d);
  out.analytic_full_scores = 4.0 * l * n * static_cast<double>(g.behaviors) * d;
  return out;
}

// --------------------------------------------------------------------------
// Wall-clock benchmark over a grid of geometries.
// --------------------------------------------------------------------------

struct BenchRow {
  BenchGeometry geometry;
  std::string attention;  // "evo" or "full"
  double median_ms = 0.0;
  std::int64_t peak_bytes = 0;
  double flops = 0.0;
  double score_flops = 0.0;
};

namespace detail {

template <typename F>
inline BenchRow time_attention(const BenchGeometry& g, const std::string& name,
                               std::size_t reps, std::size_t warmup, double flops,
                               double score_flops, F&& forward) {
  for (std::size_t i = 0; i < warmup; ++i) forward();
  alloc_stats().reset_peak();
  const std::int64_t base = alloc_stats().live.load();
  std::vector<double> ms;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    forward();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count());
  }
  std::sort(ms.begin(), ms.end());
  BenchRow row{g, name, ms[ms.size() / 2], alloc_stats().peak.load() - base, flops, score_flops};
  return row;
}

}  // namespace detail

// Two rows per geometry (sparse and dense), timing one forward attention
// stack per rep. peak_bytes is the high-water mark of tensor buffer bytes
// above the persistent inputs.
inline std::vector<BenchRow> run_bench(const BenchGeometry& g, std::size_t reps = 5,
                                       std::size_t warmup = 2) {
  if (reps == 0) throw DataError("bench: reps must be positive");
  detail::BenchInputs in = detail::make_bench_inputs(g);
  const AttentionContext ctx =
      make_attention_context(in.behavior_times, in.candidate_times, g.chunks, g.transition,
                             g.window);
  const FullContext fctx = make_full_context(in.behavior_times, in.candidate_times);
  const AttentionFlopCounts counts = count_attention_flops(g);

  std::vector<BenchRow> rows;
  rows.push_back(detail::time_attention(
      g, "evo", reps, warmup, counts.evo_total, counts.evo_scores, [&] {
        for (std::size_t l = 0; l < g.layers; ++l)
          evo_attention(in.params, ctx, in.e_seq, in.e_user);
      }));
  rows.push_back(detail::time_attention(
      g, "full", reps, warmup, counts.full_total, counts.full_scores, [&] {
        for (std::size_t l = 0; l < g.layers; ++l) full_attention(in.params, fctx, in.e_seq);
      }));
  return rows;
}

inline BenchGeometry geometry_from_json(const nlohmann::json& j) {
  BenchGeometry d;
  BenchGeometry g;
  g.behaviors = j.value("behaviors", d.behaviors);
  g.candidates = j.value("candidates", d.candidates);
  g.dim = j.value("dim", d.dim);
  g.heads = j.value("heads", d.heads);
  g.chunks = j.value("chunks", d.chunks);
  g.transition = j.value("transition", d.transition);
  g.window = j.value("window", d.window);
  g.layers = j.value("layers", d.layers);
  g.seed = j.value("seed", d.seed);
  return g;
}

// Grid schema: {"reps": 5, "warmup": 2, "configs": [{geometry fields...}]}.
inline std::vector<BenchRow> run_bench_grid(const nlohmann::json& grid) {
  if (!grid.is_object() || !grid.contains("configs") || !grid["configs"].is_array() ||
      grid["configs"].empty())
    throw DataError("bench grid: expected an object with a non-empty 'configs' array");
  const std::size_t reps = grid.value("reps", std::size_t{5});
  const std::size_t warmup = grid.value("warmup", std::size_t{2});
  std::vector<BenchRow> rows;
  for (const auto& cfg : grid["configs"]) {
    for (auto& row : run_bench(geometry_from_json(cfg), reps, warmup)) rows.push_back(row);
  }
  return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "behaviors,candidates,dim,heads,chunks,transition,window,layers,attention,"
         "median_ms,peak_bytes,flops,score_flops\n";
  for (const auto& r : rows) {
    const auto& g = r.geometry;
    out << g.behaviors << ',' << g.candidates << ',' << g.dim << ',' << g.heads << ','
        << g.chunks << ',' << g.transition << ',' << g.window << ',' << g.layers << ','
        << r.attention << ',' << r.median_ms << ',' << r.peak_bytes << ',' << r.flops << ','
        << r.score_flops << '\n';
  }
  return out.str();
}

// --------------------------------------------------------------------------
// Power-law fit: quality(x) = E - A / x^alpha.
//
// For a fixed alpha the model is linear in (E, A), so those solve in closed
// form; alpha itself is found by a coarse log-spaced scan refined with
// golden-section search. x is internally rescaled by its geometric mean for
// conditioning, and A is mapped back afterwards.
// --------------------------------------------------------------------------

struct PowerLawFit {
  double e = 0.0;
  double a = 0.0;
  double alpha = 0.0;
  double r2 = 0.0;
  bool degenerate = false;  // flat data: alpha/a unidentifiable, e = mean
};

namespace detail {

struct LinearFit {
  double e = 0.0, a = 0.0, sse = 0.0;
};

// Least squares of y ~ e - a * u where u = x'^-alpha.
inline LinearFit fit_at_alpha(const std::vector<double>& xs, const std::vector<double>& ys,
                              double alpha) {
  const double n = static_cast<double>(xs.size());
  double su = 0.0, suu = 0.0, sy = 0.0, suy = 0.0;
  std::vector<double> us(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    us[i] = std::pow(xs[i], -alpha);
    su += us[i];
    suu += us[i] * us[i];
    sy += ys[i];
    suy += us[i] * ys[i];
  }
  const double det = n * suu - su * su;
  LinearFit f;
  if (std::fabs(det) < 1e-300) {
    f.e = sy / n;
    f.a = 0.0;
  } else {
    // Solve [n  -su; su  -suu] [e; a] = [sy; suy].
    f.a = (su * sy - n * suy) / det;
    f.e = (sy + f.a * su) / n;
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (f.e - f.a * us[i]);
    f.sse += r * r;
  }
  return f;
}

}  // namespace detail

inline PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw DataError("power-law fit: " + std::to_string(x.size()) + " x values vs " +
                    std::to_string(y.size()) + " y values");
  if (x.size() < 3) throw DataError("power-law fit: need at least 3 points");
  for (double v : x)
    if (!(v > 0.0)) throw DataError("power-law fit: x values must be positive");

  // Rescale x by its geometric mean.
  double log_sum = 0.0;
  for (double v : x) log_sum += std::log(v);
  const double x0 = std::exp(log_sum / static_cast<double>(x.size()));
  std::vector<double> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = x[i] / x0;

  const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sst = 0.0;
  for (double v : y) sst += (v - mean_y) * (v - mean_y);

  PowerLawFit fit;
  if (sst < 1e-24) {
    fit.e = mean_y;
    fit.r2 = 1.0;
    fit.degenerate = true;
    return fit;
  }

  // Coarse scan over alpha in log space.
  double best_alpha = 0.0, best_sse = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 240; ++i) {
    const double alpha = std::pow(10.0, -2.0 + 3.0 * i / 240.0);  // 0.01 .. 10
    const double sse = detail::fit_at_alpha(xs, y, alpha).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best_alpha = alpha;
    }
  }

  // Golden-section refinement around the best coarse cell (log-alpha domain).
  const double ratio = std::pow(10.0, 3.0 / 240.0);
  double lo = std::log(best_alpha / ratio), hi = std::log(best_alpha * ratio);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = detail::fit_at_alpha(xs, y, std::exp(c)).sse;
  double fd = detail::fit_at_alpha(xs, y, std::exp(d)).sse;
  for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = detail::fit_at_alpha(xs, y, std::exp(c)).sse;
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = detail::fit_at_alpha(xs, y, std::exp(d)).sse;
    }
  }
  const double alpha = std::exp((lo + hi) / 2.0);
  const detail::LinearFit lin = detail::fit_at_alpha(xs, y, alpha);

  fit.alpha = alpha;
  fit.e = lin.e;
  fit.a = lin.a * std::pow(x0, alpha);  // undo the x rescale
  fit.r2 = 1.0 - lin.sse / sst;
  // A vanishing amplitude leaves alpha meaningless.
  fit.degenerate = std::fabs(lin.a) < 1e-12 * std::max(1.0, std::fabs(lin.e));
  return fit;
}

inline double power_law_at(const PowerLawFit& f, double x) {
  return f.e - f.a / std::pow(x, f.alpha);
}

}  // namespace sparsectr
