#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sparsectr/bench.hpp"
#include "sparsectr/rng.hpp"

namespace {

using namespace sparsectr;

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i)
    xs.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1)));
  return xs;
}

// ---------------------------------------------------------------------------
// Power-law fitting
// ---------------------------------------------------------------------------

TEST(PowerLaw, RecoversExactParameters) {
  const std::vector<double> xs = log_spaced(1e6, 1e9, 8);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(oracle::power_law(x, 0.72, 1.0, 0.3));
  const PowerLawFit fit = fit_power_law(xs, ys);
  EXPECT_NEAR(fit.e, 0.72, 1e-6);
  EXPECT_NEAR(fit.a, 1.0, 1e-6);
  EXPECT_NEAR(fit.alpha, 0.3, 1e-6);
  EXPECT_GT(fit.r2, 1.0 - 1e-9);
  EXPECT_FALSE(fit.degenerate);
  EXPECT_NEAR(power_law_at(fit, 5e7), oracle::power_law(5e7, 0.72, 1.0, 0.3), 1e-9);
}

TEST(PowerLaw, RecoversOtherShapesExactly) {
  for (const auto& [e, a, alpha] :
       {std::tuple{0.85, 12.0, 0.55}, std::tuple{0.60, 0.002, 0.12}, std::tuple{1.0, 3.0, 1.5}}) {
    const std::vector<double> xs = log_spaced(1e3, 1e8, 10);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(oracle::power_law(x, e, a, alpha));
    const PowerLawFit fit = fit_power_law(xs, ys);
    EXPECT_NEAR(fit.e, e, 1e-6 * std::max(1.0, std::fabs(e)));
    EXPECT_NEAR(fit.a, a, 1e-5 * std::max(1.0, std::fabs(a)));
    EXPECT_NEAR(fit.alpha, alpha, 1e-6);
  }
}

TEST(PowerLaw, NoisyPointsStillFitWell) {
  Rng rng(123);
  const std::vector<double> xs = log_spaced(1e6, 1e9, 12);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(oracle::power_law(x, 0.72, 1.0, 0.3) + rng.normal(0.0, 1e-4));
  const PowerLawFit fit = fit_power_law(xs, ys);
  EXPECT_GT(fit.r2, 0.99);
  EXPECT_NEAR(fit.e, 0.72, 1e-2);
  EXPECT_NEAR(fit.alpha, 0.3, 0.1);
}

TEST(PowerLaw, FlatDataIsDegenerate) {
  const std::vector<double> xs = log_spaced(10.0, 1e4, 6);
  const std::vector<double> ys(xs.size(), 0.7);
  const PowerLawFit fit = fit_power_law(xs, ys);
  EXPECT_TRUE(fit.degenerate);
  EXPECT_DOUBLE_EQ(fit.e, 0.7);
  EXPECT_DOUBLE_EQ(fit.r2, 1.0);
}

TEST(PowerLaw, OrderOfPointsDoesNotMatter) {
  std::vector<double> xs = log_spaced(1e4, 1e8, 9), ys;
  for (double x : xs) ys.push_back(oracle::power_law(x, 0.8, 2.0, 0.4));
  const PowerLawFit a = fit_power_law(xs, ys);
  std::reverse(xs.begin(), xs.end());
  std::reverse(ys.begin(), ys.end());
  const PowerLawFit b = fit_power_law(xs, ys);
  EXPECT_NEAR(a.e, b.e, 1e-12);
  EXPECT_NEAR(a.a, b.a, 1e-9);
  EXPECT_NEAR(a.alpha, b.alpha, 1e-12);
}

TEST(PowerLaw, RejectsBadInput) {
  EXPECT_THROW(fit_power_law({1.0, 2.0}, {0.5, 0.6}), DataError);
  EXPECT_THROW(fit_power_law({1.0, 2.0, 3.0}, {0.5, 0.6}), DataError);
  EXPECT_THROW(fit_power_law({1.0, -2.0, 3.0}, {0.5, 0.6, 0.7}), DataError);
  EXPECT_THROW(fit_power_law({1.0, 0.0, 3.0}, {0.5, 0.6, 0.7}), DataError);
}

// ---------------------------------------------------------------------------
// Flop counting at benchmark geometries
// ---------------------------------------------------------------------------

TEST(BenchFlops, SparseScoresTrackAnalyticFormula) {
  BenchGeometry g;  // the headline geometry: n=1024, |P|=32, m=2, w=16, d=32, l=2
  const AttentionFlopCounts counts = count_attention_flops(g);
  ASSERT_GT(counts.evo_scores, 0.0);
  const double rel_evo =
      std::fabs(counts.evo_scores - counts.analytic_evo_scores) / counts.analytic_evo_scores;
  const double rel_full =
      std::fabs(counts.full_scores - counts.analytic_full_scores) / counts.analytic_full_scores;
  EXPECT_LT(rel_evo, 0.10);
  EXPECT_LT(rel_full, 0.10);
  std::printf("score flops: evo counted %.3e vs analytic %.3e (%.2f%%), "
              "full counted %.3e vs analytic %.3e (%.2f%%)\n",
              counts.evo_scores, counts.analytic_evo_scores, 100.0 * rel_evo,
              counts.full_scores, counts.analytic_full_scores, 100.0 * rel_full);
}

TEST(BenchFlops, SparseAttentionIsWellUnderQuarterOfFull) {
  BenchGeometry g;
  const AttentionFlopCounts counts = count_attention_flops(g);
  EXPECT_LT(counts.sparse_ratio(), 0.25);
  std::printf("sparse/full total flops ratio: %.4f\n", counts.sparse_ratio());
}

TEST(BenchFlops, CountsScaleWithGeometry) {
  BenchGeometry small;
  small.behaviors = 120;
  small.candidates = 4;
  small.dim = 16;
  small.heads = 4;
  small.chunks = 8;
  small.window = 8;
  small.layers = 1;
  const AttentionFlopCounts at_small = count_attention_flops(small);

  BenchGeometry doubled = small;
  doubled.behaviors = 244;  // total rows exactly doubled
  const AttentionFlopCounts at_doubled = count_attention_flops(doubled);
  // Sparse score work is linear in sequence length; allow slack for the
  // constant-size aggregation work.
  EXPECT_NEAR(at_doubled.evo_scores / at_small.evo_scores, 2.0, 0.1);
  // Dense score work is quadratic: doubling rows roughly quadruples it.
  EXPECT_GT(at_doubled.full_scores / at_small.full_scores, 3.5);
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

BenchGeometry tiny_geometry() {
  BenchGeometry g;
  g.behaviors = 60;
  g.candidates = 4;
  g.dim = 16;
  g.heads = 4;
  g.chunks = 6;
  g.transition = 2;
  g.window = 6;
  g.layers = 1;
  return g;
}

TEST(BenchRunner, ProducesTimedRowsForBothVariants) {
  const auto rows = run_bench(tiny_geometry(), 3, 1);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].attention, "evo");
  EXPECT_EQ(rows[1].attention, "full");
  for (const auto& r : rows) {
    EXPECT_GT(r.median_ms, 0.0);
    EXPECT_GT(r.peak_bytes, 0);
    EXPECT_GT(r.flops, 0.0);
    EXPECT_GT(r.score_flops, 0.0);
    EXPECT_LT(r.score_flops, r.flops);
  }
  EXPECT_LT(rows[0].flops, rows[1].flops);
}

TEST(BenchRunner, GridRunsEveryConfigAndRendersCsv) {
  nlohmann::json grid = {
      {"reps", 3},
      {"warmup", 1},
      {"configs",
       {{{"behaviors", 40}, {"candidates", 2}, {"dim", 8}, {"heads", 2}, {"chunks", 4},
         {"transition", 1}, {"window", 4}, {"layers", 1}},
        {{"behaviors", 80}, {"candidates", 2}, {"dim", 8}, {"heads", 2}, {"chunks", 4},
         {"transition", 1}, {"window", 4}, {"layers", 1}}}}};
  const auto rows = run_bench_grid(grid);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].geometry.behaviors, 40u);
  EXPECT_EQ(rows[2].geometry.behaviors, 80u);

  const std::string csv = bench_csv(rows);
  EXPECT_NE(csv.find("behaviors,candidates,dim,heads,chunks,transition,window,layers,"
                     "attention,median_ms,peak_bytes,flops,score_flops"),
            std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 4 rows
  EXPECT_NE(csv.find(",evo,"), std::string::npos);
  EXPECT_NE(csv.find(",full,"), std::string::npos);
}

TEST(BenchRunner, RejectsMalformedGridsAndGeometry) {
  EXPECT_THROW(run_bench_grid(nlohmann::json::array()), DataError);
  EXPECT_THROW(run_bench_grid(nlohmann::json{{"reps", 3}}), DataError);
  EXPECT_THROW(run_bench_grid(nlohmann::json{{"configs", nlohmann::json::array()}}), DataError);
  EXPECT_THROW(run_bench(tiny_geometry(), 0), DataError);
  BenchGeometry bad = tiny_geometry();
  bad.behaviors = 0;
  EXPECT_THROW(count_attention_flops(bad), DataError);
}

}  // namespace
