// Acceptance suite: nine numbered end-to-end checks, each printing one
// pass/fail line with its measured values. Run via ctest or directly:
//   ./build/tests/acceptance
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "sparsectr/attention.hpp"
#include "sparsectr/bench.hpp"
#include "sparsectr/chunking.hpp"
#include "sparsectr/datagen.hpp"
#include "sparsectr/model.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/temporal.hpp"
#include "sparsectr/train.hpp"

using namespace sparsectr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// One line per criterion with the values that were actually measured.
void report(int index, const char* name, bool pass, const std::string& detail) {
  std::printf("[acceptance %d/9] %s: %s (%s)\n", index, name, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random padded, sorted timestamp vector (occasional duplicate times).
std::vector<std::uint64_t> random_timestamps(Rng& rng, std::size_t n, std::size_t max_pad) {
  std::vector<std::uint64_t> t(n, 0);
  const std::size_t pad =
      static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(std::min(max_pad, n))));
  std::uint64_t cur = static_cast<std::uint64_t>(rng.uniform_int(1, 1000));
  for (std::size_t i = pad; i < n; ++i) {
    t[i] = cur;
    if (!rng.bernoulli(0.15)) cur += static_cast<std::uint64_t>(rng.uniform_int(1, 5000));
  }
  return t;
}

std::vector<std::vector<std::size_t>> positions_of(const ChunkPartition& p) {
  std::vector<std::vector<std::size_t>> out(p.num_chunks());
  for (std::size_t k = 0; k < p.num_chunks(); ++k)
    for (std::size_t i = p.begin(k); i < p.end(k); ++i) out[k].push_back(i);
  return out;
}

oracle::AttnOracleParams mirror_params(const AttentionParams& p) {
  oracle::AttnOracleParams o;
  o.dim = p.dim;
  o.heads = p.heads;
  o.w_q = testutil::to_mat(p.w_q);
  o.w_k = testutil::to_mat(p.w_k);
  o.w_v = testutil::to_mat(p.w_v);
  o.w_o = testutil::to_mat(p.w_o);
  o.agg_w1 = testutil::to_mat(p.agg_w1);
  o.agg_w2 = testutil::to_mat(p.agg_w2);
  o.user_w1 = testutil::to_mat(p.user_w1);
  o.user_w2 = testutil::to_mat(p.user_w2);
  for (const auto& g : p.w_gate) o.w_gate.push_back(testutil::to_mat(g));
  for (std::size_t h = 0; h < p.heads; ++h) {
    o.s1.push_back(p.slopes.interval.at(0, h));
    o.s2.push_back(p.slopes.hour.at(0, h));
    o.s3.push_back(p.slopes.week.at(0, h));
  }
  return o;
}

void randomize_gates_of(std::vector<Tensor> gates, Rng& rng) {
  for (auto& g : gates)
    for (std::size_t i = 0; i < g.size(); ++i) g.values_mut()[i] = rng.normal(0.0, 0.5);
}

// Give a whole model's gate matrices structure (they initialize to zero).
void randomize_model_gates(ModelParams& model, Rng& rng) {
  for (auto& [name, t] : named_params(model))
    if (name.find("gate") != std::string::npos)
      for (std::size_t i = 0; i < t.size(); ++i) t.values_mut()[i] = rng.normal(0.0, 0.5);
}

struct FdStats {
  std::size_t tensors = 0;
  std::size_t entries = 0;
  std::size_t failures = 0;
  double max_rel = 0.0;  // worst relative error over entries with a real signal
};

// Central finite differences over every entry of every learnable tensor,
// with the model's own loss as the scalar objective.
FdStats fd_check_model(ModelParams& model, const ListwiseSample& sample, double h = 1e-5) {
  auto params = named_params(model);
  Tensor loss = model_loss(model, sample);
  for (auto& [name, t] : params) t.zero_grad();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, t] : params) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  FdStats st;
  st.tensors = params.size();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = params[pi].second;
    for (std::size_t e = 0; e < t.size(); ++e) {
      const double orig = t.values()[e];
      t.values_mut()[e] = orig + h;
      const double up = model_loss(model, sample).values()[0];
      t.values_mut()[e] = orig - h;
      const double dn = model_loss(model, sample).values()[0];
      t.values_mut()[e] = orig;
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[pi][e];
      const double diff = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      if (diff > 1e-4 * denom + 1e-8) {
        ++st.failures;
        ADD_FAILURE() << params[pi].first << " entry " << e << ": analytic " << a
                      << " vs numeric " << numeric;
      }
      if (denom > 1e-6) st.max_rel = std::max(st.max_rel, diff / denom);
      ++st.entries;
    }
  }
  return st;
}

// Random instance shared by the attention-oracle criterion: small enough for
// the scalar oracle, always >= 2 valid behaviors and >= 2 candidates so the
// causality and isolation perturbations are meaningful on every instance.
struct RandomCase {
  AttentionParams params;
  AttentionContext ctx;
  FullContext full_ctx;
  Tensor e_seq, e_user;
  oracle::AttnOracleInput in;
};

RandomCase make_case(Rng& rng) {
  const std::size_t d = 8, heads = 2, ud = 6;
  const std::size_t nb = static_cast<std::size_t>(rng.uniform_int(4, 10));
  const std::size_t nc = static_cast<std::size_t>(rng.uniform_int(2, 3));
  const std::size_t np = static_cast<std::size_t>(rng.uniform_int(2, 3));
  const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 2));
  const std::size_t w = static_cast<std::size_t>(rng.uniform_int(2, 3));
  RandomCase c{make_attention_params(d, heads, ud, rng),
               AttentionContext{},
               FullContext{},
               Tensor{},
               Tensor{},
               {}};
  randomize_gates_of(c.params.w_gate, rng);

  std::vector<std::uint64_t> bt(nb, 0);
  const std::size_t pad = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(nb - 2)));
  std::uint64_t t = static_cast<std::uint64_t>(rng.uniform_int(1, 500000));
  for (std::size_t i = pad; i < nb; ++i) {
    bt[i] = t;
    t += static_cast<std::uint64_t>(rng.uniform_int(1, 200000));
  }
  std::vector<std::uint64_t> ct;
  for (std::size_t k = 0; k < nc; ++k)
    ct.push_back(t + 3600 + static_cast<std::uint64_t>(rng.uniform_int(0, 7200)));

  c.ctx = make_attention_context(bt, ct, np, m, w);
  c.full_ctx = make_full_context(bt, ct);
  auto seq_vals = testutil::random_values(rng, (nb + nc) * d);
  auto user_vals = testutil::random_values(rng, ud);
  c.e_seq = Tensor::from(nb + nc, d, seq_vals);
  c.e_user = Tensor::from(1, ud, user_vals);
  c.in.e_seq = testutil::to_mat(c.e_seq);
  c.in.e_user = user_vals;
  c.in.behavior_times = bt;
  c.in.candidate_times = ct;
  c.in.num_chunks = np;
  c.in.transition = m;
  c.in.window = w;
  return c;
}

double max_abs_diff(const Tensor& got, const oracle::Mat& expect) {
  double m = 0.0;
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j)
      m = std::max(m, std::abs(got.at(i, j) - expect[i][j]));
  return m;
}

std::size_t count_row_mismatches(const Tensor& a, const Tensor& b, std::size_t row_end) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < row_end; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (a.at(i, j) != b.at(i, j)) ++bad;
  return bad;
}

}  // namespace

// 1. End-to-end gradient integrity: central finite differences across every
//    learnable tensor of a small but fully-featured model.
TEST(Acceptance, GradientIntegrity) {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.dim = 8;
  c.blocks = 1;
  c.heads = 2;
  c.max_behaviors = 8;
  c.num_chunks = 3;
  c.transition = 1;
  c.window = 2;
  c.num_items = 7;
  c.num_categories = 3;
  c.num_user_values = 5;
  c.num_user_fields = 2;
  ModelParams model = make_model(c, 91);
  Rng rng(92);
  randomize_model_gates(model, rng);

  // History straddles a weekend (1970-01-02 was a Friday) so the weekend
  // bias slope sees both matched and mismatched query/key pairs.
  ListwiseSample s;
  s.user = {3, 1};
  s.behaviors.assign(8, BehaviorEvent{});
  const std::uint64_t times[6] = {129600, 138600, 158600, 203600, 273600, 303600};
  for (std::size_t i = 0; i < 6; ++i)
    s.behaviors[2 + i] = BehaviorEvent{static_cast<std::int64_t>(1 + i),
                                       static_cast<std::int64_t>(i % 3), times[i]};
  Candidate c0;
  c0.item = 2;
  c0.category = 1;
  c0.hour = 5;
  c0.weekend = 1;
  c0.numeric = 0.7;
  c0.label = 1;
  Candidate c1;
  c1.item = 5;
  c1.category = 0;
  c1.hour = 20;
  c1.weekend = 0;
  c1.numeric = -0.3;
  c1.label = 0;
  s.candidates = {c0, c1};
  validate_sample(c, s);

  FdStats st = fd_check_model(model, s);
  const double secs = seconds_since(t0);
  EXPECT_EQ(st.failures, 0u);
  EXPECT_LT(st.max_rel, 1e-4);
  EXPECT_LT(secs, 60.0);

  char buf[192];
  std::snprintf(buf, sizeof buf,
                "%zu tensors, %zu entries, max rel err %.3g vs 1e-4, %.1f s vs 60 s",
                st.tensors, st.entries, st.max_rel, secs);
  report(1, "gradient integrity", !::testing::Test::HasFailure(), buf);
}

// 2. Chunking vs a brute-force oracle on 1,000 random padded sequences.
TEST(Acceptance, ChunkingMatchesBruteForce) {
  const auto t0 = Clock::now();
  Rng rng(210);
  std::size_t checked = 0, mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 64));
    auto t = random_timestamps(rng, n, n);
    const std::size_t chunks = static_cast<std::size_t>(rng.uniform_int(1, 8));
    ChunkPartition p = chunk_sequence(t, chunks);
    auto expect = oracle::chunk_positions(t, chunks);
    auto got = positions_of(p);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t k = 0; k < chunks; ++k)
      if (got[k] != expect[k]) {
        ++mismatches;
        ADD_FAILURE() << "sequence " << rep << " chunk " << k << " differs";
      }
    ++checked;
  }
  const double secs = seconds_since(t0);
  EXPECT_EQ(mismatches, 0u);
  EXPECT_LT(secs, 10.0);

  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu sequences, %zu mismatches, %.2f s vs 10 s", checked,
                mismatches, secs);
  report(2, "chunking oracle", !::testing::Test::HasFailure(), buf);
}

// 3. Sparse and dense attention vs independent scalar-loop oracles on 100
//    random instances, plus causality and candidate-isolation perturbations
//    on every instance.
TEST(Acceptance, AttentionMatchesScalarOracles) {
  Rng rng(310);
  double evo_max = 0.0, full_max = 0.0;
  std::size_t causality_leaks = 0, isolation_leaks = 0;
  for (int rep = 0; rep < 100; ++rep) {
    RandomCase c = make_case(rng);
    const std::size_t nb = c.ctx.num_behaviors, d = c.params.dim;
    const std::size_t victim = nb + c.ctx.num_candidates - 1;

    EvoResult evo = evo_attention(c.params, c.ctx, c.e_seq, c.e_user);
    Tensor full = full_attention(c.params, c.full_ctx, c.e_seq);
    oracle::AttnOracleParams op = mirror_params(c.params);
    evo_max = std::max(evo_max, max_abs_diff(evo.output, oracle::evo_attention_oracle(op, c.in)));
    full_max =
        std::max(full_max, max_abs_diff(full, oracle::full_attention_oracle(op, c.in)));

    // Causality: perturbing the newest behavior must leave all earlier
    // behavior rows bit-identical in both attention forms.
    for (std::size_t t = 0; t < d; ++t) c.e_seq.at(nb - 1, t) += 0.75;
    EvoResult evo_p = evo_attention(c.params, c.ctx, c.e_seq, c.e_user);
    Tensor full_p = full_attention(c.params, c.full_ctx, c.e_seq);
    causality_leaks += count_row_mismatches(evo.output, evo_p.output, nb - 1);
    causality_leaks += count_row_mismatches(full, full_p, nb - 1);

    // Candidate isolation: perturbing the last candidate must leave every
    // other row (behaviors and sibling candidates) bit-identical.
    for (std::size_t t = 0; t < d; ++t) c.e_seq.at(victim, t) += 1.0;
    EvoResult evo_q = evo_attention(c.params, c.ctx, c.e_seq, c.e_user);
    Tensor full_q = full_attention(c.params, c.full_ctx, c.e_seq);
    isolation_leaks += count_row_mismatches(evo_p.output, evo_q.output, victim);
    isolation_leaks += count_row_mismatches(full_p, full_q, victim);
  }
  EXPECT_LE(evo_max, 1e-9);
  EXPECT_LE(full_max, 1e-9);
  EXPECT_EQ(causality_leaks, 0u);
  EXPECT_EQ(isolation_leaks, 0u);

  char buf[192];
  std::snprintf(buf, sizeof buf,
                "100 instances, max |sparse-oracle| %.2e, max |dense-oracle| %.2e vs 1e-9, "
                "causality leaks %zu, isolation leaks %zu",
                evo_max, full_max, causality_leaks, isolation_leaks);
  report(3, "attention oracle", !::testing::Test::HasFailure(), buf);
}

// 4. Closed-form bias values and the geometric head-slope initialization,
//    all at exact 64-bit equality.
TEST(Acceptance, TemporalBiasClosedForms) {
  const double interval_bias = 0.5 * interval_coeff(8.0);
  EXPECT_EQ(interval_bias, -1.5);

  const double hour_bias = hour_coeff(12.0 * 3600.0);
  EXPECT_EQ(hour_bias, -1.0);

  const double h1 = hour_coeff(3600.0);
  const double h23 = hour_coeff(23.0 * 3600.0);
  EXPECT_EQ(h1, h23);

  const auto slopes = default_slopes(8);
  ASSERT_EQ(slopes.size(), 8u);
  std::size_t slope_errors = 0;
  for (int h = 0; h < 8; ++h)
    if (slopes[static_cast<std::size_t>(h)] != std::ldexp(1.0, -h)) ++slope_errors;
  EXPECT_EQ(slope_errors, 0u);

  char buf[192];
  std::snprintf(buf, sizeof buf,
                "0.5*interval(8)=%g, hour(12h)=%g, hour(1h)-hour(23h)=%.17g, "
                "geometric slopes 1..2^-7 exact: %s",
                interval_bias, hour_bias, h1 - h23, slope_errors == 0 ? "yes" : "no");
  report(4, "bias formulas", !::testing::Test::HasFailure(), buf);
}

// 5. Learnability: one epoch on a 2,000-user planted-signal dataset must
//    recover at least 95% of the planted oracle's AUC lift.
TEST(Acceptance, LearnsPlantedSignalInOneEpoch) {
  GeneratorSpec g;
  g.seed = 11;
  g.num_users = 2000;
  g.match_weight = 5.0;
  g.hour_weight = 0.1;
  g.week_weight = 0.1;
  g.min_sessions = 6;
  g.max_sessions = 12;
  g.max_impressions_per_user = 10;
  g.num_user_values = 2000;
  g.focus = 0.9;
  g.interest_drift = 0.2;
  ASSERT_EQ(g.max_behaviors, 64u);
  ASSERT_EQ(g.candidates_per_impression, 4u);
  ASSERT_DOUBLE_EQ(g.label_noise, 0.05);

  std::vector<ListwiseSample> train, test;
  generate_dataset(g, train, test);

  std::vector<double> planted;
  std::vector<int> labels;
  for (const auto& s : test)
    for (const auto& cand : s.candidates) {
      planted.push_back(cand.planted);
      labels.push_back(cand.label);
    }
  const double oracle_auc = compute_auc(planted, labels);
  const double target = 0.95 * (oracle_auc - 0.5) + 0.5;

  ModelConfig c = model_config_for(g);
  c.dim = 16;
  c.blocks = 2;
  c.heads = 4;
  ModelParams model = make_model(c, 1);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.lr = 3e-3;
  tc.seed = 5;

  const auto t0 = Clock::now();
  train_model(model, train, tc);
  EvalResult ev = evaluate_model(model, test);
  const double secs = seconds_since(t0);

  EXPECT_GE(ev.auc, target);
  EXPECT_GT(ev.auc, 0.60);
  EXPECT_LT(secs, 600.0);

  char buf[224];
  std::snprintf(buf, sizeof buf,
                "%zu train / %zu test samples, oracle AUC %.4f, test AUC %.4f vs target %.4f "
                "and floor 0.60, %.0f s vs 600 s",
                train.size(), test.size(), oracle_auc, ev.auc, target, secs);
  report(5, "learnability", !::testing::Test::HasFailure(), buf);
}

// 6. Sparse attention FLOP budget at the headline geometry: counted total
//    under 25% of the dense reference, and counted score FLOPs within 10%
//    of the analytic formulas for both forms.
TEST(Acceptance, SparseAttentionFlopBudget) {
  BenchGeometry g;  // 1016+8 rows, 32 chunks, m=2, w=16, d=32, 2 layers
  AttentionFlopCounts f = count_attention_flops(g);
  const double ratio = f.sparse_ratio();
  const double evo_dev = std::abs(f.evo_scores - f.analytic_evo_scores) / f.analytic_evo_scores;
  const double full_dev =
      std::abs(f.full_scores - f.analytic_full_scores) / f.analytic_full_scores;

  EXPECT_LT(ratio, 0.25);
  EXPECT_LT(evo_dev, 0.10);
  EXPECT_LT(full_dev, 0.10);

  char buf[224];
  std::snprintf(buf, sizeof buf,
                "sparse/dense total %.4f vs 0.25, score count vs analytic: sparse %.2f%%, "
                "dense %.2f%% vs 10%% (%.3g vs %.3g flops)",
                ratio, 100.0 * evo_dev, 100.0 * full_dev, f.evo_total, f.full_total);
  report(6, "sparsity benefit", !::testing::Test::HasFailure(), buf);
}

// 7. Power-law fit: exact recovery on clean synthetic points and R^2 > 0.99
//    under Gaussian noise of sigma 1e-4.
TEST(Acceptance, PowerLawFitRecovery) {
  const double E = 0.72, A = 1.0, alpha = 0.3;
  std::vector<double> xs, ys;
  for (int i = 0; i < 16; ++i) {
    const double x = std::pow(10.0, 6.0 + 6.0 * i / 15.0);
    xs.push_back(x);
    ys.push_back(oracle::power_law(x, E, A, alpha));
  }
  PowerLawFit clean = fit_power_law(xs, ys);
  const double ee = std::abs(clean.e - E), ea = std::abs(clean.a - A),
               eal = std::abs(clean.alpha - alpha);
  EXPECT_LT(ee, 1e-6);
  EXPECT_LT(ea, 1e-6);
  EXPECT_LT(eal, 1e-6);
  EXPECT_FALSE(clean.degenerate);

  Rng rng(710);
  std::vector<double> noisy = ys;
  for (auto& y : noisy) y += rng.normal(0.0, 1e-4);
  PowerLawFit fit = fit_power_law(xs, noisy);
  EXPECT_GT(fit.r2, 0.99);

  char buf[224];
  std::snprintf(buf, sizeof buf,
                "clean errors E %.1e A %.1e alpha %.1e vs 1e-6; noisy sigma 1e-4 fit "
                "(E %.4f A %.3f alpha %.3f) R^2 %.5f vs 0.99",
                ee, ea, eal, fit.e, fit.a, fit.alpha, fit.r2);
  report(7, "scaling fit", !::testing::Test::HasFailure(), buf);
}

// 8. Determinism: two identical train+eval runs produce byte-identical
//    checkpoints and the same AUC.
TEST(Acceptance, TrainingIsBitwiseDeterministic) {
  GeneratorSpec g;
  g.seed = 21;
  g.num_users = 200;
  g.max_behaviors = 16;
  std::vector<ListwiseSample> train, test;
  generate_dataset(g, train, test);

  ModelConfig c = model_config_for(g);
  c.dim = 8;
  c.blocks = 2;
  c.heads = 2;
  c.num_chunks = 4;
  c.window = 4;
  c.transition = 1;

  auto run = [&](const std::string& path) {
    ModelParams model = make_model(c, 1);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 8;
    tc.lr = 3e-3;
    tc.seed = 5;
    train_model(model, train, tc);
    save_checkpoint(model, path);
    return evaluate_model(model, test).auc;
  };

  const std::string pa = ::testing::TempDir() + "acceptance_det_a.ckpt";
  const std::string pb = ::testing::TempDir() + "acceptance_det_b.ckpt";
  const double auc_a = run(pa);
  const double auc_b = run(pb);
  const std::string bytes_a = slurp(pa), bytes_b = slurp(pb);

  ASSERT_FALSE(bytes_a.empty());
  EXPECT_EQ(bytes_a, bytes_b);
  EXPECT_EQ(auc_a, auc_b);

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "checkpoints %zu bytes, byte-identical: %s; AUC %.6f vs %.6f, equal: %s",
                bytes_a.size(), bytes_a == bytes_b ? "yes" : "no", auc_a, auc_b,
                auc_a == auc_b ? "yes" : "no");
  report(8, "determinism", !::testing::Test::HasFailure(), buf);
}

// 9. A 4-candidate slate scores exactly like four single-candidate copies.
TEST(Acceptance, SlateMatchesSingleCandidateScoring) {
  GeneratorSpec g;
  g.seed = 33;
  g.num_users = 40;
  std::vector<ListwiseSample> train, test;
  generate_dataset(g, train, test);
  ASSERT_GE(train.size(), 5u);

  ModelConfig c = model_config_for(g);
  c.dim = 16;
  c.blocks = 2;
  c.heads = 4;
  ModelParams model = make_model(c, 3);
  Rng rng(910);
  randomize_model_gates(model, rng);

  double max_dev = 0.0;
  std::size_t slates = 0;
  for (std::size_t si = 0; si < 5; ++si) {
    const ListwiseSample& s = train[si];
    ASSERT_EQ(s.candidates.size(), 4u);
    Tensor slate_preds = model_forward(model, s).predictions;
    for (std::size_t i = 0; i < s.candidates.size(); ++i) {
      ListwiseSample solo = s;
      solo.candidates = {s.candidates[i]};
      const double single = model_forward(model, solo).predictions.at(0, 0);
      max_dev = std::max(max_dev, std::abs(slate_preds.at(i, 0) - single));
    }
    ++slates;
  }
  EXPECT_LE(max_dev, 1e-12);

  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu slates of 4, max |slate - solo| %.3g vs 1e-12", slates,
                max_dev);
  report(9, "listwise/pointwise equivalence", !::testing::Test::HasFailure(), buf);
}
