#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sparsectr/common.hpp"
#include "sparsectr/data.hpp"
#include "sparsectr/model.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/tensor.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Adam, mini-batch training over listwise samples, and ranking evaluation.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over a fixed set of parameter tensors. A
// tensor whose gradient was never touched in the current batch contributes
// g = 0, which still decays its moment estimates like any Adam step.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                         AdamConfig config = {})
      : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, t] : params_) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  void step() {
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].second.values_mut();
      const auto g = params_[i].second.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
        v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
        w[j] -= config_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
      }
    }
  }

  std::size_t steps() const { return steps_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

// --------------------------------------------------------------------------
// Metrics.
// --------------------------------------------------------------------------

// Area under the ROC curve via midranks (ties contribute half), identical to
// averaging pairwise win indicators over all positive/negative pairs.
inline double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("auc: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(labels.size()) + " labels");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0/1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("auc: needs at least one label of each class");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = static_cast<double>(i + 1 + j) / 2.0;  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) positive_rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

// Relative improvement of lift over a baseline, in percent:
// ((auc - 0.5) / (base - 0.5) - 1) * 100. Undefined for baselines at or
// below chance.
inline double rela_impr(double model_auc, double baseline_auc) {
  if (!(baseline_auc > 0.5))
    throw NumericalError("rela_impr: baseline AUC " + std::to_string(baseline_auc) +
                         " must exceed 0.5");
  return ((model_auc - 0.5) / (baseline_auc - 0.5) - 1.0) * 100.0;
}

// --------------------------------------------------------------------------
// Evaluation: pooled ranking metrics over every candidate in a dataset.
// --------------------------------------------------------------------------

struct EvalResult {
  double auc = 0.0;
  double mean_loss = 0.0;  // mean of per-sample slate losses
  std::size_t num_samples = 0;
  std::size_t num_labels = 0;
};

inline EvalResult evaluate_model(const ModelParams& p, const std::vector<ListwiseSample>& data) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  std::vector<double> scores;
  std::vector<int> labels;
  double loss_sum = 0.0;
  for (const auto& s : data) {
    const ModelForward fwd = model_forward(p, s);
    std::vector<int> slate_labels;
    for (std::size_t k = 0; k < s.candidates.size(); ++k) {
      scores.push_back(fwd.predictions.at(k, 0));
      slate_labels.push_back(s.candidates[k].label);
      labels.push_back(s.candidates[k].label);
    }
    loss_sum += bce_mean(fwd.predictions, slate_labels).at(0, 0);
  }
  EvalResult r;
  r.auc = compute_auc(scores, labels);
  r.mean_loss = loss_sum / static_cast<double>(data.size());
  r.num_samples = data.size();
  r.num_labels = labels.size();
  return r;
}

// --------------------------------------------------------------------------
// Training loop.
// --------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct EpochStats {
  std::size_t epoch = 0;       // 1-based
  double mean_loss = 0.0;      // mean per-sample slate loss over the epoch
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Shuffled mini-batch Adam. Each sample's slate loss is backpropagated with
// weight 1/|batch|, so a step follows the mean gradient of its batch.
// Deterministic for a fixed (model, data, config).
inline std::vector<EpochStats> train_model(ModelParams& p,
                                           const std::vector<ListwiseSample>& data,
                                           const TrainConfig& config,
                                           const EpochCallback& on_epoch = {}) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (config.epochs == 0 || config.batch_size == 0)
    throw DataError("train: epochs and batch size must be positive");

  AdamConfig adam;
  adam.lr = config.lr;
  AdamOptimizer opt(named_params(p), adam);
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochStats> stats;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      opt.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        Tensor loss = model_loss(p, data[order[k]]);
        loss_sum += loss.at(0, 0);
        backward(loss, 1.0 / static_cast<double>(end - begin));
      }
      opt.step();
    }
    EpochStats es;
    es.epoch = epoch;
    es.mean_loss = loss_sum / static_cast<double>(data.size());
    es.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    stats.push_back(es);
    if (on_epoch) on_epoch(es);
  }
  return stats;
}

}  // namespace sparsectr
