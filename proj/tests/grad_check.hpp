#pragma once

// Shared test utilities that exercise the autodiff graph: random tensor
// fills and a central finite-difference gradient checker.

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "oracles.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/tensor.hpp"

namespace testutil {

inline std::vector<double> random_values(sparsectr::Rng& rng, std::size_t n, double lo = -1.5,
                                         double hi = 1.5) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Checks d(loss)/d(param[e]) for every entry of every parameter against a
// central finite difference of the loss. `build` must construct the graph
// from scratch each call (values are mutated in place between calls).
inline void check_gradients(
    std::vector<sparsectr::Tensor> params,
    const std::function<sparsectr::Tensor(const std::vector<sparsectr::Tensor>&)>& build,
    double h = 1e-5) {
  sparsectr::Tensor loss = build(params);
  ASSERT_EQ(loss.rows(), 1u);
  ASSERT_EQ(loss.cols(), 1u);
  for (auto& p : params) p.zero_grad();
  sparsectr::backward(loss);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto analytic = params[pi].grad();
    for (std::size_t e = 0; e < params[pi].size(); ++e) {
      const double orig = params[pi].values()[e];
      params[pi].values_mut()[e] = orig + h;
      const double up = build(params).values()[0];
      params[pi].values_mut()[e] = orig - h;
      const double dn = build(params).values()[0];
      params[pi].values_mut()[e] = orig;
      const double numeric = (up - dn) / (2.0 * h);
      EXPECT_TRUE(oracle::grad_close(analytic[e], numeric))
          << "param " << pi << " entry " << e << ": analytic " << analytic[e]
          << " vs numeric " << numeric;
    }
  }
}

inline oracle::Mat to_mat(const sparsectr::Tensor& t) {
  oracle::Mat m = oracle::make_mat(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline sparsectr::Tensor from_mat(const oracle::Mat& m, bool param = false) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return param ? sparsectr::Tensor::param(m.size(), m[0].size(), std::move(flat))
               : sparsectr::Tensor::from(m.size(), m[0].size(), std::move(flat));
}

}  // namespace testutil
