#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sparsectr/common.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Dense row-major matrix of 64-bit floats with reverse-mode differentiation.
//
// Tensor is a cheap value-like handle onto a shared node. Every tensor is a
// rank-2 matrix (vectors are 1 x d rows, scalars 1 x 1). Ops build a DAG;
// backward() walks it in reverse topological order and accumulates gradients
// into every node that requires them. Gradients of parameter leaves persist
// across backward calls until zero_grad().
//
// Forward and backward are single-threaded and deterministic. Handles may be
// moved between threads, but one computation graph must be used from one
// thread at a time.
// ---------------------------------------------------------------------------

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  TensorNode(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {
    alloc_stats().add(static_cast<std::int64_t>(data.capacity() * sizeof(double)));
  }
  ~TensorNode() {
    alloc_stats().sub(static_cast<std::int64_t>(
        (data.capacity() + grad.capacity()) * sizeof(double)));
  }
  TensorNode(const TensorNode&) = delete;
  TensorNode& operator=(const TensorNode&) = delete;

  void ensure_grad() {
    if (grad.empty()) {
      grad.assign(data.size(), 0.0);
      alloc_stats().add(static_cast<std::int64_t>(grad.capacity() * sizeof(double)));
    }
  }
};

namespace detail {
inline std::string shape_str(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor(std::make_shared<TensorNode>(rows, cols));
  }

  static Tensor full(std::size_t rows, std::size_t cols, double value) {
    Tensor t = zeros(rows, cols);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols)
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + detail::shape_str(rows, cols));
    Tensor t = zeros(rows, cols);
    t.node_->data = std::move(values);
    return t;
  }

  // Leaf with gradient tracking (model parameter).
  static Tensor param(std::size_t rows, std::size_t cols, std::vector<double> values) {
    Tensor t = from(rows, cols, std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor param_zeros(std::size_t rows, std::size_t cols) {
    Tensor t = zeros(rows, cols);
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  double at(std::size_t i, std::size_t j) const { return node_->data[i * cols() + j]; }
  double& at(std::size_t i, std::size_t j) { return node_->data[i * cols() + j]; }

  std::span<const double> values() const { return node_->data; }
  std::span<double> values_mut() { return node_->data; }

  std::span<const double> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline Tensor make_op(std::size_t rows, std::size_t cols,
                      std::vector<std::shared_ptr<TensorNode>> parents,
                      std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>(rows, cols);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// --------------------------------------------------------------------------
// Core ops
// --------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ, " +
                     detail::shape_str(a.rows(), a.cols()) + " * " +
                     detail::shape_str(b.rows(), b.cols()));
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_op(r, c, {an, bn}, [an, bn, r, k, c](TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      // dA = G * B^T
      double* da = an->grad.data();
      const double* bd = bn->data.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double gij = g[i * c + j];
          if (gij == 0.0) continue;
          const double* brow = bd + j;  // column j of B, stride c
          for (std::size_t t = 0; t < k; ++t) da[i * k + t] += gij * brow[t * c];
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB = A^T * G
      double* db = bn->grad.data();
      const double* ad = an->data.data();
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t i = 0; i < r; ++i) {
          const double ait = ad[i * k + t];
          if (ait == 0.0) continue;
          for (std::size_t j = 0; j < c; ++j) db[t * c + j] += ait * g[i * c + j];
        }
    }
  });
  // i-k-j loop, row-major friendly
  const double* ad = an->data.data();
  const double* bd = bn->data.data();
  double* od = out.values_mut().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = ad + i * k;
    double* orow = od + i * c;
    for (std::size_t t = 0; t < k; ++t) {
      const double a_it = arow[t];
      if (a_it == 0.0) continue;
      const double* brow = bd + t * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += a_it * brow[j];
    }
  }
  flop_counter().add(2.0 * static_cast<double>(r) * static_cast<double>(k) *
                     static_cast<double>(c));
  return out;
}

inline Tensor transpose(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  auto xn = x.node();
  Tensor out = detail::make_op(c, r, {xn}, [xn, r, c](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += self.grad[j * r + i];
  });
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values_mut()[j * r + i] = x.values()[i * c + j];
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_op(a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values_mut()[i] = a.values()[i] + b.values()[i];
  flop_counter().add(static_cast<double>(out.size()));
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_op(a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values_mut()[i] = a.values()[i] - b.values()[i];
  flop_counter().add(static_cast<double>(out.size()));
  return out;
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  auto an = a.node(), bn = b.node();
  Tensor out = detail::make_op(a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        an->grad[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        bn->grad[i] += self.grad[i] * an->data[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values_mut()[i] = a.values()[i] * b.values()[i];
  flop_counter().add(static_cast<double>(out.size()));
  return out;
}

inline Tensor scale(const Tensor& x, double c) {
  auto xn = x.node();
  Tensor out = detail::make_op(x.rows(), x.cols(), {xn}, [xn, c](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * c;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.values_mut()[i] = x.values()[i] * c;
  flop_counter().add(static_cast<double>(out.size()));
  return out;
}

// Broadcast multiply of a 1x1 scalar tensor against a constant-or-variable matrix.
inline Tensor scalar_mul(const Tensor& s, const Tensor& m) {
  if (s.rows() != 1 || s.cols() != 1)
    throw ShapeError("scalar_mul: scalar operand has shape " +
                     detail::shape_str(s.rows(), s.cols()));
  auto sn = s.node(), mn = m.node();
  Tensor out = detail::make_op(m.rows(), m.cols(), {sn, mn}, [sn, mn](TensorNode& self) {
    if (sn->requires_grad) {
      sn->ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * mn->data[i];
      sn->grad[0] += acc;
    }
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        mn->grad[i] += self.grad[i] * sn->data[0];
    }
  });
  const double sv = s.values()[0];
  for (std::size_t i = 0; i < out.size(); ++i) out.values_mut()[i] = m.values()[i] * sv;
  flop_counter().add(static_cast<double>(out.size()));
  return out;
}

// Multiplies row i of `m` by col[i] (col is n x 1).
inline Tensor row_scale(const Tensor& col, const Tensor& m) {
  if (col.rows() != m.rows() || col.cols() != 1)
    throw ShapeError("row_scale: column " + detail::shape_str(col.rows(), col.cols()) +
                     " vs matrix " + detail::shape_str(m.rows(), m.cols()));
  const std::size_t r = m.rows(), c = m.cols();
  auto cn = col.node(), mn = m.node();
  Tensor out = detail::make_op(r, c, {cn, mn}, [cn, mn, r, c](TensorNode& self) {
    if (cn->requires_grad) {
      cn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * mn->data[i * c + j];
        cn->grad[i] += acc;
      }
    }
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          mn->grad[i * c + j] += self.grad[i * c + j] * cn->data[i];
    }
  });
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.values_mut()[i * c + j] = m.values()[i * c + j] * col.values()[i];
  flop_counter().add(static_cast<double>(r * c));
  return out;
}

// --------------------------------------------------------------------------
// Activations
// --------------------------------------------------------------------------

inline Tensor sigmoid(const Tensor& x) {
  auto xn = x.node();
  Tensor out = detail::make_op(x.rows(), x.cols(), {xn}, [xn](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.data[i];
      xn->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values_mut()[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
  flop_counter().add(3.0 * static_cast<double>(out.size()));
  return out;
}

// swish(x) = x * sigmoid(x)
inline Tensor swish(const Tensor& x) {
  auto xn = x.node();
  Tensor out = detail::make_op(x.rows(), x.cols(), {xn}, [xn](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double xi = xn->data[i];
      const double s = 1.0 / (1.0 + std::exp(-xi));
      xn->grad[i] += self.grad[i] * s * (1.0 + xi * (1.0 - s));
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double xi = x.values()[i];
    out.values_mut()[i] = xi / (1.0 + std::exp(-xi));
  }
  flop_counter().add(4.0 * static_cast<double>(out.size()));
  return out;
}

inline Tensor relu(const Tensor& x) {
  auto xn = x.node();
  Tensor out = detail::make_op(x.rows(), x.cols(), {xn}, [xn](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (xn->data[i] > 0.0) xn->grad[i] += self.grad[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values_mut()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  flop_counter().add(static_cast<double>(out.size()));
  return out;
}

// --------------------------------------------------------------------------
// Normalization and softmax
// --------------------------------------------------------------------------

inline constexpr double kRmsNormEps = 1e-6;

// Each row divided by sqrt(mean of squares + eps), scaled elementwise by gain.
inline Tensor rmsnorm(const Tensor& x, const Tensor& gain) {
  if (gain.rows() != 1 || gain.cols() != x.cols())
    throw ShapeError("rmsnorm: gain " + detail::shape_str(gain.rows(), gain.cols()) +
                     " vs input " + detail::shape_str(x.rows(), x.cols()));
  const std::size_t n = x.rows(), d = x.cols();
  auto xn = x.node(), gn = gain.node();
  Tensor out = detail::make_op(n, d, {xn, gn}, [xn, gn, n, d](TensorNode& self) {
    for (std::size_t i = 0; i < n; ++i) {
      double ms = 0.0;
      for (std::size_t j = 0; j < d; ++j) ms += xn->data[i * d + j] * xn->data[i * d + j];
      ms = ms / static_cast<double>(d) + kRmsNormEps;
      const double r = std::sqrt(ms);
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (std::size_t j = 0; j < d; ++j)
          gn->grad[j] += self.grad[i * d + j] * xn->data[i * d + j] / r;
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        double dot = 0.0;  // sum_k g_ik * gain_k * x_ik
        for (std::size_t j = 0; j < d; ++j)
          dot += self.grad[i * d + j] * gn->data[j] * xn->data[i * d + j];
        const double r3 = r * ms;  // r^3
        for (std::size_t j = 0; j < d; ++j)
          xn->grad[i * d + j] += self.grad[i * d + j] * gn->data[j] / r -
                                 xn->data[i * d + j] * dot / (static_cast<double>(d) * r3);
      }
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += x.values()[i * d + j] * x.values()[i * d + j];
    const double inv = 1.0 / std::sqrt(ms / static_cast<double>(d) + kRmsNormEps);
    for (std::size_t j = 0; j < d; ++j)
      out.values_mut()[i * d + j] = x.values()[i * d + j] * inv * gain.values()[j];
  }
  flop_counter().add(4.0 * static_cast<double>(n * d));
  return out;
}

// Row-wise masked softmax. Entries where mask <= 0.5 are excluded and output 0.
// A row with no unmasked entries yields an all-zero row rather than NaN, so an
// attention query with an empty key set contributes nothing downstream.
inline Tensor softmax_masked(const Tensor& logits, const Tensor& mask) {
  detail::check_same_shape(logits, mask, "softmax_masked");
  const std::size_t n = logits.rows(), c = logits.cols();
  auto ln = logits.node();
  auto mn = mask.node();
  Tensor out = detail::make_op(n, c, {ln, mn}, [ln, mn, n, c](TensorNode& self) {
    if (!ln->requires_grad) return;
    ln->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        if (mn->data[i * c + j] <= 0.5) continue;
        const double y = self.data[i * c + j];
        ln->grad[i * c + j] += y * (self.grad[i * c + j] - dot);
      }
    }
  });
  double unmasked = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (mask.values()[i * c + j] > 0.5) mx = std::max(mx, logits.values()[i * c + j]);
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked row
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask.values()[i * c + j] > 0.5) {
        const double e = std::exp(logits.values()[i * c + j] - mx);
        out.values_mut()[i * c + j] = e;
        sum += e;
        unmasked += 1.0;
      }
    }
    for (std::size_t j = 0; j < c; ++j)
      if (mask.values()[i * c + j] > 0.5) out.values_mut()[i * c + j] /= sum;
  }
  flop_counter().add(5.0 * unmasked);
  return out;
}

// --------------------------------------------------------------------------
// Structure ops: lookup, pooling, concat, slicing, gather
// --------------------------------------------------------------------------

inline Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids) {
  const std::size_t d = table.cols();
  const std::size_t v = table.rows();
  for (std::int64_t id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw DataError("embedding id " + std::to_string(id) + " out of range [0, " +
                      std::to_string(v) + ")");
  auto tn = table.node();
  auto ids_copy = ids;
  Tensor out =
      detail::make_op(ids.size(), d, {tn}, [tn, ids_copy, d](TensorNode& self) {
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids_copy.size(); ++i) {
          const std::size_t row = static_cast<std::size_t>(ids_copy[i]);
          for (std::size_t j = 0; j < d; ++j)
            tn->grad[row * d + j] += self.grad[i * d + j];
        }
      });
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t row = static_cast<std::size_t>(ids[i]);
    std::copy_n(table.values().data() + row * d, d, out.values_mut().data() + i * d);
  }
  return out;
}

// Mean over all rows -> 1 x d.
inline Tensor mean_rows(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw ShapeError("mean_rows: empty input");
  auto xn = x.node();
  Tensor out = detail::make_op(1, d, {xn}, [xn, n, d](TensorNode& self) {
    xn->ensure_grad();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) xn->grad[i * d + j] += self.grad[j] * inv;
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.values_mut()[j] += x.values()[i * d + j];
  for (std::size_t j = 0; j < d; ++j) out.values_mut()[j] /= static_cast<double>(n);
  flop_counter().add(static_cast<double>(n * d + d));
  return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw ShapeError("concat_rows: column mismatch, " + detail::shape_str(p.rows(), p.cols()) +
                       " vs expected cols " + std::to_string(c));
    r += p.rows();
    parents.push_back(p.node());
  }
  auto parents_copy = parents;
  Tensor out = detail::make_op(r, c, std::move(parents), [parents_copy, c](TensorNode& self) {
    std::size_t off = 0;
    for (const auto& p : parents_copy) {
      const std::size_t len = p->rows * c;
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) p->grad[i] += self.grad[off + i];
      }
      off += len;
    }
  });
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values_mut().begin() + off);
    off += p.size();
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& p : parts) {
    if (p.rows() != r)
      throw ShapeError("concat_cols: row mismatch, " + detail::shape_str(p.rows(), p.cols()) +
                       " vs expected rows " + std::to_string(r));
    c += p.cols();
    parents.push_back(p.node());
  }
  auto parents_copy = parents;
  Tensor out = detail::make_op(r, c, std::move(parents), [parents_copy, r, c](TensorNode& self) {
    std::size_t col_off = 0;
    for (const auto& p : parents_copy) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < p->cols; ++j)
            p->grad[i * p->cols + j] += self.grad[i * c + col_off + j];
      }
      col_off += p->cols;
    }
  });
  std::size_t col_off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.values().data() + i * p.cols(), p.cols(),
                  out.values_mut().data() + i * c + col_off);
    col_off += p.cols();
  }
  return out;
}

inline Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  if (start + count > x.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + std::to_string(x.rows()) +
                     " rows");
  const std::size_t c = x.cols();
  auto xn = x.node();
  Tensor out = detail::make_op(count, c, {xn}, [xn, start, count, c](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < count * c; ++i) xn->grad[start * c + i] += self.grad[i];
  });
  std::copy_n(x.values().data() + start * c, count * c, out.values_mut().data());
  return out;
}

inline Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  if (start + count > x.cols())
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + std::to_string(x.cols()) +
                     " cols");
  const std::size_t r = x.rows(), c = x.cols();
  auto xn = x.node();
  Tensor out = detail::make_op(r, count, {xn}, [xn, start, count, r, c](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j)
        xn->grad[i * c + start + j] += self.grad[i * count + j];
  });
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.values().data() + i * c + start, count, out.values_mut().data() + i * count);
  return out;
}

// Gathers rows by index; index -1 yields a zero row and receives no gradient.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
  const std::size_t c = x.cols();
  for (std::int64_t idx : indices)
    if (idx >= static_cast<std::int64_t>(x.rows()) || idx < -1)
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of " +
                       std::to_string(x.rows()) + " rows");
  auto xn = x.node();
  auto idx_copy = indices;
  Tensor out = detail::make_op(indices.size(), c, {xn}, [xn, idx_copy, c](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < idx_copy.size(); ++i) {
      if (idx_copy[i] < 0) continue;
      const std::size_t row = static_cast<std::size_t>(idx_copy[i]);
      for (std::size_t j = 0; j < c; ++j) xn->grad[row * c + j] += self.grad[i * c + j];
    }
  });
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0) continue;
    std::copy_n(x.values().data() + static_cast<std::size_t>(indices[i]) * c, c,
                out.values_mut().data() + i * c);
  }
  return out;
}

// Repeats a 1 x d row n times.
inline Tensor repeat_row(const Tensor& x, std::size_t n) {
  if (x.rows() != 1) throw ShapeError("repeat_row: input must be a single row");
  const std::size_t d = x.cols();
  auto xn = x.node();
  Tensor out = detail::make_op(n, d, {xn}, [xn, n, d](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) xn->grad[j] += self.grad[i * d + j];
  });
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.values().data(), d, out.values_mut().data() + i * d);
  return out;
}

inline Tensor sum_all(const Tensor& x) {
  auto xn = x.node();
  Tensor out = detail::make_op(1, 1, {xn}, [xn](TensorNode& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
  });
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values_mut()[0] = acc;
  flop_counter().add(static_cast<double>(x.size()));
  return out;
}

// --------------------------------------------------------------------------
// Windowed attention kernels. Each query row has its own key set, given by an
// index matrix into a shared source. idx[i*width + j] selects the source row
// for query i's j-th key slot; -1 marks an absent slot (zero logit, no grad).
// --------------------------------------------------------------------------

inline Tensor window_logits(const Tensor& q, const Tensor& key_src,
                            const std::vector<std::int64_t>& idx, std::size_t width,
                            double scale_factor) {
  const std::size_t n = q.rows(), d = q.cols();
  if (key_src.cols() != d)
    throw ShapeError("window_logits: query dim " + std::to_string(d) + " vs key dim " +
                     std::to_string(key_src.cols()));
  if (idx.size() != n * width) throw ShapeError("window_logits: index matrix size mismatch");
  auto qn = q.node(), kn = key_src.node();
  auto idx_copy = idx;
  double present = 0.0;
  Tensor out = detail::make_op(
      n, width, {qn, kn}, [qn, kn, idx_copy, n, width, d, scale_factor](TensorNode& self) {
        if (qn->requires_grad) qn->ensure_grad();
        if (kn->requires_grad) kn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < width; ++j) {
            const std::int64_t src = idx_copy[i * width + j];
            if (src < 0) continue;
            const double g = self.grad[i * width + j] * scale_factor;
            if (g == 0.0) continue;
            const std::size_t s = static_cast<std::size_t>(src);
            if (qn->requires_grad)
              for (std::size_t t = 0; t < d; ++t) qn->grad[i * d + t] += g * kn->data[s * d + t];
            if (kn->requires_grad)
              for (std::size_t t = 0; t < d; ++t) kn->grad[s * d + t] += g * qn->data[i * d + t];
          }
      });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const std::int64_t src = idx[i * width + j];
      if (src < 0) continue;
      double acc = 0.0;
      const double* qrow = q.values().data() + i * d;
      const double* krow = key_src.values().data() + static_cast<std::size_t>(src) * d;
      for (std::size_t t = 0; t < d; ++t) acc += qrow[t] * krow[t];
      out.values_mut()[i * width + j] = acc * scale_factor;
      present += 1.0;
    }
  flop_counter().add((2.0 * static_cast<double>(d) + 1.0) * present);
  return out;
}

inline Tensor window_mix(const Tensor& probs, const Tensor& value_src,
                         const std::vector<std::int64_t>& idx, std::size_t width) {
  const std::size_t n = probs.rows(), d = value_src.cols();
  if (probs.cols() != width) throw ShapeError("window_mix: probs width mismatch");
  if (idx.size() != n * width) throw ShapeError("window_mix: index matrix size mismatch");
  auto pn = probs.node(), vn = value_src.node();
  auto idx_copy = idx;
  double present = 0.0;
  Tensor out =
      detail::make_op(n, d, {pn, vn}, [pn, vn, idx_copy, n, width, d](TensorNode& self) {
        if (pn->requires_grad) pn->ensure_grad();
        if (vn->requires_grad) vn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < width; ++j) {
            const std::int64_t src = idx_copy[i * width + j];
            if (src < 0) continue;
            const std::size_t s = static_cast<std::size_t>(src);
            if (pn->requires_grad) {
              double acc = 0.0;
              for (std::size_t t = 0; t < d; ++t)
                acc += self.grad[i * d + t] * vn->data[s * d + t];
              pn->grad[i * width + j] += acc;
            }
            if (vn->requires_grad) {
              const double p = pn->data[i * width + j];
              if (p != 0.0)
                for (std::size_t t = 0; t < d; ++t)
                  vn->grad[s * d + t] += self.grad[i * d + t] * p;
            }
          }
      });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const std::int64_t src = idx[i * width + j];
      if (src < 0) continue;
      const double p = probs.values()[i * width + j];
      const double* vrow = value_src.values().data() + static_cast<std::size_t>(src) * d;
      for (std::size_t t = 0; t < d; ++t) out.values_mut()[i * d + t] += p * vrow[t];
      present += 1.0;
    }
  flop_counter().add(2.0 * static_cast<double>(d) * present);
  return out;
}

// --------------------------------------------------------------------------
// Loss
// --------------------------------------------------------------------------

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy over a k x 1 prediction column against 0/1 labels.
// Predictions are clamped to [1e-7, 1 - 1e-7]; gradient is zero in the
// clamped region.
inline Tensor bce_mean(const Tensor& pred, const std::vector<int>& labels) {
  if (pred.cols() != 1 || pred.rows() != labels.size())
    throw ShapeError("bce_mean: predictions " + detail::shape_str(pred.rows(), pred.cols()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  const std::size_t k = labels.size();
  auto pn = pred.node();
  auto lab = labels;
  Tensor out = detail::make_op(1, 1, {pn}, [pn, lab, k](TensorNode& self) {
    pn->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double p = pn->data[i];
      if (p <= kBceClamp || p >= 1.0 - kBceClamp) continue;
      const double y = static_cast<double>(lab[i]);
      pn->grad[i] += g * (p - y) / (p * (1.0 - p));
    }
  });
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double p = std::clamp(pred.values()[i], kBceClamp, 1.0 - kBceClamp);
    const double y = static_cast<double>(labels[i]);
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  out.values_mut()[0] = acc / static_cast<double>(k);
  flop_counter().add(6.0 * static_cast<double>(k));
  return out;
}

// --------------------------------------------------------------------------
// Backward pass
// --------------------------------------------------------------------------

// Seeds the gradient of a 1 x 1 loss with `seed` and propagates through the
// graph in reverse topological order. Parameter gradients accumulate across
// calls until zero_grad().
inline void backward(const Tensor& loss, double seed = 1.0) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backward: loss must be 1x1, got " +
                     detail::shape_str(loss.rows(), loss.cols()));
  if (!loss.requires_grad()) return;

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

}  // namespace sparsectr
