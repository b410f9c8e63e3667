#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "topolab/common.hpp"

namespace topolab::ad {

// When enabled, every op validates that its output is finite. Off by default;
// tests and the trainer's diagnostics turn it on per thread.
inline thread_local bool numerics_check_enabled = false;

struct NumericsCheckGuard {
  bool previous;
  explicit NumericsCheckGuard(bool enable) : previous(numerics_check_enabled) {
    numerics_check_enabled = enable;
  }
  ~NumericsCheckGuard() { numerics_check_enabled = previous; }
};

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantics handle onto a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    auto n = std::make_shared<Node>();
    std::size_t expect = 1;
    for (int e : shape) expect *= static_cast<std::size_t>(e);
    if (values.size() != expect) throw ShapeError("leaf: value count does not match shape");
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor constant(std::vector<int> shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values), false);
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const NodePtr& node() const { return node_; }
  const std::vector<int>& shape() const { return node_->shape; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& mutable_values() { return node_->value; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t numel() const { return node_->numel(); }

  int rows() const {
    if (node_->shape.size() != 2) throw ShapeError("rows(): tensor is not rank 2");
    return node_->shape[0];
  }
  int cols() const {
    if (node_->shape.size() != 2) throw ShapeError("cols(): tensor is not rank 2");
    return node_->shape[1];
  }

  double item() const {
    if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
    return node_->value[0];
  }

 private:
  NodePtr node_;
};

namespace detail {

inline void check_finite(const Node& n, const char* op) {
  if (!numerics_check_enabled) return;
  for (double v : n.value) {
    if (!std::isfinite(v))
      throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

inline NodePtr make_node(std::vector<int> shape, std::vector<NodePtr> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.resize(n->numel());
  for (const auto& p : inputs) n->requires_grad = n->requires_grad || p->requires_grad;
  n->inputs = std::move(inputs);
  return n;
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<std::size_t>(i) * k;
    double* c = C + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      double av = a[kk];
      const double* b = B + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

inline void transpose(const double* A, double* AT, int m, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) AT[static_cast<std::size_t>(j) * m + i] = A[static_cast<std::size_t>(i) * n + j];
}

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core binary/unary ops.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions differ");
  NodePtr out = detail::make_node({m, n}, {a.node(), b.node()});
  detail::gemm_acc(a.values().data(), b.values().data(), out->value.data(), m, k, n);
  detail::check_finite(*out, "matmul");
  if (out->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, m, k, n](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        std::vector<double> bt(static_cast<std::size_t>(n) * k);
        detail::transpose(bn->value.data(), bt.data(), k, n);
        detail::gemm_acc(self.grad.data(), bt.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        std::vector<double> at(static_cast<std::size_t>(k) * m);
        detail::transpose(an->value.data(), at.data(), m, k);
        detail::gemm_acc(at.data(), self.grad.data(), bn->grad.data(), k, m, n);
      }
    };
  }
  return Tensor(out);
}

// C = A * B^T where A is [m x k], B is [n x k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul_nt");
  detail::require_rank2(b, "matmul_nt");
  int m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) throw ShapeError("matmul_nt: inner dimensions differ");
  NodePtr out = detail::make_node({m, n}, {a.node(), b.node()});
  {
    std::vector<double> bt(static_cast<std::size_t>(k) * n);
    detail::transpose(b.values().data(), bt.data(), n, k);
    detail::gemm_acc(a.values().data(), bt.data(), out->value.data(), m, k, n);
  }
  detail::check_finite(*out, "matmul_nt");
  if (out->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, m, k, n](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        detail::gemm_acc(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        std::vector<double> gt(static_cast<std::size_t>(n) * m);
        detail::transpose(self.grad.data(), gt.data(), m, n);
        detail::gemm_acc(gt.data(), an->value.data(), bn->grad.data(), n, m, k);
      }
    };
  }
  return Tensor(out);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  NodePtr out = detail::make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  detail::check_finite(*out, "add");
  if (out->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    out->backward_fn = [an, bn](Node& self) {
      for (NodePtr t : {an, bn}) {
        if (!t->requires_grad) continue;
        t->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) t->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

// x[T, C] + row vector b[C], broadcast over rows.
inline Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  detail::require_rank2(x, "add_rowvec");
  if (b.shape().size() != 1 || b.shape()[0] != x.cols())
    throw ShapeError("add_rowvec: bias must be rank-1 of size cols(x)");
  int rows = x.rows(), cols = x.cols();
  NodePtr out = detail::make_node(x.shape(), {x.node(), b.node()});
  const double* xv = x.values().data();
  const double* bv = b.values().data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out->value[static_cast<std::size_t>(r) * cols + c] = xv[static_cast<std::size_t>(r) * cols + c] + bv[c];
  detail::check_finite(*out, "add_rowvec");
  if (out->requires_grad) {
    NodePtr xn = x.node(), bn = b.node();
    out->backward_fn = [xn, bn, rows, cols](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) bn->grad[c] += self.grad[static_cast<std::size_t>(r) * cols + c];
      }
    };
  }
  return Tensor(out);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
  NodePtr out = detail::make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  detail::check_finite(*out, "mul");
  if (out->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    out->backward_fn = [an, bn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
      }
    };
  }
  return Tensor(out);
}

inline Tensor scale(const Tensor& x, double s) {
  NodePtr out = detail::make_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] * s;
  detail::check_finite(*out, "scale");
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, s](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * s;
    };
  }
  return Tensor(out);
}

inline Tensor relu(const Tensor& x) {
  NodePtr out = detail::make_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (self.value[i] > 0.0) xn->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

inline Tensor log(const Tensor& x) {
  NodePtr out = detail::make_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = std::log(xv[i]);
  detail::check_finite(*out, "log");
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] / xn->value[i];
    };
  }
  return Tensor(out);
}

inline Tensor sum(const Tensor& x) {
  NodePtr out = detail::make_node({1}, {x.node()});
  out->value[0] = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  detail::check_finite(*out, "sum");
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
    };
  }
  return Tensor(out);
}

// Mean over rows: [T, C] -> [1, C].
inline Tensor mean_rows(const Tensor& x) {
  detail::require_rank2(x, "mean_rows");
  int rows = x.rows(), cols = x.cols();
  NodePtr out = detail::make_node({1, cols}, {x.node()});
  const double* xv = x.values().data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out->value[c] += xv[static_cast<std::size_t>(r) * cols + c];
  for (int c = 0; c < cols; ++c) out->value[c] /= rows;
  detail::check_finite(*out, "mean_rows");
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, rows, cols](Node& self) {
      xn->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          xn->grad[static_cast<std::size_t>(r) * cols + c] += self.grad[c] / rows;
    };
  }
  return Tensor(out);
}

inline Tensor softmax_rows(const Tensor& x) {
  detail::require_rank2(x, "softmax_rows");
  int rows = x.rows(), cols = x.cols();
  NodePtr out = detail::make_node(x.shape(), {x.node()});
  const double* xv = x.values().data();
  for (int r = 0; r < rows; ++r) {
    const double* row = xv + static_cast<std::size_t>(r) * cols;
    double* orow = out->value.data() + static_cast<std::size_t>(r) * cols;
    double mx = row[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      orow[c] = std::exp(row[c] - mx);
      z += orow[c];
    }
    for (int c = 0; c < cols; ++c) orow[c] /= z;
  }
  detail::check_finite(*out, "softmax_rows");
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, rows, cols](Node& self) {
      xn->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const double* y = self.value.data() + static_cast<std::size_t>(r) * cols;
        const double* dy = self.grad.data() + static_cast<std::size_t>(r) * cols;
        double* dx = xn->grad.data() + static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += dy[c] * y[c];
        for (int c = 0; c < cols; ++c) dx[c] += (dy[c] - dot) * y[c];
      }
    };
  }
  return Tensor(out);
}

// Row-wise layer normalization with affine parameters, eps inside the sqrt.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              double eps = 1e-5) {
  detail::require_rank2(x, "layer_norm_rows");
  int rows = x.rows(), cols = x.cols();
  if (gamma.shape() != std::vector<int>{cols} || beta.shape() != std::vector<int>{cols})
    throw ShapeError("layer_norm_rows: gamma/beta must be rank-1 of size cols(x)");
  NodePtr out = detail::make_node(x.shape(), {x.node(), gamma.node(), beta.node()});
  std::vector<double> inv_std(rows), means(rows);
  const double* xv = x.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();
  for (int r = 0; r < rows; ++r) {
    const double* row = xv + static_cast<std::size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += row[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= cols;
    means[r] = mean;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    double* orow = out->value.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) orow[c] = gv[c] * (row[c] - mean) * inv_std[r] + bv[c];
  }
  detail::check_finite(*out, "layer_norm_rows");
  if (out->requires_grad) {
    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
    out->backward_fn = [xn, gn, bn, rows, cols, means, inv_std](Node& self) {
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const double* xrow = xn->value.data() + static_cast<std::size_t>(r) * cols;
        const double* dy = self.grad.data() + static_cast<std::size_t>(r) * cols;
        double istd = inv_std[r], mean = means[r];
        if (gn->requires_grad || bn->requires_grad) {
          for (int c = 0; c < cols; ++c) {
            double xhat = (xrow[c] - mean) * istd;
            if (gn->requires_grad) gn->grad[c] += dy[c] * xhat;
            if (bn->requires_grad) bn->grad[c] += dy[c];
          }
        }
        if (xn->requires_grad) {
          double* dx = xn->grad.data() + static_cast<std::size_t>(r) * cols;
          const double* gv2 = gn->value.data();
          double sum_g = 0.0, sum_gx = 0.0;
          for (int c = 0; c < cols; ++c) {
            double xhat = (xrow[c] - mean) * istd;
            double g = dy[c] * gv2[c];
            sum_g += g;
            sum_gx += g * xhat;
          }
          for (int c = 0; c < cols; ++c) {
            double xhat = (xrow[c] - mean) * istd;
            double g = dy[c] * gv2[c];
            dx[c] += (g - sum_g / cols - xhat * sum_gx / cols) * istd;
          }
        }
      }
    };
  }
  return Tensor(out);
}

// Row-wise L2 normalization; rejects zero-norm rows (cosine undefined).
inline Tensor l2_normalize_rows(const Tensor& x) {
  detail::require_rank2(x, "l2_normalize_rows");
  int rows = x.rows(), cols = x.cols();
  NodePtr out = detail::make_node(x.shape(), {x.node()});
  std::vector<double> norms(rows);
  const double* xv = x.values().data();
  for (int r = 0; r < rows; ++r) {
    const double* row = xv + static_cast<std::size_t>(r) * cols;
    double sq = 0.0;
    for (int c = 0; c < cols; ++c) sq += row[c] * row[c];
    double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw NumericalError("l2_normalize_rows: zero or non-finite row norm");
    norms[r] = norm;
    double* orow = out->value.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) orow[c] = row[c] / norm;
  }
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, rows, cols, norms](Node& self) {
      xn->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const double* y = self.value.data() + static_cast<std::size_t>(r) * cols;
        const double* dy = self.grad.data() + static_cast<std::size_t>(r) * cols;
        double* dx = xn->grad.data() + static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += dy[c] * y[c];
        for (int c = 0; c < cols; ++c) dx[c] += (dy[c] - y[c] * dot) / norms[r];
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Structural ops.

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  int cols = parts[0].cols();
  int total = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    total += p.rows();
    inputs.push_back(p.node());
  }
  NodePtr out = detail::make_node({total, cols}, inputs);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out->value.begin() + offset);
    offset += p.values().size();
  }
  if (out->requires_grad) {
    std::vector<NodePtr> ins = out->inputs;
    out->backward_fn = [ins](Node& self) {
      std::size_t off = 0;
      for (const auto& t : ins) {
        std::size_t n = t->numel();
        if (t->requires_grad) {
          t->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) t->grad[i] += self.grad[off + i];
        }
        off += n;
      }
    };
  }
  return Tensor(out);
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int rows = parts[0].rows();
  int total_cols = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    total_cols += p.cols();
    inputs.push_back(p.node());
  }
  NodePtr out = detail::make_node({rows, total_cols}, inputs);
  int col_off = 0;
  for (const auto& p : parts) {
    int pc = p.cols();
    const double* pv = p.values().data();
    for (int r = 0; r < rows; ++r)
      std::copy(pv + static_cast<std::size_t>(r) * pc, pv + static_cast<std::size_t>(r + 1) * pc,
                out->value.begin() + static_cast<std::size_t>(r) * total_cols + col_off);
    col_off += pc;
  }
  if (out->requires_grad) {
    std::vector<NodePtr> ins = out->inputs;
    std::vector<int> widths;
    for (const auto& p : parts) widths.push_back(p.cols());
    out->backward_fn = [ins, widths, rows, total_cols](Node& self) {
      int off = 0;
      for (std::size_t idx = 0; idx < ins.size(); ++idx) {
        int pc = widths[idx];
        if (ins[idx]->requires_grad) {
          ins[idx]->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < pc; ++c)
              ins[idx]->grad[static_cast<std::size_t>(r) * pc + c] +=
                  self.grad[static_cast<std::size_t>(r) * total_cols + off + c];
        }
        off += pc;
      }
    };
  }
  return Tensor(out);
}

inline Tensor slice_cols(const Tensor& x, int first, int count) {
  detail::require_rank2(x, "slice_cols");
  int rows = x.rows(), cols = x.cols();
  if (first < 0 || count <= 0 || first + count > cols) throw ShapeError("slice_cols: out of range");
  NodePtr out = detail::make_node({rows, count}, {x.node()});
  const double* xv = x.values().data();
  for (int r = 0; r < rows; ++r)
    std::copy(xv + static_cast<std::size_t>(r) * cols + first,
              xv + static_cast<std::size_t>(r) * cols + first + count,
              out->value.begin() + static_cast<std::size_t>(r) * count);
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, rows, cols, first, count](Node& self) {
      xn->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < count; ++c)
          xn->grad[static_cast<std::size_t>(r) * cols + first + c] +=
              self.grad[static_cast<std::size_t>(r) * count + c];
    };
  }
  return Tensor(out);
}

inline Tensor slice_rows(const Tensor& x, int first, int count) {
  detail::require_rank2(x, "slice_rows");
  int rows = x.rows(), cols = x.cols();
  if (first < 0 || count <= 0 || first + count > rows) throw ShapeError("slice_rows: out of range");
  NodePtr out = detail::make_node({count, cols}, {x.node()});
  std::copy(x.values().begin() + static_cast<std::size_t>(first) * cols,
            x.values().begin() + static_cast<std::size_t>(first + count) * cols, out->value.begin());
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, cols, first, count](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < static_cast<std::size_t>(count) * cols; ++i)
        xn->grad[static_cast<std::size_t>(first) * cols + i] += self.grad[i];
    };
  }
  return Tensor(out);
}

inline Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
  detail::require_rank2(x, "gather_rows");
  int rows = x.rows(), cols = x.cols();
  for (int i : indices)
    if (i < 0 || i >= rows) throw ShapeError("gather_rows: index out of range");
  NodePtr out = detail::make_node({static_cast<int>(indices.size()), cols}, {x.node()});
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy(xv + static_cast<std::size_t>(indices[r]) * cols,
              xv + static_cast<std::size_t>(indices[r] + 1) * cols, out->value.begin() + r * cols);
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, cols, indices](Node& self) {
      xn->ensure_grad();
      for (std::size_t r = 0; r < indices.size(); ++r)
        for (int c = 0; c < cols; ++c)
          xn->grad[static_cast<std::size_t>(indices[r]) * cols + c] += self.grad[r * cols + c];
    };
  }
  return Tensor(out);
}

// out[r] = x[r, cols[r]]; shape [N].
inline Tensor pick_per_row(const Tensor& x, const std::vector<int>& col_of_row) {
  detail::require_rank2(x, "pick_per_row");
  int rows = x.rows(), cols = x.cols();
  if (static_cast<int>(col_of_row.size()) != rows)
    throw ShapeError("pick_per_row: one column index per row required");
  for (int c : col_of_row)
    if (c < 0 || c >= cols) throw LabelError("pick_per_row: column index out of range");
  NodePtr out = detail::make_node({rows}, {x.node()});
  for (int r = 0; r < rows; ++r)
    out->value[r] = x.values()[static_cast<std::size_t>(r) * cols + col_of_row[r]];
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn, cols, col_of_row](Node& self) {
      xn->ensure_grad();
      for (std::size_t r = 0; r < col_of_row.size(); ++r)
        xn->grad[r * cols + col_of_row[r]] += self.grad[r];
    };
  }
  return Tensor(out);
}

inline Tensor reshape(const Tensor& x, std::vector<int> shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  if (n != x.numel()) throw ShapeError("reshape: element count mismatch");
  NodePtr out = detail::make_node(std::move(shape), {x.node()});
  out->value = x.values();
  if (out->requires_grad) {
    NodePtr xn = x.node();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Trilinear sampling from a feature grid. F has shape {H, W, D, C} with
// channels contiguous per voxel and x the fastest voxel axis. Positions are in
// feature-grid units; out-of-range coordinates clamp to the boundary, counted
// in *clamped if given. Differentiable w.r.t. F only.

inline Tensor trilinear_sample(const Tensor& f, const std::vector<Vec3>& positions,
                               int* clamped = nullptr) {
  if (f.shape().size() != 4) throw ShapeError("trilinear_sample: feature grid must be rank 4");
  int H = f.shape()[0], W = f.shape()[1], D = f.shape()[2], C = f.shape()[3];
  int L = static_cast<int>(positions.size());
  NodePtr out = detail::make_node({L, C}, {f.node()});

  struct Corner {
    std::size_t offset;
    double weight;
  };
  std::vector<std::array<Corner, 8>> corners(L);
  auto voxel_base = [&](int x, int y, int z) {
    return static_cast<std::size_t>(C) *
           (static_cast<std::size_t>(x) +
            static_cast<std::size_t>(H) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(W) * z));
  };

  for (int l = 0; l < L; ++l) {
    Vec3 p = positions[l];
    bool clip = p.x < 0 || p.y < 0 || p.z < 0 || p.x > H - 1 || p.y > W - 1 || p.z > D - 1;
    if (clip && clamped) ++*clamped;
    double px = std::clamp(p.x, 0.0, static_cast<double>(H - 1));
    double py = std::clamp(p.y, 0.0, static_cast<double>(W - 1));
    double pz = std::clamp(p.z, 0.0, static_cast<double>(D - 1));
    int x0 = std::min(static_cast<int>(px), H - 2 >= 0 ? H - 2 : 0);
    int y0 = std::min(static_cast<int>(py), W - 2 >= 0 ? W - 2 : 0);
    int z0 = std::min(static_cast<int>(pz), D - 2 >= 0 ? D - 2 : 0);
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    z0 = std::max(z0, 0);
    int x1 = std::min(x0 + 1, H - 1), y1 = std::min(y0 + 1, W - 1), z1 = std::min(z0 + 1, D - 1);
    double tx = px - x0, ty = py - y0, tz = pz - z0;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
          corners[l][k++] = {voxel_base(dx ? x1 : x0, dy ? y1 : y0, dz ? z1 : z0), w};
        }
    const double* fv = f.values().data();
    double* orow = out->value.data() + static_cast<std::size_t>(l) * C;
    for (const auto& corner : corners[l]) {
      if (corner.weight == 0.0) continue;
      const double* src = fv + corner.offset;
      for (int c = 0; c < C; ++c) orow[c] += corner.weight * src[c];
    }
  }
  detail::check_finite(*out, "trilinear_sample");
  if (out->requires_grad) {
    NodePtr fn = f.node();
    out->backward_fn = [fn, corners, C, L](Node& self) {
      fn->ensure_grad();
      for (int l = 0; l < L; ++l) {
        const double* dy = self.grad.data() + static_cast<std::size_t>(l) * C;
        for (const auto& corner : corners[l]) {
          if (corner.weight == 0.0) continue;
          double* dst = fn->grad.data() + corner.offset;
          for (int c = 0; c < C; ++c) dst[c] += corner.weight * dy[c];
        }
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// 3D convolution, kernel 3, stride 2, padding 1. Input {H, W, D, Cin}, weight
// {3, 3, 3, Cin, Cout}, bias {Cout}; output {ceil(H/2), ceil(W/2), ceil(D/2), Cout}.

inline Tensor conv3d_s2p1(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 4) throw ShapeError("conv3d: input must be rank 4");
  if (w.shape().size() != 5 || w.shape()[0] != 3 || w.shape()[1] != 3 || w.shape()[2] != 3)
    throw ShapeError("conv3d: weight must be {3,3,3,Cin,Cout}");
  int H = x.shape()[0], W = x.shape()[1], D = x.shape()[2], Cin = x.shape()[3];
  if (w.shape()[3] != Cin) throw ShapeError("conv3d: channel mismatch");
  int Cout = w.shape()[4];
  if (b.shape() != std::vector<int>{Cout}) throw ShapeError("conv3d: bias must be {Cout}");
  int Ho = (H + 1) / 2, Wo = (W + 1) / 2, Do = (D + 1) / 2;

  NodePtr out = detail::make_node({Ho, Wo, Do, Cout}, {x.node(), w.node(), b.node()});
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  const double* bv = b.values().data();
  // Captured by value: backward_fn outlives this frame.
  auto in_base = [Cin, H, W](int ix, int iy, int iz) {
    return static_cast<std::size_t>(Cin) *
           (static_cast<std::size_t>(ix) +
            static_cast<std::size_t>(H) * (static_cast<std::size_t>(iy) + static_cast<std::size_t>(W) * iz));
  };
  auto w_base = [Cout, Cin](int kx, int ky, int kz, int ci) {
    return static_cast<std::size_t>(Cout) *
           (static_cast<std::size_t>(ci) +
            static_cast<std::size_t>(Cin) *
                (static_cast<std::size_t>(kx) + 3 * (static_cast<std::size_t>(ky) + 3 * static_cast<std::size_t>(kz))));
  };

  for (int oz = 0; oz < Do; ++oz)
    for (int oy = 0; oy < Wo; ++oy)
      for (int ox = 0; ox < Ho; ++ox) {
        double* orow = out->value.data() +
                       static_cast<std::size_t>(Cout) *
                           (static_cast<std::size_t>(ox) +
                            static_cast<std::size_t>(Ho) *
                                (static_cast<std::size_t>(oy) + static_cast<std::size_t>(Wo) * oz));
        for (int co = 0; co < Cout; ++co) orow[co] = bv[co];
        for (int kz = 0; kz < 3; ++kz) {
          int iz = 2 * oz + kz - 1;
          if (iz < 0 || iz >= D) continue;
          for (int ky = 0; ky < 3; ++ky) {
            int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= W) continue;
            for (int kx = 0; kx < 3; ++kx) {
              int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= H) continue;
              const double* in = xv + in_base(ix, iy, iz);
              for (int ci = 0; ci < Cin; ++ci) {
                double xin = in[ci];
                if (xin == 0.0) continue;
                const double* wrow = wv + w_base(kx, ky, kz, ci);
                for (int co = 0; co < Cout; ++co) orow[co] += xin * wrow[co];
              }
            }
          }
        }
      }
  detail::check_finite(*out, "conv3d");
  if (out->requires_grad) {
    NodePtr xn = x.node(), wn = w.node(), bn = b.node();
    out->backward_fn = [xn, wn, bn, H, W, D, Cin, Cout, Ho, Wo, Do, in_base, w_base](Node& self) {
      if (bn->requires_grad) bn->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (int oz = 0; oz < Do; ++oz)
        for (int oy = 0; oy < Wo; ++oy)
          for (int ox = 0; ox < Ho; ++ox) {
            const double* dy = self.grad.data() +
                               static_cast<std::size_t>(Cout) *
                                   (static_cast<std::size_t>(ox) +
                                    static_cast<std::size_t>(Ho) *
                                        (static_cast<std::size_t>(oy) +
                                         static_cast<std::size_t>(Wo) * oz));
            if (bn->requires_grad)
              for (int co = 0; co < Cout; ++co) bn->grad[co] += dy[co];
            for (int kz = 0; kz < 3; ++kz) {
              int iz = 2 * oz + kz - 1;
              if (iz < 0 || iz >= D) continue;
              for (int ky = 0; ky < 3; ++ky) {
                int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= W) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  int ix = 2 * ox + kx - 1;
                  if (ix < 0 || ix >= H) continue;
                  const double* in = xn->value.data() + in_base(ix, iy, iz);
                  double* dxrow = xn->requires_grad ? xn->grad.data() + in_base(ix, iy, iz) : nullptr;
                  for (int ci = 0; ci < Cin; ++ci) {
                    const double* wrow = wn->value.data() + w_base(kx, ky, kz, ci);
                    double* dwrow = wn->requires_grad ? wn->grad.data() + w_base(kx, ky, kz, ci) : nullptr;
                    double xin = in[ci];
                    double dx_acc = 0.0;
                    for (int co = 0; co < Cout; ++co) {
                      double g = dy[co];
                      if (dwrow) dwrow[co] += g * xin;
                      dx_acc += g * wrow[co];
                    }
                    if (dxrow) dxrow[ci] += dx_acc;
                  }
                }
              }
            }
          }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Reverse sweep. Gradients accumulate; callers zero parameter grads between
// optimizer steps.

inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward: loss must be a scalar");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      Node* in = f.node->inputs[f.next_input++].get();
      if (in->requires_grad && !visited.count(in)) {
        visited.insert(in);
        stack.push_back({in, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace topolab::ad
