#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "featadapt/errors.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

namespace detail {

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void(Node&)> backprop;
};

inline void ensure_grad(TensorImpl& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        c[i * n + j] += av * b[kk * n + j];
      }
    }
  }
}

// C[m x k] += X[m x n] * Y[k x n]^T
inline void gemm_nt(std::span<const double> x, std::span<const double> y,
                    std::span<double> c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += x[i * n + j] * y[kk * n + j];
      }
      c[i * k + kk] += acc;
    }
  }
}

// C[k x n] += X[m x k]^T * Y[m x n]
inline void gemm_tn(std::span<const double> x, std::span<const double> y,
                    std::span<double> c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double xv = x[i * k + kk];
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        c[kk * n + j] += xv * y[i * n + j];
      }
    }
  }
}

}  // namespace detail

// Records the operations of one forward pass (define-by-run). A Tape activates
// itself on construction and deactivates on destruction; ops record onto the
// innermost active tape whenever an input requires grad. With no active tape
// the same ops run as plain evaluation.
class Tape {
 public:
  Tape() { stack().push_back(this); }
  ~Tape() { stack().pop_back(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return stack().empty() ? nullptr : stack().back(); }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void record(detail::Node node) { nodes_.push_back(std::move(node)); }
  std::vector<detail::Node>& nodes() { return nodes_; }

 private:
  static std::vector<Tape*>& stack() {
    thread_local std::vector<Tape*> s;
    return s;
  }

  std::vector<detail::Node> nodes_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> values, const char* context) {
  ensure_finite(values, context);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor::from_impl(std::move(impl));
}

inline void maybe_record(std::initializer_list<Tensor> inputs, Tensor& out,
                         std::function<void(Node&)> backprop) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  bool any_grad = false;
  for (const auto& t : inputs) any_grad = any_grad || t.requires_grad();
  if (!any_grad) return;

  auto out_impl = out.impl();
  out_impl->requires_grad = true;
  out_impl->leaf = false;
  Node node;
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs) node.inputs.push_back(t.impl());
  node.output = std::move(out_impl);
  node.backprop = std::move(backprop);
  tape->record(std::move(node));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable operations
// ---------------------------------------------------------------------------

enum class EwOp { Add, Sub, Mul };

/// Pointwise op on equal shapes, or with one 1x1 operand broadcast.
inline Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op) {
  const bool same = a.shape() == b.shape();
  const bool b_scalar = !same && b.is_scalar();
  const bool a_scalar = !same && !b_scalar && a.is_scalar();
  if (!same && !b_scalar && !a_scalar) {
    throw ShapeError("elementwise: incompatible shapes " + a.shape().str() + " vs " +
                     b.shape().str());
  }

  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape.numel();
  std::vector<double> out(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a_scalar ? da[0] : da[i];
    const double y = b_scalar ? db[0] : db[i];
    out[i] = op == EwOp::Add ? x + y : op == EwOp::Sub ? x - y : x * y;
  }

  Tensor result = detail::make_result(shape, std::move(out), "elementwise");
  detail::maybe_record({a, b}, result, [op, a_scalar, b_scalar](detail::Node& node) {
    auto& ia = *node.inputs[0];
    auto& ib = *node.inputs[1];
    const auto& go = node.output->grad;
    const std::size_t n = go.size();
    if (ia.requires_grad) {
      detail::ensure_grad(ia);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = op == EwOp::Mul ? go[i] * (b_scalar ? ib.data[0] : ib.data[i])
                                         : go[i];
        ia.grad[a_scalar ? 0 : i] += g;
      }
    }
    if (ib.requires_grad) {
      detail::ensure_grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        double g;
        switch (op) {
          case EwOp::Add: g = go[i]; break;
          case EwOp::Sub: g = -go[i]; break;
          case EwOp::Mul: g = go[i] * (a_scalar ? ia.data[0] : ia.data[i]); break;
        }
        ib.grad[b_scalar ? 0 : i] += g;
      }
    }
  });
  return result;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Mul); }

inline Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor sub(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.data(), b.data(), out, m, k, n);

  Tensor result = detail::make_result({m, n}, std::move(out), "matmul");
  detail::maybe_record({a, b}, result, [m, k, n](detail::Node& node) {
    auto& ia = *node.inputs[0];
    auto& ib = *node.inputs[1];
    const auto& go = node.output->grad;
    if (ia.requires_grad) {
      detail::ensure_grad(ia);
      detail::gemm_nt(go, ib.data, ia.grad, m, n, k);  // dA += GO * B^T
    }
    if (ib.requires_grad) {
      detail::ensure_grad(ib);
      detail::gemm_tn(ia.data, go, ib.grad, k, m, n);  // dB += A^T * GO
    }
  });
  return result;
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto da = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[j * r + i] = da[i * c + j];
    }
  }
  Tensor result = detail::make_result({c, r}, std::move(out), "transpose");
  detail::maybe_record({a}, result, [r, c](detail::Node& node) {
    auto& ia = *node.inputs[0];
    if (!ia.requires_grad) return;
    detail::ensure_grad(ia);
    const auto& go = node.output->grad;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        ia.grad[i * c + j] += go[j * r + i];
      }
    }
  });
  return result;
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] > 0.0 ? da[i] : 0.0;
  Tensor result = detail::make_result(a.shape(), std::move(out), "relu");
  detail::maybe_record({a}, result, [](detail::Node& node) {
    auto& ia = *node.inputs[0];
    if (!ia.requires_grad) return;
    detail::ensure_grad(ia);
    const auto& go = node.output->grad;
    for (std::size_t i = 0; i < go.size(); ++i) {
      if (ia.data[i] > 0.0) ia.grad[i] += go[i];
    }
  });
  return result;
}

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor result = detail::make_result({1, 1}, {s}, "sum_all");
  detail::maybe_record({a}, result, [](detail::Node& node) {
    auto& ia = *node.inputs[0];
    if (!ia.requires_grad) return;
    detail::ensure_grad(ia);
    const double g = node.output->grad[0];
    for (auto& v : ia.grad) v += g;
  });
  return result;
}

inline Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = static_cast<double>(a.numel());
  Tensor result = detail::make_result({1, 1}, {s / n}, "mean_all");
  detail::maybe_record({a}, result, [n](detail::Node& node) {
    auto& ia = *node.inputs[0];
    if (!ia.requires_grad) return;
    detail::ensure_grad(ia);
    const double g = node.output->grad[0];
    for (auto& v : ia.grad) v += g / n;
  });
  return result;
}

/// Adds bias[j] to every row of x. bias is out_dim x 1.
inline Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  if (bias.cols() != 1 || bias.rows() != x.cols()) {
    throw ShapeError("add_row_bias: bias " + bias.shape().str() +
                     " does not match activations " + x.shape().str());
  }
  const std::size_t n = x.rows(), p = x.cols();
  std::vector<double> out(n * p);
  auto dx = x.data();
  auto db = bias.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      out[i * p + j] = dx[i * p + j] + db[j];
    }
  }
  Tensor result = detail::make_result(x.shape(), std::move(out), "add_row_bias");
  detail::maybe_record({x, bias}, result, [n, p](detail::Node& node) {
    auto& ix = *node.inputs[0];
    auto& ib = *node.inputs[1];
    const auto& go = node.output->grad;
    if (ix.requires_grad) {
      detail::ensure_grad(ix);
      for (std::size_t i = 0; i < go.size(); ++i) ix.grad[i] += go[i];
    }
    if (ib.requires_grad) {
      detail::ensure_grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          ib.grad[j] += go[i * p + j];
        }
      }
    }
  });
  return result;
}

/// Scales column j of x by s[j]. s is in_dim x 1.
inline Tensor scale_columns(const Tensor& x, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != x.cols()) {
    throw ShapeError("scale_columns: scale " + s.shape().str() + " does not match " +
                     x.shape().str());
  }
  const std::size_t n = x.rows(), q = x.cols();
  std::vector<double> out(n * q);
  auto dx = x.data();
  auto ds = s.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      out[i * q + j] = dx[i * q + j] * ds[j];
    }
  }
  Tensor result = detail::make_result(x.shape(), std::move(out), "scale_columns");
  detail::maybe_record({x, s}, result, [n, q](detail::Node& node) {
    auto& ix = *node.inputs[0];
    auto& is = *node.inputs[1];
    const auto& go = node.output->grad;
    if (ix.requires_grad) {
      detail::ensure_grad(ix);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
          ix.grad[i * q + j] += go[i * q + j] * is.data[j];
        }
      }
    }
    if (is.requires_grad) {
      detail::ensure_grad(is);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
          is.grad[j] += go[i * q + j] * ix.data[i * q + j];
        }
      }
    }
  });
  return result;
}

/// Row-wise stable softmax.
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  std::vector<double> out(n * c);
  auto dx = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    double m = dx[i * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, dx[i * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(dx[i * c + j] - m);
      sum += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  Tensor result = detail::make_result(x.shape(), std::move(out), "softmax_rows");
  detail::maybe_record({x}, result, [n, c](detail::Node& node) {
    auto& ix = *node.inputs[0];
    if (!ix.requires_grad) return;
    detail::ensure_grad(ix);
    const auto& go = node.output->grad;
    const auto& y = node.output->data;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += go[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        ix.grad[i * c + j] += y[i * c + j] * (go[i * c + j] - dot);
      }
    }
  });
  return result;
}

/// Mean cross-entropy of logits against integer labels; log-softmax is applied
/// internally with max subtraction.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  auto dl = logits.data();
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ValueError("cross_entropy: label " + std::to_string(label) +
                       " out of range for " + std::to_string(c) + " classes");
    }
    double m = dl[i * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, dl[i * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(dl[i * c + j] - m);
      sum += probs[i * c + j];
    }
    total += m + std::log(sum) - dl[i * c + label];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= sum;
  }
  Tensor result =
      detail::make_result({1, 1}, {total / static_cast<double>(n)}, "cross_entropy");
  detail::maybe_record(
      {logits}, result,
      [n, c, probs = std::move(probs), labels](detail::Node& node) {
        auto& il = *node.inputs[0];
        if (!il.requires_grad) return;
        detail::ensure_grad(il);
        const double g = node.output->grad[0];
        const double dn = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
            il.grad[i * c + j] += g * (probs[i * c + j] - onehot) / dn;
          }
        }
      });
  return result;
}

/// Mean squared error over all elements.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  Tensor diff = sub(pred, target);
  return mean_all(mul(diff, diff));
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

/// Propagates d(loss)/d(leaf) into the grad buffer of every requires_grad leaf
/// reachable from loss. Leaves outside the graph keep a zero gradient.
inline void backward(const Tensor& loss, Tape& tape) {
  if (!loss.is_scalar()) {
    throw ShapeError("backward: loss must be 1x1, got " + loss.shape().str());
  }
  auto loss_impl = loss.impl();
  detail::ensure_grad(*loss_impl);
  loss_impl->grad[0] += 1.0;
  auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // branch that does not feed the loss
    it->backprop(*it);
  }
}

}  // namespace featadapt
