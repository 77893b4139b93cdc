#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "featadapt/errors.hpp"
#include "featadapt/rng.hpp"

namespace featadapt {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t numel() const { return rows * cols; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data once gradient tracking starts
  bool requires_grad = false;
  bool leaf = true;  // false for tape-recorded op outputs
};

inline void ensure_finite(std::span<const double> values, const char* context) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ValueError(std::string(context) + ": non-finite value encountered");
    }
  }
}

inline void require_positive_dims(std::size_t rows, std::size_t cols, const char* context) {
  if (rows == 0 || cols == 0) {
    throw ValueError(std::string(context) + ": dimensions must be positive, got " +
                     Shape{rows, cols}.str());
  }
}

}  // namespace detail

// Dense row-major matrix of doubles. Copies share storage (handle semantics)
// so that optimizer updates through one handle are visible through all of
// them; use clone() for an independent copy. 1-D data is modeled as n x 1 or
// 1 x n, batches as the row dimension.
class Tensor {
 public:
  Tensor(std::size_t rows, std::size_t cols) {
    detail::require_positive_dims(rows, cols, "Tensor");
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = {rows, cols};
    impl_->data.assign(rows * cols, 0.0);
  }

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values) {
    detail::require_positive_dims(rows, cols, "Tensor");
    if (values.size() != rows * cols) {
      throw ShapeError("Tensor: data length " + std::to_string(values.size()) +
                       " does not match shape " + Shape{rows, cols}.str());
    }
    detail::ensure_finite(values, "Tensor");
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = {rows, cols};
    impl_->data = std::move(values);
  }

  Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    detail::require_positive_dims(r, c, "Tensor");
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("Tensor: ragged initializer rows");
      values.insert(values.end(), row.begin(), row.end());
    }
    detail::ensure_finite(values, "Tensor");
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = {r, c};
    impl_->data = std::move(values);
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
    return t;
  }

  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

  static Tensor randn(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    detail::require_positive_dims(rows, cols, "Tensor::randn");
    std::vector<double> values(rows * cols);
    for (auto& v : values) v = stddev * rng.normal();
    return Tensor(rows, cols, std::move(values));
  }

  std::size_t rows() const { return impl_->shape.rows; }
  std::size_t cols() const { return impl_->shape.cols; }
  std::size_t numel() const { return impl_->shape.numel(); }
  const Shape& shape() const { return impl_->shape; }
  bool is_scalar() const { return rows() == 1 && cols() == 1; }

  double operator()(std::size_t r, std::size_t c) const {
    return impl_->data[r * cols() + c];
  }

  double at(std::size_t r, std::size_t c) const {
    if (r >= rows() || c >= cols()) {
      throw ShapeError("Tensor::at: index out of range for shape " + shape().str());
    }
    return (*this)(r, c);
  }

  double item() const {
    if (!is_scalar()) {
      throw ShapeError("Tensor::item: expected 1x1, got " + shape().str());
    }
    return impl_->data[0];
  }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }

  void set(std::size_t r, std::size_t c, double v) {
    if (!std::isfinite(v)) throw ValueError("Tensor::set: non-finite value");
    if (r >= rows() || c >= cols()) {
      throw ShapeError("Tensor::set: index out of range for shape " + shape().str());
    }
    impl_->data[r * cols() + c] = v;
  }

  bool requires_grad() const { return impl_->requires_grad; }

  /// Marks a leaf tensor as trainable; its grad buffer starts at zero.
  Tensor& requires_grad(bool value) {
    if (value && !impl_->leaf) {
      throw ValueError("requires_grad can only be toggled on leaf tensors");
    }
    impl_->requires_grad = value;
    if (value) {
      impl_->grad.assign(impl_->data.size(), 0.0);
    } else {
      impl_->grad.clear();
    }
    return *this;
  }

  bool is_leaf() const { return impl_->leaf; }

  /// Accumulated gradient as a tensor (zeros until a backward pass writes it).
  Tensor grad() const {
    if (!impl_->requires_grad) {
      throw ValueError("Tensor::grad: tensor does not require grad");
    }
    Tensor g(rows(), cols());
    if (!impl_->grad.empty()) g.impl_->data = impl_->grad;
    return g;
  }

  std::span<const double> grad_data() const {
    if (!impl_->requires_grad) {
      throw ValueError("Tensor::grad_data: tensor does not require grad");
    }
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }

  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  /// Independent deep copy; never shares storage, never requires grad.
  Tensor clone() const {
    Tensor t(rows(), cols());
    t.impl_->data = impl_->data;
    return t;
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::string str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t r = 0; r < rows(); ++r) {
      os << (r == 0 ? "[" : " [");
      for (std::size_t c = 0; c < cols(); ++c) {
        os << (*this)(r, c) << (c + 1 < cols() ? ", " : "");
      }
      os << "]" << (r + 1 < rows() ? "\n" : "");
    }
    os << "]";
    return os.str();
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  /// Wraps raw op output without re-validating (internal use by ops).
  static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  Tensor() = default;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Largest absolute elementwise difference; shapes must match.
inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    m = std::max(m, std::abs(da[i] - db[i]));
  }
  return m;
}

inline bool allclose(const Tensor& a, const Tensor& b, double atol = 1e-12) {
  return max_abs_diff(a, b) <= atol;
}

}  // namespace featadapt
