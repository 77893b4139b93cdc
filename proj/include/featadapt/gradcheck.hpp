#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "featadapt/autodiff.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t elements_checked = 0;

  bool ok(double tol = 1e-4) const { return max_rel_err <= tol; }
};

/// Compares reverse-mode gradients of a scalar-valued function against central
/// finite differences, perturbing every element of every requires_grad input.
/// The numeric side evaluates the function without a tape, so it exercises the
/// forward path only.
inline GradCheckReport check_gradients(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    std::vector<Tensor>& inputs, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();

  {
    Tape tape;
    Tensor loss = fn(inputs);
    backward(loss, tape);
  }

  GradCheckReport report;
  for (auto& input : inputs) {
    if (!input.requires_grad()) continue;
    auto analytic = input.grad_data();
    auto values = input.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double f_plus = fn(inputs).item();
      values[i] = original - h;
      const double f_minus = fn(inputs).item();
      values[i] = original;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, abs_err / denom);
      ++report.elements_checked;
    }
  }
  return report;
}

}  // namespace featadapt
