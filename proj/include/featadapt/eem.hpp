#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "featadapt/adapters.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/models.hpp"
#include "featadapt/numeric.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"
#include "featadapt/trainer.hpp"

namespace featadapt {

// ---------------------------------------------------------------------------
// 1-D comparison: weight-space y = (c + d1) x  vs  feature-space y = c (1 + d2) x
// ---------------------------------------------------------------------------

enum class OneDMode { WeightSpace, FeatureSpace };

struct OneDExperiment {
  double pretrained_slope = 5.0;
  std::vector<std::pair<double, double>> data;  // (x, y) pairs
  double lr = 0.03;
  int steps = 400;
  OneDMode mode = OneDMode::WeightSpace;
  double stop_tol = 1e-12;  // |loss change| convergence threshold; 0 disables
  double divergence_limit = 1e6;

  void validate() const {
    if (data.empty()) throw ValueError("OneDExperiment: data must be nonempty");
    if (lr <= 0.0) throw ValueError("OneDExperiment: lr must be positive");
    bool any_nonzero = false;
    for (const auto& [x, _] : data) any_nonzero = any_nonzero || x != 0.0;
    if (!any_nonzero) throw ValueError("OneDExperiment: x values are all zero");
  }
};

/// The four-point downstream set used by the reference 1-D experiment.
inline std::vector<std::pair<double, double>> one_d_default_data() {
  return {{0.2, 0.4}, {0.6, 1.1}, {1.1, 2.2}, {1.6, 2.8}};
}

struct OneDTraceRow {
  int step;
  double param;  // delta at this step, before the update
  double loss;
};

struct OneDTrace {
  std::vector<OneDTraceRow> rows;  // rows[k] = state before update k
  double final_param = 0.0;
  bool converged = false;
  int steps_run = 0;

  /// Fitted slope of the resulting line y = slope_hat * x.
  double fitted_slope(const OneDExperiment& exp) const {
    return exp.mode == OneDMode::WeightSpace ? exp.pretrained_slope + final_param
                                             : exp.pretrained_slope * (1.0 + final_param);
  }
};

namespace detail {

// Mean-squared-error value and gradient of one 1-D configuration. The
// arithmetic mirrors the tensor training path operation for operation, so a
// trainer-driven run with identical settings reproduces these numbers.
struct OneDStep {
  double loss;
  double grad;
};

inline OneDStep one_d_step(const OneDExperiment& exp, double delta) {
  const std::size_t n = exp.data.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double slope = exp.pretrained_slope;

  std::vector<double> resid(n);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = exp.data[i];
    double pred;
    if (exp.mode == OneDMode::WeightSpace) {
      pred = x * (slope + delta);
    } else {
      const double scale = 1.0 + delta;
      pred = (x * scale) * slope;
    }
    resid[i] = pred - y;
    loss_sum += resid[i] * resid[i];
  }

  double grad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 1.0 * inv_n * resid[i];
    const double dd = t + t;  // d loss / d pred
    const double x = exp.data[i].first;
    if (exp.mode == OneDMode::WeightSpace) {
      grad += x * dd;
    } else {
      grad += (dd * slope) * x;
    }
  }
  return {loss_sum / static_cast<double>(n), grad};
}

}  // namespace detail

/// Plain gradient descent on the 1-D problem, tracing (step, param, loss).
/// Row k holds the state before update k; the final row is appended after the
/// last update, so a run of K updates yields K+1 rows.
inline OneDTrace run_1d(const OneDExperiment& exp) {
  exp.validate();
  OneDTrace trace;
  double delta = 0.0;

  for (int k = 0; k <= exp.steps; ++k) {
    const auto [loss, grad] = detail::one_d_step(exp, delta);
    if (loss > exp.divergence_limit) {
      throw TrainingDiverged("1-d descent diverged", exp.lr, k);
    }
    trace.rows.push_back({k, delta, loss});
    if (exp.stop_tol > 0.0 && k > 0 &&
        std::abs(loss - trace.rows[k - 1].loss) < exp.stop_tol) {
      trace.converged = true;
      break;
    }
    if (k == exp.steps) break;
    delta -= exp.lr * grad;
  }

  trace.steps_run = static_cast<int>(trace.rows.size()) - 1;
  trace.final_param = trace.rows.back().param;
  return trace;
}

/// Ratio of the feature-space to the weight-space loss gradient at delta = 0.
/// By the chain rule this equals the pre-trained slope.
inline double gradient_ratio_at_init(const OneDExperiment& exp) {
  OneDExperiment weight = exp;
  weight.mode = OneDMode::WeightSpace;
  weight.validate();
  OneDExperiment feature = exp;
  feature.mode = OneDMode::FeatureSpace;

  const double g_weight = detail::one_d_step(weight, 0.0).grad;
  const double g_feature = detail::one_d_step(feature, 0.0).grad;
  if (g_weight == 0.0) {
    throw ValueError("gradient_ratio_at_init: weight-space gradient is zero");
  }
  return g_feature / g_weight;
}

/// Closed-form least-squares slope sum(xy)/sum(x^2) for y = slope * x.
inline double closed_form_slope(const std::vector<std::pair<double, double>>& data) {
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : data) {
    sxy += x * y;
    sxx += x * x;
  }
  if (sxx == 0.0) throw ValueError("closed_form_slope: x values are all zero");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Constructed lurking-variable systems and shift recovery
// ---------------------------------------------------------------------------

// Generative map y = g(X, u) + eps realized as f(X + u * shift_direction),
// with g(X, 0) = f(X). The exact equivalent shift for lurking value u is the
// constant u * shift_direction.
struct LurkingSystem {
  Model f;                 // frozen response map
  Tensor shift_direction;  // d x 1
  double u_d = 0.0;        // the domain's lurking value
  double noise_std = 0.0;

  std::size_t dim() const { return f.input_dim(); }

  Tensor exact_delta() const {
    Tensor d(dim(), 1);
    auto out = d.data();
    auto v = shift_direction.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = u_d * v[i];
    return d;
  }

  /// Responses f(X + u * v), optionally with Gaussian noise drawn from rng.
  Tensor respond(const Tensor& x, double u, Rng* noise_rng = nullptr) const {
    const std::size_t n = x.rows(), d = x.cols();
    if (d != dim()) {
      throw ShapeError("LurkingSystem::respond: input " + x.shape().str() +
                       " does not match dim " + std::to_string(dim()));
    }
    std::vector<double> shifted(x.data().begin(), x.data().end());
    auto v = shift_direction.data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) shifted[i * d + j] += u * v[j];
    }
    Tensor y = forward(f, Tensor(n, d, std::move(shifted)));
    if (noise_rng != nullptr && noise_std > 0.0) {
      Tensor noisy = y.clone();
      auto out = noisy.data();
      for (auto& val : out) val += noise_std * noise_rng->normal();
      return noisy;
    }
    return y;
  }
};

/// Linear system with a well-conditioned full-column-rank map: the weight is
/// an orthonormalized Gaussian with singular values spread over [0.8, 1.2].
inline LurkingSystem make_linear_lurking_system(std::size_t dim_in, std::size_t dim_out,
                                                double u_d, double noise_std,
                                                std::uint64_t seed) {
  if (dim_out < dim_in) {
    throw ValueError("make_linear_lurking_system: need dim_out >= dim_in for full column rank");
  }
  Rng rng(seed);
  const Svd svd = jacobi_svd(Tensor::randn(dim_out, dim_in, rng));
  Tensor w(dim_out, dim_in);
  auto wd = w.data();
  auto u = svd.u.data();
  for (std::size_t j = 0; j < dim_in; ++j) {
    const double s =
        dim_in > 1 ? 0.8 + 0.4 * static_cast<double>(j) / static_cast<double>(dim_in - 1)
                   : 1.0;
    for (std::size_t i = 0; i < dim_out; ++i) {
      wd[i * dim_in + j] = s * u[i * dim_in + j];
    }
  }

  LurkingSystem sys;
  sys.f.kind = ModelKind::Mlp;
  sys.f.layers.push_back(LayerWeights{w, std::nullopt, true, std::nullopt});
  sys.f.activations.push_back(Activation::None);
  sys.shift_direction = Tensor::randn(dim_in, 1, rng);
  sys.u_d = u_d;
  sys.noise_std = noise_std;
  return sys;
}

struct RegressionSet {
  Tensor x;
  Tensor y;
};

inline RegressionSet sample_lurking_system(const LurkingSystem& sys, std::size_t n,
                                           std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = Tensor::randn(n, sys.dim(), rng);
  Rng noise_rng(seed ^ 0x9e3779b97f4a7c15ull);
  Tensor y = sys.respond(x, sys.u_d, &noise_rng);
  return {x, y};
}

struct DeltaRecovery {
  Model model;            // frozen copy of f with the fitted input shift
  TrainReport report;
  double alignment_mean = 0.0;  // mean row 2-norm of f(X + delta(X)) - g(X, u_d)
  double alignment_max = 0.0;   // max absolute deviation, held-out samples
};

/// Fits the shift map by minimizing |f(X + delta(X)) - y|^2 on the first 80%
/// of the samples, then scores alignment against the noise-free g(X, u_d) on
/// the held-out 20%.
inline DeltaRecovery recover_delta(const LurkingSystem& sys, const RegressionSet& samples,
                                   const TrainConfig& cfg,
                                   ShiftMapKind map = ShiftMapKind::Affine) {
  const std::size_t n = samples.x.rows();
  if (n < 5) throw ValueError("recover_delta: need at least 5 samples");
  const std::size_t n_train = n - n / 5;

  auto take_rows = [&](const Tensor& src, std::size_t begin, std::size_t end) {
    const std::size_t d = src.cols();
    auto s = src.data();
    std::vector<double> out(s.begin() + begin * d, s.begin() + end * d);
    return Tensor(end - begin, d, std::move(out));
  };

  DeltaRecovery rec;
  rec.model = clone_model(sys.f);

  AdapterSpec spec;
  spec.kind = AdapterKind::InputShift;
  spec.shift_map = map;
  spec.train_head = false;
  spec.init_seed = cfg.seed;

  TrainConfig train_cfg = cfg;
  train_cfg.loss = LossKind::Mse;
  rec.report = fit_regression(rec.model, spec, take_rows(samples.x, 0, n_train),
                              take_rows(samples.y, 0, n_train), train_cfg);

  Tensor x_held = take_rows(samples.x, n_train, n);
  Tensor fitted = forward(rec.model, x_held);
  Tensor target = sys.respond(x_held, sys.u_d, nullptr);

  const std::size_t rows = fitted.rows(), k = fitted.cols();
  auto a = fitted.data();
  auto b = target.data();
  double norm_sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double row_sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = a[i * k + j] - b[i * k + j];
      row_sq += diff * diff;
      rec.alignment_max = std::max(rec.alignment_max, std::abs(diff));
    }
    norm_sum += std::sqrt(row_sq);
  }
  rec.alignment_mean = norm_sum / static_cast<double>(rows);
  return rec;
}

}  // namespace featadapt
