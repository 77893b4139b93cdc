#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "featadapt/adapters.hpp"
#include "featadapt/autodiff.hpp"
#include "featadapt/datasets.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/io.hpp"
#include "featadapt/models.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

enum class LossKind { CrossEntropy, Mse, None };
enum class OptimizerKind { Sgd, AdamW };
enum class StopRule { FixedEpochs, Plateau };

struct TrainConfig {
  double lr_adapter = 1e-2;
  double lr_head = 1e-2;
  double weight_decay = 0.0;
  int epochs = 50;
  int batch_size = 32;
  LossKind loss = LossKind::CrossEntropy;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  std::uint64_t seed = 0;
  bool shuffle = true;
  StopRule stop = StopRule::FixedEpochs;
  double plateau_tol = 1e-5;
  int plateau_patience = 5;

  void validate() const {
    if (lr_adapter <= 0.0 || lr_head <= 0.0) throw ValueError("TrainConfig: lr must be positive");
    if (epochs < 0) throw ValueError("TrainConfig: epochs must be non-negative");
    if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be positive");
  }
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> eval_accuracy;  // filled when an eval split is supplied
  int epochs_run = 0;
  double wall_seconds = 0.0;
  std::string snapshot_id;
};

inline Tensor loss(const Tensor& pred, const std::vector<int>& labels, LossKind kind) {
  if (kind != LossKind::CrossEntropy) {
    throw ValueError("loss: integer labels require cross-entropy");
  }
  return cross_entropy(pred, labels);
}

inline Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind) {
  if (kind != LossKind::Mse) {
    throw ValueError("loss: tensor targets require mse");
  }
  if (pred.shape() != target.shape()) {
    throw ShapeError("loss: prediction " + pred.shape().str() + " vs target " +
                     target.shape().str());
  }
  return mse_loss(pred, target);
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {
    if (lr <= 0.0) throw ValueError("Sgd: lr must be positive");
  }

  void step(std::vector<Tensor>& params) {
    for (auto& p : params) {
      auto g = p.grad_data();
      auto d = p.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr_ * g[i];
    }
  }

 private:
  double lr_;
};

class AdamW {
 public:
  explicit AdamW(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                 double weight_decay = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    if (lr <= 0.0) throw ValueError("AdamW: lr must be positive");
    if (eps <= 0.0) throw ValueError("AdamW: eps must be positive");
  }

  void step(std::vector<Tensor>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].numel(), 0.0);
        v_[i].assign(params[i].numel(), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto g = params[i].grad_data();
      auto d = params[i].data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < d.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double m_hat = m[j] / bc1;
        const double v_hat = v[j] / bc2;
        d[j] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * d[j]);
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx) {
  const std::size_t d = src.cols();
  std::vector<double> out(idx.size() * d);
  auto s = src.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = s[idx[i] * d + j];
  }
  return Tensor(idx.size(), d, std::move(out));
}

inline double plain_accuracy(const Model& model, const Tensor& features,
                             const std::vector<int>& labels) {
  Tensor logits = forward(model, features);
  const std::size_t n = logits.rows(), c = logits.cols();
  auto d = logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (d[i * c + j] > d[i * c + best]) best = j;  // ties keep the lowest index
    }
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

class OptimizerHandle {
 public:
  OptimizerHandle(OptimizerKind kind, double lr, double weight_decay)
      : kind_(kind), sgd_(lr), adamw_(lr, 0.9, 0.999, 1e-8, weight_decay) {}

  void step(std::vector<Tensor>& params) {
    if (params.empty()) return;
    if (kind_ == OptimizerKind::Sgd) {
      sgd_.step(params);
    } else {
      adamw_.step(params);
    }
  }

 private:
  OptimizerKind kind_;
  Sgd sgd_;
  AdamW adamw_;
};

// One pass of minibatch training over `n` samples. batch_loss receives the
// model prediction for a gathered batch plus the source row indices.
template <typename BatchLoss>
TrainReport train_loop(Model& model, const Tensor& features, BatchLoss&& batch_loss,
                       const TrainConfig& cfg, const SplitDataset* eval) {
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  const std::size_t n = features.rows();

  TrainableParams params = trainable_parameters(model);
  std::vector<Tensor> backbone = params.backbone;
  std::vector<Tensor> head = params.head;
  OptimizerHandle backbone_opt(cfg.optimizer, cfg.lr_adapter, cfg.weight_decay);
  OptimizerHandle head_opt(cfg.optimizer, cfg.lr_head, cfg.weight_decay);

  Rng shuffle_rng(cfg.seed);
  long step = 0;
  int flat_epochs = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (cfg.shuffle) {
      order = shuffle_rng.permutation(n);
    } else {
      order.resize(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
    }

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      Tensor xb = gather_rows(features, idx);

      Tape tape;
      Tensor pred = forward(model, xb);
      Tensor batch_l = batch_loss(pred, idx);
      const double value = batch_l.item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("training loss is not finite", cfg.lr_adapter, step);
      }
      backward(batch_l, tape);
      backbone_opt.step(backbone);
      head_opt.step(head);
      for (auto& p : backbone) p.zero_grad();
      for (auto& p : head) p.zero_grad();

      loss_sum += value;
      ++batches;
      ++step;
    }

    report.epoch_loss.push_back(loss_sum / batches);
    if (eval != nullptr) {
      report.eval_accuracy.push_back(plain_accuracy(model, eval->features, eval->labels));
    }
    report.epochs_run = epoch + 1;

    if (cfg.stop == StopRule::Plateau && epoch > 0) {
      const double prev = report.epoch_loss[epoch - 1];
      const double cur = report.epoch_loss[epoch];
      const double improvement = (prev - cur) / std::max(std::abs(prev), 1e-12);
      flat_epochs = improvement < cfg.plateau_tol ? flat_epochs + 1 : 0;
      if (flat_epochs >= cfg.plateau_patience) break;
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace detail

/// FNV hash of every parameter tensor; identifies a parameter snapshot.
inline std::string model_fingerprint(const Model& m) {
  std::string bytes;
  visit_model_tensors(m, [&](const std::string& name, const Tensor& t) {
    bytes += name;
    auto d = t.data();
    bytes.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  });
  return fnv1a64_hex(bytes);
}

/// Attaches the adapter regime and minimizes the configured loss over the
/// regime's trainable parameters. Frozen base weights are untouched; the run
/// is deterministic for a fixed (seed, data, spec).
inline TrainReport fit(Model& model, const AdapterSpec& spec, const SplitDataset& dtrain,
                       const TrainConfig& cfg, const SplitDataset* eval = nullptr) {
  cfg.validate();
  dtrain.validate();
  Rng init_rng(spec.init_seed);
  attach_adapters(model, spec, init_rng);

  TrainReport report;
  if (cfg.epochs == 0 || cfg.loss == LossKind::None) {
    report.snapshot_id = model_fingerprint(model);
    return report;
  }
  if (cfg.loss != LossKind::CrossEntropy) {
    throw ValueError("fit: classification training uses cross-entropy");
  }

  const std::vector<int>& all_labels = dtrain.labels;
  report = detail::train_loop(
      model, dtrain.features,
      [&](const Tensor& pred, const std::vector<std::size_t>& idx) {
        std::vector<int> batch_labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = all_labels[idx[i]];
        return cross_entropy(pred, batch_labels);
      },
      cfg, eval);
  report.snapshot_id = model_fingerprint(model);
  return report;
}

/// Regression variant: minimizes mean squared error of f(x) against targets.
inline TrainReport fit_regression(Model& model, const AdapterSpec& spec, const Tensor& x,
                                  const Tensor& y, const TrainConfig& cfg) {
  cfg.validate();
  if (x.rows() != y.rows()) {
    throw ShapeError("fit_regression: " + x.shape().str() + " inputs vs " +
                     y.shape().str() + " targets");
  }
  Rng init_rng(spec.init_seed);
  attach_adapters(model, spec, init_rng);

  TrainReport report;
  if (cfg.epochs == 0 || cfg.loss == LossKind::None) {
    report.snapshot_id = model_fingerprint(model);
    return report;
  }
  if (cfg.loss != LossKind::Mse) {
    throw ValueError("fit_regression: regression training uses mse");
  }

  report = detail::train_loop(
      model, x,
      [&](const Tensor& pred, const std::vector<std::size_t>& idx) {
        return mse_loss(pred, detail::gather_rows(y, idx));
      },
      cfg, nullptr);
  report.snapshot_id = model_fingerprint(model);
  return report;
}

/// Learns the input-shift map of a frozen model on a classification split.
/// The map starts as the zero map, so before any step the adapted model is
/// exactly the frozen baseline.
inline TrainReport estimate_input_shift(Model& model, const SplitDataset& dtrain,
                                        const TrainConfig& cfg,
                                        ShiftMapKind map = ShiftMapKind::Linear,
                                        int hidden = 16) {
  AdapterSpec spec;
  spec.kind = AdapterKind::InputShift;
  spec.shift_map = map;
  spec.shift_hidden = hidden;
  spec.train_head = false;
  spec.init_seed = cfg.seed;
  return fit(model, spec, dtrain, cfg);
}

}  // namespace featadapt
