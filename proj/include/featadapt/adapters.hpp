#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "featadapt/autodiff.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/numeric.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

enum class AdapterKind { FullFT, LinearProbe, LoRA, LoRFA, VeFA, InputShift };

enum class TargetLayers { AllLinear, QueryValue };

enum class ShiftMapKind { Linear, Affine, Mlp };

inline std::string to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::FullFT: return "full-ft";
    case AdapterKind::LinearProbe: return "linear-probe";
    case AdapterKind::LoRA: return "lora";
    case AdapterKind::LoRFA: return "lorfa";
    case AdapterKind::VeFA: return "vefa";
    case AdapterKind::InputShift: return "input-shift";
  }
  return "?";
}

inline AdapterKind adapter_kind_from_string(const std::string& name) {
  if (name == "full-ft" || name == "fullft") return AdapterKind::FullFT;
  if (name == "linear-probe") return AdapterKind::LinearProbe;
  if (name == "lora") return AdapterKind::LoRA;
  if (name == "lorfa") return AdapterKind::LoRFA;
  if (name == "vefa") return AdapterKind::VeFA;
  if (name == "input-shift") return AdapterKind::InputShift;
  throw ValueError("unknown adapter kind: " + name);
}

struct AdapterSpec {
  AdapterKind kind = AdapterKind::FullFT;
  int rank = 0;                                   // LoRA / LoRFA
  TargetLayers targets = TargetLayers::AllLinear;
  std::uint64_t init_seed = 0;                    // seeds the Gaussian factor
  bool train_head = true;
  ShiftMapKind shift_map = ShiftMapKind::Linear;  // InputShift only
  int shift_hidden = 16;                          // width of the Mlp variant

  bool rank_bearing() const {
    return kind == AdapterKind::LoRA || kind == AdapterKind::LoRFA;
  }
};

// Per-layer trainable state. Every kind starts as an exact identity update:
// b = 0 for LoRA/LoRFA, lambda = 0 for VeFA.
struct AdapterState {
  AdapterKind kind = AdapterKind::LoRA;
  std::optional<Tensor> a;       // LoRA: r x q, LoRFA: r x q
  std::optional<Tensor> b;       // LoRA: p x r, LoRFA: q x r
  std::optional<Tensor> lambda;  // VeFA: q x 1
};

// Trainable input transformation x -> x + delta(x), applied at model input
// only. The map is the zero map at initialization for every variant.
struct InputShiftState {
  ShiftMapKind map = ShiftMapKind::Linear;
  Tensor w1;                      // Linear/Affine: d x d; Mlp: hidden x d
  std::optional<Tensor> bias;     // Affine: d x 1
  std::optional<Tensor> w2;       // Mlp: d x hidden, zero so delta starts at 0

  Tensor delta(const Tensor& x) const {
    switch (map) {
      case ShiftMapKind::Linear:
        return matmul(x, transpose(w1));
      case ShiftMapKind::Affine:
        return add_row_bias(matmul(x, transpose(w1)), *bias);
      case ShiftMapKind::Mlp:
        return matmul(relu(matmul(x, transpose(w1))), transpose(*w2));
    }
    throw ValueError("InputShiftState: unknown map kind");
  }

  Tensor apply(const Tensor& x) const { return add(x, delta(x)); }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out{w1};
    if (bias) out.push_back(*bias);
    if (w2) out.push_back(*w2);
    return out;
  }
};

// One weight matrix of a model: frozen pre-trained w0 (out_dim x in_dim,
// applied to row-vector activations as x * w0^T), optional bias, and an
// optional attached adapter.
struct LayerWeights {
  Tensor w0;
  std::optional<Tensor> bias;  // out_dim x 1
  bool frozen = true;
  std::optional<AdapterState> adapter;

  std::size_t out_dim() const { return w0.rows(); }
  std::size_t in_dim() const { return w0.cols(); }
};

inline InputShiftState make_input_shift(std::size_t dim, ShiftMapKind map,
                                        int hidden, Rng& rng) {
  switch (map) {
    case ShiftMapKind::Linear:
      return InputShiftState{map, Tensor::zeros(dim, dim), std::nullopt, std::nullopt};
    case ShiftMapKind::Affine:
      return InputShiftState{map, Tensor::zeros(dim, dim), Tensor::zeros(dim, 1),
                             std::nullopt};
    case ShiftMapKind::Mlp: {
      if (hidden < 1) throw ValueError("make_input_shift: hidden width must be >= 1");
      const std::size_t h = static_cast<std::size_t>(hidden);
      Tensor w1 = Tensor::randn(h, dim, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
      return InputShiftState{map, w1, std::nullopt, Tensor::zeros(dim, h)};
    }
  }
  throw ValueError("make_input_shift: unknown map kind");
}

/// Attaches per-layer state for LoRA / LoRFA / VeFA. The A factor is seeded
/// Gaussian, the closing factor starts at zero so the layer's function is
/// initially unchanged.
inline void attach_adapter(LayerWeights& layer, const AdapterSpec& spec, Rng& rng) {
  if (layer.adapter) throw ValueError("attach_adapter: layer already has an adapter");
  const std::size_t p = layer.out_dim(), q = layer.in_dim();

  AdapterState state;
  state.kind = spec.kind;
  switch (spec.kind) {
    case AdapterKind::LoRA:
    case AdapterKind::LoRFA: {
      const std::size_t min_pq = std::min(p, q);
      if (spec.rank < 1 || static_cast<std::size_t>(spec.rank) > min_pq / 2) {
        throw ValueError("attach_adapter: rank " + std::to_string(spec.rank) +
                         " outside [1, min(p,q)/2] for layer " + layer.w0.shape().str());
      }
      const std::size_t r = static_cast<std::size_t>(spec.rank);
      state.a = Tensor::randn(r, q, rng, 0.02);
      state.a->requires_grad(true);
      state.b = Tensor::zeros(spec.kind == AdapterKind::LoRA ? p : q, r);
      state.b->requires_grad(true);
      break;
    }
    case AdapterKind::VeFA: {
      state.lambda = Tensor::zeros(q, 1);
      state.lambda->requires_grad(true);
      break;
    }
    default:
      throw ValueError("attach_adapter: " + to_string(spec.kind) +
                       " is not a per-layer adapter");
  }
  layer.adapter = std::move(state);
}

/// The layer's effective transform on a batch of row-vector inputs (n x q).
inline Tensor effective_forward(const LayerWeights& layer, const Tensor& x) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeError("effective_forward: input " + x.shape().str() +
                     " does not match layer " + layer.w0.shape().str());
  }
  Tensor out = [&] {
    if (!layer.adapter) return matmul(x, transpose(layer.w0));
    const AdapterState& st = *layer.adapter;
    switch (st.kind) {
      case AdapterKind::LoRA: {
        // (w0 + b a) x  ==  x w0^T + (x a^T) b^T
        Tensor base = matmul(x, transpose(layer.w0));
        Tensor update = matmul(matmul(x, transpose(*st.a)), transpose(*st.b));
        return add(base, update);
      }
      case AdapterKind::LoRFA: {
        // w0 (x + b a x)
        Tensor shifted = add(x, matmul(matmul(x, transpose(*st.a)), transpose(*st.b)));
        return matmul(shifted, transpose(layer.w0));
      }
      case AdapterKind::VeFA: {
        // w0 (I + diag(lambda)) x
        Tensor scaled = scale_columns(x, add(*st.lambda, 1.0));
        return matmul(scaled, transpose(layer.w0));
      }
      default:
        throw ValueError("effective_forward: unsupported adapter kind " +
                         to_string(st.kind));
    }
  }();
  if (layer.bias) out = add_row_bias(out, *layer.bias);
  return out;
}

/// Closed-form effective weight w' with w' x == effective_forward(layer, x).
/// Computed with plain arithmetic, independent of the autodiff forward path.
inline Tensor merge(const LayerWeights& layer) {
  if (!layer.adapter) {
    throw ValueError("merge: no adapter attached");
  }
  const AdapterState& st = *layer.adapter;
  const std::size_t p = layer.out_dim(), q = layer.in_dim();
  auto w0 = layer.w0.data();

  switch (st.kind) {
    case AdapterKind::LoRA: {
      const std::size_t r = st.a->rows();
      auto a = st.a->data();
      auto b = st.b->data();
      std::vector<double> merged(w0.begin(), w0.end());
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < r; ++k) {
          for (std::size_t j = 0; j < q; ++j) {
            merged[i * q + j] += b[i * r + k] * a[k * q + j];
          }
        }
      }
      return Tensor(p, q, std::move(merged));
    }
    case AdapterKind::LoRFA: {
      const std::size_t r = st.a->rows();
      auto a = st.a->data();
      auto b = st.b->data();
      // inner = I + b a  (q x q)
      std::vector<double> inner(q * q, 0.0);
      for (std::size_t i = 0; i < q; ++i) inner[i * q + i] = 1.0;
      for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t k = 0; k < r; ++k) {
          for (std::size_t j = 0; j < q; ++j) {
            inner[i * q + j] += b[i * r + k] * a[k * q + j];
          }
        }
      }
      std::vector<double> merged(p * q, 0.0);
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
          for (std::size_t j = 0; j < q; ++j) {
            merged[i * q + j] += w0[i * q + k] * inner[k * q + j];
          }
        }
      }
      return Tensor(p, q, std::move(merged));
    }
    case AdapterKind::VeFA: {
      auto lambda = st.lambda->data();
      std::vector<double> merged(p * q);
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
          merged[i * q + j] = w0[i * q + j] * (1.0 + lambda[j]);
        }
      }
      return Tensor(p, q, std::move(merged));
    }
    default:
      throw ValueError("merge: adapter kind " + to_string(st.kind) +
                       " has no weight-space merge");
  }
}

/// Frobenius norm of the part of (merge - w0) outside col(w0). Zero up to
/// roundoff for LoRFA and VeFA, generically positive for trained LoRA.
inline double column_space_residual(const LayerWeights& layer, double rel_cutoff = 1e-10) {
  Tensor merged = merge(layer);
  auto w0 = layer.w0.data();
  auto wm = merged.data();
  std::vector<double> delta(wm.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = wm[i] - w0[i];
  Tensor update(layer.out_dim(), layer.in_dim(), std::move(delta));
  return residual_outside_column_space(layer.w0, update, rel_cutoff);
}

/// Trainable parameters the adapter kind adds to one p x q layer.
inline std::size_t adapter_param_count(AdapterKind kind, int rank, std::size_t p,
                                       std::size_t q) {
  switch (kind) {
    case AdapterKind::LoRA:
      return static_cast<std::size_t>(rank) * (p + q);
    case AdapterKind::LoRFA:
      return 2 * static_cast<std::size_t>(rank) * q;
    case AdapterKind::VeFA:
      return q;
    default:
      return 0;
  }
}

}  // namespace featadapt
