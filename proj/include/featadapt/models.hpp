#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "featadapt/adapters.hpp"
#include "featadapt/autodiff.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

enum class Activation { None, Relu };

enum class ModelKind { Linear1d, Mlp, AttentionBlock };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear1d: return "linear1d";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::AttentionBlock: return "attention-block";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& name) {
  if (name == "linear1d") return ModelKind::Linear1d;
  if (name == "mlp") return ModelKind::Mlp;
  if (name == "attention-block") return ModelKind::AttentionBlock;
  throw ValueError("unknown model kind: " + name);
}

// A small stack of weight layers plus an optional task head. Activations run
// per layer; the head (when present) is a plain linear classifier on top.
struct Model {
  ModelKind kind = ModelKind::Mlp;
  std::vector<LayerWeights> layers;
  std::vector<Activation> activations;      // one per layer
  std::optional<LayerWeights> head;
  std::optional<InputShiftState> input_shift;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const {
    return head ? head->out_dim() : layers.back().out_dim();
  }
};

inline Model make_linear1d(double slope) {
  Model m;
  m.kind = ModelKind::Linear1d;
  m.layers.push_back(LayerWeights{Tensor{{slope}}, std::nullopt, true, std::nullopt});
  m.activations.push_back(Activation::None);
  return m;
}

/// MLP classifier: `hidden` ReLU layers followed by a linear head. All weights
/// start frozen; training unfreezes per the attached adapter spec.
inline Model make_mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                      std::size_t classes, Rng& rng) {
  if (hidden.empty()) throw ValueError("make_mlp: need at least one hidden layer");
  Model m;
  m.kind = ModelKind::Mlp;
  std::size_t d = in_dim;
  for (std::size_t width : hidden) {
    const double std = 1.0 / std::sqrt(static_cast<double>(d));
    m.layers.push_back(LayerWeights{Tensor::randn(width, d, rng, std),
                                    Tensor::zeros(width, 1), true, std::nullopt});
    m.activations.push_back(Activation::Relu);
    d = width;
  }
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  m.head = LayerWeights{Tensor::randn(classes, d, rng, std), Tensor::zeros(classes, 1),
                        true, std::nullopt};
  return m;
}

/// Single-head self-attention block with q/k/v/o projections of shape d x d.
inline Model make_attention_block(std::size_t dim, Rng& rng) {
  Model m;
  m.kind = ModelKind::AttentionBlock;
  const double std = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < 4; ++i) {
    m.layers.push_back(
        LayerWeights{Tensor::randn(dim, dim, rng, std), std::nullopt, true, std::nullopt});
    m.activations.push_back(Activation::None);
  }
  return m;
}

namespace detail {
// q/k/v/o layer order inside an attention block.
constexpr std::size_t kQueryLayer = 0;
constexpr std::size_t kKeyLayer = 1;
constexpr std::size_t kValueLayer = 2;
constexpr std::size_t kOutputLayer = 3;
}  // namespace detail

/// softmax(Q K^T / sqrt(d)) V followed by the output projection. Query and
/// value projections route through their adapters when attached.
inline Tensor attention_block_forward(const Model& m, const Tensor& x) {
  if (m.kind != ModelKind::AttentionBlock || m.layers.size() != 4) {
    throw ValueError("attention_block_forward: model is not an attention block");
  }
  const std::size_t d = m.layers.front().in_dim();
  for (const auto& layer : m.layers) {
    if (layer.in_dim() != d || layer.out_dim() != d) {
      throw ShapeError("attention_block_forward: projections must be square d x d, got " +
                       layer.w0.shape().str());
    }
  }
  if (x.cols() != d) {
    throw ShapeError("attention_block_forward: tokens " + x.shape().str() +
                     " do not match d=" + std::to_string(d));
  }
  Tensor q = effective_forward(m.layers[detail::kQueryLayer], x);
  Tensor k = effective_forward(m.layers[detail::kKeyLayer], x);
  Tensor v = effective_forward(m.layers[detail::kValueLayer], x);
  Tensor scores = mul(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor context = matmul(softmax_rows(scores), v);
  return effective_forward(m.layers[detail::kOutputLayer], context);
}

/// Full model forward on a batch of row vectors (batch x d -> batch x k).
inline Tensor forward(const Model& m, const Tensor& x) {
  Tensor h = m.input_shift ? m.input_shift->apply(x) : x;
  if (m.kind == ModelKind::AttentionBlock) {
    return attention_block_forward(m, h);
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    h = effective_forward(m.layers[i], h);
    if (m.activations[i] == Activation::Relu) h = relu(h);
  }
  if (m.head) h = effective_forward(*m.head, h);
  return h;
}

struct TrainableParams {
  std::vector<Tensor> backbone;  // adapter factors, or raw weights under full FT
  std::vector<Tensor> head;

  std::vector<Tensor> all() const {
    std::vector<Tensor> out = backbone;
    out.insert(out.end(), head.begin(), head.end());
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : backbone) n += t.numel();
    for (const auto& t : head) n += t.numel();
    return n;
  }
};

/// Exactly the tensors the optimizer may update under the current regime.
/// Frozen base weights never appear here.
inline TrainableParams trainable_parameters(const Model& m) {
  TrainableParams params;
  for (const auto& layer : m.layers) {
    if (!layer.frozen) {
      params.backbone.push_back(layer.w0);
      if (layer.bias) params.backbone.push_back(*layer.bias);
    }
    if (layer.adapter) {
      const AdapterState& st = *layer.adapter;
      if (st.a) params.backbone.push_back(*st.a);
      if (st.b) params.backbone.push_back(*st.b);
      if (st.lambda) params.backbone.push_back(*st.lambda);
    }
  }
  if (m.input_shift) {
    for (auto& t : m.input_shift->parameters()) params.backbone.push_back(t);
  }
  if (m.head && !m.head->frozen) {
    params.head.push_back(m.head->w0);
    if (m.head->bias) params.head.push_back(*m.head->bias);
  }
  return params;
}

inline std::vector<std::size_t> target_layer_indices(const Model& m, TargetLayers targets) {
  if (targets == TargetLayers::QueryValue) {
    if (m.kind != ModelKind::AttentionBlock) {
      throw ValueError("target_layer_indices: q/v selection requires an attention block");
    }
    return {detail::kQueryLayer, detail::kValueLayer};
  }
  std::vector<std::size_t> all(m.layers.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

/// Applies an adapter spec to a pristine (fully frozen, adapter-free) model.
inline void attach_adapters(Model& m, const AdapterSpec& spec, Rng& rng) {
  for (const auto& layer : m.layers) {
    if (layer.adapter || !layer.frozen) {
      throw ValueError("attach_adapters: model already has an adapter regime");
    }
  }
  if (m.input_shift) {
    throw ValueError("attach_adapters: model already has an input shift");
  }

  switch (spec.kind) {
    case AdapterKind::FullFT:
      for (auto& layer : m.layers) {
        layer.frozen = false;
        layer.w0.requires_grad(true);
        if (layer.bias) layer.bias->requires_grad(true);
      }
      break;
    case AdapterKind::LinearProbe:
      break;  // base stays frozen, only the head below
    case AdapterKind::LoRA:
    case AdapterKind::LoRFA:
    case AdapterKind::VeFA:
      for (std::size_t i : target_layer_indices(m, spec.targets)) {
        attach_adapter(m.layers[i], spec, rng);
      }
      break;
    case AdapterKind::InputShift: {
      InputShiftState shift =
          make_input_shift(m.input_dim(), spec.shift_map, spec.shift_hidden, rng);
      shift.w1.requires_grad(true);
      if (shift.bias) shift.bias->requires_grad(true);
      if (shift.w2) shift.w2->requires_grad(true);
      m.input_shift = std::move(shift);
      break;
    }
  }

  const bool head_trainable =
      m.head && (spec.kind == AdapterKind::FullFT ||
                 spec.kind == AdapterKind::LinearProbe || spec.train_head);
  if (head_trainable) {
    m.head->frozen = false;
    m.head->w0.requires_grad(true);
    if (m.head->bias) m.head->bias->requires_grad(true);
  }
}

/// Trainable-parameter budget of a spec on a model, by the closed formulas:
/// LoRA sum r(p+q), LoRFA sum 2rq, VeFA sum q over target layers, plus the
/// head when it is trained.
inline std::size_t param_count(const AdapterSpec& spec, const Model& m) {
  std::size_t layer_total = 0;
  std::size_t head_total = 0;
  if (m.head) {
    head_total = m.head->w0.numel() + (m.head->bias ? m.head->bias->numel() : 0);
  }

  switch (spec.kind) {
    case AdapterKind::FullFT: {
      for (const auto& layer : m.layers) {
        layer_total += layer.w0.numel() + (layer.bias ? layer.bias->numel() : 0);
      }
      return layer_total + head_total;
    }
    case AdapterKind::LinearProbe:
      return head_total;
    case AdapterKind::InputShift: {
      const std::size_t d = m.input_dim();
      switch (spec.shift_map) {
        case ShiftMapKind::Linear: layer_total = d * d; break;
        case ShiftMapKind::Affine: layer_total = d * d + d; break;
        case ShiftMapKind::Mlp:
          layer_total = 2 * d * static_cast<std::size_t>(spec.shift_hidden);
          break;
      }
      return layer_total + (spec.train_head ? head_total : 0);
    }
    default: {
      for (std::size_t i : target_layer_indices(m, spec.targets)) {
        layer_total += adapter_param_count(spec.kind, spec.rank, m.layers[i].out_dim(),
                                           m.layers[i].in_dim());
      }
      return layer_total + (spec.train_head ? head_total : 0);
    }
  }
}

/// Budget by formula alone, for shape lists without building a model.
inline std::size_t param_count_for_shapes(
    AdapterKind kind, int rank,
    const std::vector<std::pair<std::size_t, std::size_t>>& target_shapes) {
  std::size_t total = 0;
  for (const auto& [p, q] : target_shapes) {
    total += adapter_param_count(kind, rank, p, q);
  }
  return total;
}

/// Deep copy: no storage shared with the source.
inline Model clone_model(const Model& m) {
  auto clone_layer = [](const LayerWeights& layer) {
    LayerWeights out{layer.w0.clone(),
                     layer.bias ? std::optional<Tensor>(layer.bias->clone()) : std::nullopt,
                     layer.frozen, std::nullopt};
    if (layer.adapter) {
      AdapterState st;
      st.kind = layer.adapter->kind;
      if (layer.adapter->a) st.a = layer.adapter->a->clone();
      if (layer.adapter->b) st.b = layer.adapter->b->clone();
      if (layer.adapter->lambda) st.lambda = layer.adapter->lambda->clone();
      out.adapter = std::move(st);
    }
    return out;
  };

  Model out;
  out.kind = m.kind;
  out.activations = m.activations;
  for (const auto& layer : m.layers) out.layers.push_back(clone_layer(layer));
  if (m.head) out.head = clone_layer(*m.head);
  if (m.input_shift) {
    InputShiftState shift;
    shift.map = m.input_shift->map;
    shift.w1 = m.input_shift->w1.clone();
    if (m.input_shift->bias) shift.bias = m.input_shift->bias->clone();
    if (m.input_shift->w2) shift.w2 = m.input_shift->w2->clone();
    out.input_shift = std::move(shift);
  }
  return out;
}

/// Visits every parameter tensor with a stable dotted name, in a fixed order.
template <typename Fn>
inline void visit_model_tensors(const Model& m, Fn&& fn) {
  auto visit_layer = [&](const std::string& prefix, const LayerWeights& layer) {
    fn(prefix + ".w0", layer.w0);
    if (layer.bias) fn(prefix + ".bias", *layer.bias);
    if (layer.adapter) {
      if (layer.adapter->a) fn(prefix + ".adapter.a", *layer.adapter->a);
      if (layer.adapter->b) fn(prefix + ".adapter.b", *layer.adapter->b);
      if (layer.adapter->lambda) fn(prefix + ".adapter.lambda", *layer.adapter->lambda);
    }
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    visit_layer("layer" + std::to_string(i), m.layers[i]);
  }
  if (m.head) visit_layer("head", *m.head);
  if (m.input_shift) {
    fn("input_shift.w1", m.input_shift->w1);
    if (m.input_shift->bias) fn("input_shift.bias", *m.input_shift->bias);
    if (m.input_shift->w2) fn("input_shift.w2", *m.input_shift->w2);
  }
}

/// Refreezes everything and drops adapters; used after pre-training to turn a
/// trained model into a frozen base.
inline void freeze_all(Model& m) {
  for (auto& layer : m.layers) {
    layer.frozen = true;
    layer.w0.requires_grad(false);
    if (layer.bias) layer.bias->requires_grad(false);
    layer.adapter.reset();
  }
  if (m.head) {
    m.head->frozen = true;
    m.head->w0.requires_grad(false);
    if (m.head->bias) m.head->bias->requires_grad(false);
  }
  m.input_shift.reset();
}

}  // namespace featadapt
