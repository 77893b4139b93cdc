#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "featadapt/adapters.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/io.hpp"
#include "featadapt/models.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["rows"] = t.rows();
  j["cols"] = t.cols();
  j["data"] = std::vector<double>(t.data().begin(), t.data().end());
  return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

inline nlohmann::json adapter_to_json(const AdapterState& st) {
  nlohmann::json j;
  j["kind"] = to_string(st.kind);
  if (st.a) j["a"] = tensor_to_json(*st.a);
  if (st.b) j["b"] = tensor_to_json(*st.b);
  if (st.lambda) j["lambda"] = tensor_to_json(*st.lambda);
  return j;
}

inline AdapterState adapter_from_json(const nlohmann::json& j) {
  AdapterState st;
  st.kind = adapter_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("a")) {
    st.a = tensor_from_json(j.at("a"));
    st.a->requires_grad(true);
  }
  if (j.contains("b")) {
    st.b = tensor_from_json(j.at("b"));
    st.b->requires_grad(true);
  }
  if (j.contains("lambda")) {
    st.lambda = tensor_from_json(j.at("lambda"));
    st.lambda->requires_grad(true);
  }
  return st;
}

inline nlohmann::json layer_to_json(const LayerWeights& layer, Activation act) {
  nlohmann::json j;
  j["w0"] = tensor_to_json(layer.w0);
  j["bias"] = layer.bias ? tensor_to_json(*layer.bias) : nlohmann::json(nullptr);
  j["frozen"] = layer.frozen;
  j["activation"] = act == Activation::Relu ? "relu" : "none";
  j["adapter"] = layer.adapter ? adapter_to_json(*layer.adapter) : nlohmann::json(nullptr);
  return j;
}

inline LayerWeights layer_from_json(const nlohmann::json& j, Activation* act) {
  LayerWeights layer{tensor_from_json(j.at("w0")), std::nullopt,
                     j.at("frozen").get<bool>(), std::nullopt};
  if (!j.at("bias").is_null()) layer.bias = tensor_from_json(j.at("bias"));
  if (!layer.frozen) {
    layer.w0.requires_grad(true);
    if (layer.bias) layer.bias->requires_grad(true);
  }
  if (!j.at("adapter").is_null()) layer.adapter = adapter_from_json(j.at("adapter"));
  if (act != nullptr) {
    *act = j.at("activation").get<std::string>() == "relu" ? Activation::Relu
                                                           : Activation::None;
  }
  return layer;
}

inline nlohmann::json shift_to_json(const InputShiftState& shift) {
  nlohmann::json j;
  j["map"] = shift.map == ShiftMapKind::Linear   ? "linear"
             : shift.map == ShiftMapKind::Affine ? "affine"
                                                 : "mlp";
  j["w1"] = tensor_to_json(shift.w1);
  j["bias"] = shift.bias ? tensor_to_json(*shift.bias) : nlohmann::json(nullptr);
  j["w2"] = shift.w2 ? tensor_to_json(*shift.w2) : nlohmann::json(nullptr);
  return j;
}

inline InputShiftState shift_from_json(const nlohmann::json& j) {
  InputShiftState shift;
  const std::string map = j.at("map").get<std::string>();
  shift.map = map == "linear"   ? ShiftMapKind::Linear
              : map == "affine" ? ShiftMapKind::Affine
                                : ShiftMapKind::Mlp;
  shift.w1 = tensor_from_json(j.at("w1"));
  shift.w1.requires_grad(true);
  if (!j.at("bias").is_null()) {
    shift.bias = tensor_from_json(j.at("bias"));
    shift.bias->requires_grad(true);
  }
  if (!j.at("w2").is_null()) {
    shift.w2 = tensor_from_json(j.at("w2"));
    shift.w2->requires_grad(true);
  }
  return shift;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

/// Serializes a model as a versioned JSON container of shapes and row-major
/// weight arrays. The byte output is deterministic for identical parameters.
inline std::string model_to_checkpoint(const Model& m) {
  nlohmann::json j;
  j["format"] = "featadapt-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(m.kind);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    layers.push_back(detail::layer_to_json(m.layers[i], m.activations[i]));
  }
  j["layers"] = std::move(layers);
  j["head"] = m.head ? detail::layer_to_json(*m.head, Activation::None)
                     : nlohmann::json(nullptr);
  j["input_shift"] =
      m.input_shift ? detail::shift_to_json(*m.input_shift) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

inline Model model_from_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint parse error: ") + e.what());
  }
  if (j.value("format", "") != "featadapt-checkpoint") {
    throw IoError("not a featadapt checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version");
  }
  Model m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& layer_json : j.at("layers")) {
    Activation act = Activation::None;
    m.layers.push_back(detail::layer_from_json(layer_json, &act));
    m.activations.push_back(act);
  }
  if (!j.at("head").is_null()) m.head = detail::layer_from_json(j.at("head"), nullptr);
  if (!j.at("input_shift").is_null()) {
    m.input_shift = detail::shift_from_json(j.at("input_shift"));
  }
  return m;
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
  write_text_file(path, model_to_checkpoint(m));
}

inline Model load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(read_text_file(path));
}

/// Content hash identifying a checkpoint file.
inline std::string checkpoint_id(const std::filesystem::path& path) {
  return fnv1a64_hex(read_text_file(path));
}

/// Adapter-only checkpoint: kind, seed, parameter arrays, and the id of the
/// base-model checkpoint the state binds to.
inline void save_adapter(const Model& m, const AdapterSpec& spec,
                         const std::string& base_checkpoint_id,
                         const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "featadapt-adapter";
  j["version"] = kCheckpointVersion;
  j["base_checkpoint"] = base_checkpoint_id;
  j["kind"] = to_string(spec.kind);
  j["rank"] = spec.rank;
  j["seed"] = spec.init_seed;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (!m.layers[i].adapter) continue;
    nlohmann::json entry = detail::adapter_to_json(*m.layers[i].adapter);
    entry["layer"] = i;
    layers.push_back(std::move(entry));
  }
  j["layers"] = std::move(layers);
  j["input_shift"] =
      m.input_shift ? detail::shift_to_json(*m.input_shift) : nlohmann::json(nullptr);
  write_text_file(path, j.dump(2) + "\n");
}

/// Restores adapter state onto a pristine base model; the base checkpoint id
/// must match the one recorded at save time.
inline void load_adapter(Model& m, const std::filesystem::path& path,
                         const std::string& base_checkpoint_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("adapter parse error: ") + e.what());
  }
  if (j.value("format", "") != "featadapt-adapter") {
    throw IoError("not a featadapt adapter checkpoint");
  }
  if (j.at("base_checkpoint").get<std::string>() != base_checkpoint_id) {
    throw IoError("adapter was saved for a different base checkpoint");
  }
  for (const auto& entry : j.at("layers")) {
    const std::size_t idx = entry.at("layer").get<std::size_t>();
    if (idx >= m.layers.size()) throw IoError("adapter layer index out of range");
    if (m.layers[idx].adapter) throw ValueError("load_adapter: layer already adapted");
    m.layers[idx].adapter = detail::adapter_from_json(entry);
  }
  if (!j.at("input_shift").is_null()) {
    m.input_shift = detail::shift_from_json(j.at("input_shift"));
  }
}

}  // namespace featadapt
