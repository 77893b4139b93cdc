#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "featadapt/errors.hpp"
#include "featadapt/io.hpp"
#include "featadapt/numeric.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

// Labeled feature matrix with an optional seen/unseen class partition.
struct SplitDataset {
  Tensor features;          // n x d
  std::vector<int> labels;  // each in [0, num_classes)
  int num_classes = 0;
  std::string role;         // "train" or "test"
  std::string domain_tag;
  std::vector<int> seen;    // sorted, disjoint from unseen
  std::vector<int> unseen;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() != labels.size()) {
      throw ShapeError("SplitDataset: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(features.rows()) + " rows");
    }
    for (int label : labels) {
      if (label < 0 || label >= num_classes) {
        throw ValueError("SplitDataset: label " + std::to_string(label) +
                         " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
    std::set<int> s(seen.begin(), seen.end());
    for (int u : unseen) {
      if (s.count(u)) throw ValueError("SplitDataset: seen/unseen sets overlap");
    }
  }
};

struct DatasetPair {
  SplitDataset train;
  SplitDataset test;
};

struct SyntheticSpec {
  int classes = 10;
  int n_per_class = 40;
  int dim = 16;
  double cluster_std = 0.5;
  double mean_scale = 2.0;  // scale of the seeded Gaussian cluster centers
  std::uint64_t seed = 0;
};

/// Seeded Gaussian class clusters, balanced train/test pair. The default spec
/// is separable enough for a small MLP to clear a 0.95 test-accuracy gate.
inline DatasetPair generate_source(const SyntheticSpec& spec) {
  if (spec.classes < 2 || spec.dim < 2 || spec.n_per_class < 2) {
    throw ValueError("generate_source: need classes >= 2, dim >= 2, n_per_class >= 2");
  }
  Rng rng(spec.seed);
  const std::size_t c = static_cast<std::size_t>(spec.classes);
  const std::size_t d = static_cast<std::size_t>(spec.dim);
  const std::size_t n = static_cast<std::size_t>(spec.n_per_class);

  std::vector<double> means(c * d);
  for (auto& v : means) v = spec.mean_scale * rng.normal();

  auto sample_split = [&](const std::string& role) {
    std::vector<double> rows(c * n * d);
    std::vector<int> labels(c * n);
    for (std::size_t cls = 0; cls < c; ++cls) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t row = cls * n + i;
        labels[row] = static_cast<int>(cls);
        for (std::size_t j = 0; j < d; ++j) {
          rows[row * d + j] = means[cls * d + j] + spec.cluster_std * rng.normal();
        }
      }
    }
    SplitDataset ds;
    ds.features = Tensor(c * n, d, std::move(rows));
    ds.labels = std::move(labels);
    ds.num_classes = spec.classes;
    ds.role = role;
    ds.domain_tag = "source";
    return ds;
  };

  return DatasetPair{sample_split("train"), sample_split("test")};
}

// Label-preserving feature transformation standing in for an unobserved
// domain factor.
struct LurkingTransform {
  enum class Kind { None, Scale, Translate, Affine };

  Kind kind = Kind::None;
  double scale = 1.0;
  std::vector<double> shift;       // Translate / Affine offset, length d
  std::optional<Tensor> matrix;    // Affine: d x d, nonsingular

  static LurkingTransform none() { return LurkingTransform{}; }

  static LurkingTransform scaling(double factor) {
    if (factor == 0.0) throw ValueError("LurkingTransform: scale factor must be nonzero");
    LurkingTransform t;
    t.kind = Kind::Scale;
    t.scale = factor;
    return t;
  }

  static LurkingTransform translation(std::vector<double> offset) {
    LurkingTransform t;
    t.kind = Kind::Translate;
    t.shift = std::move(offset);
    return t;
  }

  static LurkingTransform affine(Tensor m, std::vector<double> offset);

  std::string tag() const {
    switch (kind) {
      case Kind::None: return "id";
      case Kind::Scale: return "scale(" + format_double(scale) + ")";
      case Kind::Translate: return "translate";
      case Kind::Affine: return "affine";
    }
    return "?";
  }
};

/// Transforms features sample-wise; labels and the class partition are
/// untouched. The domain tag records the applied transform.
inline SplitDataset apply_lurking(const SplitDataset& ds, const LurkingTransform& t) {
  SplitDataset out = ds;
  out.features = ds.features.clone();
  const std::size_t n = ds.features.rows(), d = ds.features.cols();
  auto x = out.features.data();

  switch (t.kind) {
    case LurkingTransform::Kind::None:
      return out;
    case LurkingTransform::Kind::Scale:
      for (auto& v : x) v *= t.scale;
      break;
    case LurkingTransform::Kind::Translate: {
      if (t.shift.size() != d) {
        throw ShapeError("apply_lurking: shift length " + std::to_string(t.shift.size()) +
                         " for dim " + std::to_string(d));
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] += t.shift[j];
      }
      break;
    }
    case LurkingTransform::Kind::Affine: {
      const Tensor& m = *t.matrix;
      if (m.rows() != d || m.cols() != d || t.shift.size() != d) {
        throw ShapeError("apply_lurking: affine pieces do not match dim " +
                         std::to_string(d));
      }
      auto md = m.data();
      std::vector<double> row(d);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double acc = t.shift[j];
          for (std::size_t k = 0; k < d; ++k) acc += md[j * d + k] * x[i * d + k];
          row[j] = acc;
        }
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = row[j];
      }
      break;
    }
  }
  detail::ensure_finite(x, "apply_lurking");
  out.domain_tag = ds.domain_tag + "|" + t.tag();
  return out;
}

struct SeenUnseenSplit {
  SplitDataset train_seen;  // training samples whose labels fall in `seen`
  SplitDataset test;        // full test set, partition recorded
  std::vector<int> seen;
  std::vector<int> unseen;
};

/// Randomly designates ceil(fraction * C) classes as seen, drops unseen-class
/// samples from the training split, and keeps the full test split.
inline SeenUnseenSplit split_seen_unseen(const DatasetPair& data, double fraction,
                                         Rng& rng) {
  const int c = data.train.num_classes;
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw ValueError("split_seen_unseen: fraction must be in (0, 1)");
  }
  const int n_seen = static_cast<int>(std::ceil(fraction * c));
  if (n_seen < 1 || n_seen >= c) {
    throw ValueError("split_seen_unseen: fraction " + format_double(fraction) +
                     " leaves an empty seen or unseen set for C=" + std::to_string(c));
  }

  SeenUnseenSplit out;
  out.seen = rng.sample_without_replacement(c, n_seen);
  std::set<int> seen_set(out.seen.begin(), out.seen.end());
  for (int cls = 0; cls < c; ++cls) {
    if (!seen_set.count(cls)) out.unseen.push_back(cls);
  }

  const std::size_t d = data.train.dim();
  std::vector<double> rows;
  std::vector<int> labels;
  auto x = data.train.features.data();
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    if (!seen_set.count(data.train.labels[i])) continue;
    rows.insert(rows.end(), x.begin() + i * d, x.begin() + (i + 1) * d);
    labels.push_back(data.train.labels[i]);
  }
  if (labels.empty()) {
    throw ValueError("split_seen_unseen: no training samples with seen labels");
  }

  out.train_seen.features = Tensor(labels.size(), d, std::move(rows));
  out.train_seen.labels = std::move(labels);
  out.train_seen.num_classes = c;
  out.train_seen.role = "train";
  out.train_seen.domain_tag = data.train.domain_tag;
  out.train_seen.seen = out.seen;
  out.train_seen.unseen = out.unseen;

  out.test = data.test;
  out.test.features = data.test.features.clone();
  out.test.seen = out.seen;
  out.test.unseen = out.unseen;
  return out;
}

// ---------------------------------------------------------------------------
// File format: header "d,C,n" then one "label,f1,...,fd" row per sample.
// Doubles are written shortest-round-trip, so save/load is value-exact.
// ---------------------------------------------------------------------------

inline void save_dataset(const SplitDataset& ds, const std::filesystem::path& path) {
  std::string out;
  out.reserve(ds.size() * ds.dim() * 12);
  out += std::to_string(ds.dim());
  out += ',';
  out += std::to_string(ds.num_classes);
  out += ',';
  out += std::to_string(ds.size());
  out += '\n';
  auto x = ds.features.data();
  const std::size_t d = ds.dim();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.labels[i]);
    for (std::size_t j = 0; j < d; ++j) {
      out += ',';
      out += format_double(x[i * d + j]);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

inline SplitDataset load_dataset(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw IoError("load_dataset: empty file " + path.string());

  auto header = split(lines[0], ',');
  if (header.size() != 3) throw IoError("load_dataset: bad header in " + path.string());
  const std::size_t d = static_cast<std::size_t>(parse_int(header[0]));
  const int classes = static_cast<int>(parse_int(header[1]));
  const std::size_t n = static_cast<std::size_t>(parse_int(header[2]));
  if (lines.size() != n + 1) {
    throw IoError("load_dataset: expected " + std::to_string(n) + " rows, found " +
                  std::to_string(lines.size() - 1));
  }

  std::vector<double> rows(n * d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto fields = split(lines[i + 1], ',');
    if (fields.size() != d + 1) {
      throw IoError("load_dataset: row " + std::to_string(i) + " has " +
                    std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(d + 1));
    }
    labels[i] = static_cast<int>(parse_int(fields[0]));
    for (std::size_t j = 0; j < d; ++j) rows[i * d + j] = parse_double(fields[j + 1]);
  }

  SplitDataset ds;
  ds.features = Tensor(n, d, std::move(rows));
  ds.labels = std::move(labels);
  ds.num_classes = classes;
  ds.validate();
  return ds;
}

/// Loader for externally produced data: no header, rows of "label,f1,...,fd".
inline SplitDataset load_headerless_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw IoError("load_headerless_csv: empty file " + path.string());

  const std::size_t d = split(lines[0], ',').size() - 1;
  if (d == 0) throw IoError("load_headerless_csv: rows need a label and features");
  std::vector<double> rows(lines.size() * d);
  std::vector<int> labels(lines.size());
  int max_label = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto fields = split(lines[i], ',');
    if (fields.size() != d + 1) {
      throw IoError("load_headerless_csv: inconsistent field count at row " +
                    std::to_string(i));
    }
    labels[i] = static_cast<int>(parse_int(fields[0]));
    max_label = std::max(max_label, labels[i]);
    for (std::size_t j = 0; j < d; ++j) rows[i * d + j] = parse_double(fields[j + 1]);
  }

  SplitDataset ds;
  ds.features = Tensor(lines.size(), d, std::move(rows));
  ds.labels = std::move(labels);
  ds.num_classes = max_label + 1;
  ds.validate();
  return ds;
}

inline LurkingTransform LurkingTransform::affine(Tensor m, std::vector<double> offset) {
  if (m.rows() != m.cols()) {
    throw ShapeError("LurkingTransform: affine matrix must be square");
  }
  const Svd svd = jacobi_svd(m);
  double smin = svd.singular_values[0], smax = 0.0;
  for (double s : svd.singular_values) {
    smin = std::min(smin, s);
    smax = std::max(smax, s);
  }
  if (smin <= 1e-12 * smax) {
    throw ValueError("LurkingTransform: affine matrix is numerically singular");
  }
  LurkingTransform t;
  t.kind = Kind::Affine;
  t.matrix = std::move(m);
  t.shift = std::move(offset);
  return t;
}

}  // namespace featadapt
