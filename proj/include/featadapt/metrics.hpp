#pragma once

#include <map>
#include <string>
#include <vector>

#include "featadapt/datasets.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/models.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

/// Argmax class per row; ties resolve to the lowest class index.
inline std::vector<int> predict_labels(const Model& model, const Tensor& features) {
  Tensor logits = forward(model, features);
  const std::size_t n = logits.rows(), c = logits.cols();
  auto d = logits.data();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (d[i * c + j] > d[i * c + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

// Accuracy over all classes and over the seen/unseen subsets. Subset accuracy
// is measured on the samples whose true label lies in the subset, while the
// prediction always ranges over every class.
struct AccuracyBreakdown {
  double acc_all = 0.0;
  double acc_seen = 0.0;
  double acc_unseen = 0.0;
  std::size_t n_seen = 0;
  std::size_t n_unseen = 0;
  std::size_t correct_seen = 0;
  std::size_t correct_unseen = 0;
  std::vector<int> seen;
  std::vector<int> unseen;

  std::size_t n_all() const { return n_seen + n_unseen; }
  std::size_t correct_all() const { return correct_seen + correct_unseen; }
};

inline AccuracyBreakdown accuracy_breakdown_from_predictions(
    const std::vector<int>& predicted, const SplitDataset& test) {
  if (test.seen.empty() || test.unseen.empty()) {
    throw ValueError("accuracy_breakdown: test set needs a nonempty seen/unseen split");
  }
  std::set<int> seen_set(test.seen.begin(), test.seen.end());

  AccuracyBreakdown b;
  b.seen = test.seen;
  b.unseen = test.unseen;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool in_seen = seen_set.count(test.labels[i]) > 0;
    const bool correct = predicted[i] == test.labels[i];
    if (in_seen) {
      ++b.n_seen;
      b.correct_seen += correct ? 1 : 0;
    } else {
      ++b.n_unseen;
      b.correct_unseen += correct ? 1 : 0;
    }
  }
  if (b.n_seen == 0 || b.n_unseen == 0) {
    throw ValueError("accuracy_breakdown: a class subset has no test samples");
  }
  b.acc_seen = static_cast<double>(b.correct_seen) / static_cast<double>(b.n_seen);
  b.acc_unseen = static_cast<double>(b.correct_unseen) / static_cast<double>(b.n_unseen);
  b.acc_all = static_cast<double>(b.correct_all()) / static_cast<double>(b.n_all());
  return b;
}

inline AccuracyBreakdown accuracy_breakdown(const Model& model, const SplitDataset& test) {
  return accuracy_breakdown_from_predictions(predict_labels(model, test.features), test);
}

/// Plain accuracy over every sample, no subset split required.
inline double accuracy(const Model& model, const SplitDataset& ds) {
  const auto predicted = predict_labels(model, ds.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (predicted[i] == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Fine-tuned minus zero-shot metric on the same test split (signed, same units).
inline double r1(double metric_ft, double metric_zeroshot) {
  return metric_ft - metric_zeroshot;
}

/// Unseen-class accuracy change of the fine-tuned model vs the zero-shot model.
inline double r2(const AccuracyBreakdown& ft, const AccuracyBreakdown& zeroshot) {
  if (ft.seen != zeroshot.seen || ft.unseen != zeroshot.unseen) {
    throw ValueError("r2: breakdowns use different class partitions");
  }
  return ft.acc_unseen - zeroshot.acc_unseen;
}

enum class Verdict { Robust, NotRobust };

inline Verdict robustness_verdict(double value, double epsilon) {
  return value >= -epsilon ? Verdict::Robust : Verdict::NotRobust;
}

inline std::string to_string(Verdict v) {
  return v == Verdict::Robust ? "robust" : "not-robust";
}

struct RobustnessReport {
  std::map<std::string, double> r1_per_target;  // dataset tag -> R1
  double r2 = 0.0;
  double epsilon = 0.01;
  std::map<std::string, Verdict> verdicts;

  void finalize() {
    verdicts.clear();
    for (const auto& [tag, value] : r1_per_target) {
      verdicts["r1:" + tag] = robustness_verdict(value, epsilon);
    }
    verdicts["r2"] = robustness_verdict(r2, epsilon);
  }

  bool all_robust() const {
    for (const auto& [_, v] : verdicts) {
      if (v == Verdict::NotRobust) return false;
    }
    return true;
  }
};

}  // namespace featadapt
