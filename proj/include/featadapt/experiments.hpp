#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "featadapt/checkpoint.hpp"
#include "featadapt/config.hpp"
#include "featadapt/datasets.hpp"
#include "featadapt/eem.hpp"
#include "featadapt/manifest.hpp"
#include "featadapt/metrics.hpp"
#include "featadapt/models.hpp"
#include "featadapt/trainer.hpp"

namespace featadapt {

namespace detail {

// Seed salts keep the dataset, model init, split and adapter streams distinct.
constexpr std::uint64_t kModelInitSalt = 0xa0761d6478bd642full;
constexpr std::uint64_t kSplitSalt = 0xe7037ed1a0b428dbull;
constexpr std::uint64_t kAdapterSalt = 0x8ebc6af09c88c6e3ull;
constexpr std::uint64_t kSystemSalt = 0x589965e06c950ca9ull;
constexpr std::uint64_t kSampleSalt = 0x1d8e4e27c47d124full;

inline std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

inline std::string format_table(const std::vector<std::string>& headers,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  auto emit_row = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line.append(widths[c] - row[c].size() + 2, ' ');
    }
    line += "\n";
    return line;
  };
  std::string out = emit_row(headers);
  std::size_t total = 0;
  for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 2 : 0);
  out += std::string(total, '-') + "\n";
  for (const auto& row : rows) out += emit_row(row);
  return out;
}

inline SyntheticSpec read_synthetic_spec(const ConfigFile& cfg, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = static_cast<int>(cfg.get_int("classes", 10));
  spec.n_per_class = static_cast<int>(cfg.get_int("n_per_class", 40));
  spec.dim = static_cast<int>(cfg.get_int("dim", 16));
  spec.cluster_std = cfg.get_real("cluster_std", 0.5);
  spec.mean_scale = cfg.get_real("mean_scale", 2.0);
  spec.seed = seed;
  return spec;
}

inline OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adamw") return OptimizerKind::AdamW;
  throw ValueError("unknown optimizer: " + name);
}

inline LurkingTransform transform_for_scale(double s) {
  return s == 1.0 ? LurkingTransform::none() : LurkingTransform::scaling(s);
}

struct AdapterToken {
  AdapterKind kind;
  int rank = 0;
};

inline AdapterToken parse_adapter_token(const std::string& token, int default_rank) {
  AdapterToken out;
  const auto colon = token.find(':');
  const std::string name = colon == std::string::npos ? token : token.substr(0, colon);
  out.kind = adapter_kind_from_string(name);
  out.rank = colon == std::string::npos ? default_rank
                                        : static_cast<int>(parse_int(token.substr(colon + 1)));
  return out;
}

inline std::string adapter_token_label(const AdapterToken& token) {
  std::string label = to_string(token.kind);
  if (token.kind == AdapterKind::LoRA || token.kind == AdapterKind::LoRFA) {
    label += ":" + std::to_string(token.rank);
  }
  return label;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainOutcome {
  Model model;
  DatasetPair data;
  double test_accuracy = 0.0;
  std::filesystem::path checkpoint_path;
  TrainReport report;
  bool ok = false;
};

/// Trains the source-domain model from scratch, gates it on source test
/// accuracy, and writes the frozen checkpoint plus the dataset files.
inline PretrainOutcome cmd_pretrain(const ConfigFile& cfg,
                                    const std::filesystem::path& out_dir) {
  ExperimentContext ctx(out_dir, cfg.hash());
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const SyntheticSpec spec = detail::read_synthetic_spec(cfg, seed);
  const double gate = cfg.get_real("accuracy_gate", 0.95);

  std::vector<std::size_t> hidden;
  for (long long h : cfg.get_int_list("hidden", {32, 32})) {
    hidden.push_back(static_cast<std::size_t>(h));
  }

  TrainConfig train_cfg;
  train_cfg.lr_adapter = cfg.get_real("lr", 0.01);
  train_cfg.lr_head = train_cfg.lr_adapter;
  train_cfg.epochs = static_cast<int>(cfg.get_int("epochs", 80));
  train_cfg.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  train_cfg.optimizer = detail::optimizer_from_string(cfg.get_string("optimizer", "adamw"));
  train_cfg.seed = seed;
  cfg.ensure_all_consumed();

  PretrainOutcome outcome;
  outcome.data = generate_source(spec);

  Rng init_rng(seed ^ detail::kModelInitSalt);
  outcome.model = make_mlp(static_cast<std::size_t>(spec.dim), hidden,
                           static_cast<std::size_t>(spec.classes), init_rng);
  AdapterSpec full_ft;
  full_ft.kind = AdapterKind::FullFT;
  log_message(LogLevel::Info, "pretraining source model (seed " + std::to_string(seed) + ")");
  outcome.report = fit(outcome.model, full_ft, outcome.data.train, train_cfg);
  freeze_all(outcome.model);

  outcome.test_accuracy = accuracy(outcome.model, outcome.data.test);

  save_dataset(outcome.data.train, ctx.out_dir() / "datasets/source_train.csv");
  ctx.note_artifact("datasets/source_train.csv");
  save_dataset(outcome.data.test, ctx.out_dir() / "datasets/source_test.csv");
  ctx.note_artifact("datasets/source_test.csv");

  outcome.checkpoint_path = ctx.out_dir() / "checkpoints/source_model.json";
  save_model(outcome.model, outcome.checkpoint_path);
  ctx.note_artifact("checkpoints/source_model.json");

  ctx.add_metric("pretrain", "source_test_accuracy", outcome.test_accuracy);
  ctx.add_metric("pretrain", "epochs_run", outcome.report.epochs_run);
  ctx.add_metric("pretrain", "final_train_loss",
                 outcome.report.epoch_loss.empty() ? 0.0 : outcome.report.epoch_loss.back());

  if (outcome.test_accuracy < gate) {
    ctx.fail("accuracy-gate", "source test accuracy " + format_double(outcome.test_accuracy) +
                                  " below gate " + format_double(gate));
  }

  std::string report = "pretrain\n========\n";
  report += "source test accuracy: " + detail::fmt(outcome.test_accuracy) + " (gate " +
            detail::fmt(gate) + ")\n";
  report += "checkpoint: checkpoints/source_model.json\n";
  report += "snapshot id: " + outcome.report.snapshot_id + "\n";
  ctx.set_report(report);
  ctx.finish();
  outcome.ok = ctx.ok();
  return outcome;
}

// ---------------------------------------------------------------------------
// oned
// ---------------------------------------------------------------------------

struct OneDOutcome {
  OneDTrace weight;
  OneDTrace feature;
  double closed_form_slope = 0.0;
  double gradient_ratio = 0.0;
  bool ok = false;
};

/// Runs the 1-D weight-space vs feature-space descent and writes both traces.
inline OneDOutcome cmd_oned(const ConfigFile& cfg, const std::filesystem::path& out_dir) {
  ExperimentContext ctx(out_dir, cfg.hash());

  OneDExperiment exp;
  exp.pretrained_slope = cfg.get_real("slope", 5.0);
  exp.lr = cfg.get_real("lr", 0.03);
  exp.steps = static_cast<int>(cfg.get_int("steps", 300));
  exp.stop_tol = 0.0;  // fixed step count so both traces align
  const double check_tol = cfg.get_real("check_tol", 1e-3);
  const bool assert_pattern = cfg.get_bool("assert_pattern", true);

  const auto xs = cfg.get_real_list("x_values", {});
  const auto ys = cfg.get_real_list("y_values", {});
  if (xs.size() != ys.size()) throw ValueError("oned: x_values/y_values length mismatch");
  if (xs.empty()) {
    exp.data = one_d_default_data();
  } else {
    for (std::size_t i = 0; i < xs.size(); ++i) exp.data.emplace_back(xs[i], ys[i]);
  }
  cfg.ensure_all_consumed();

  OneDOutcome outcome;
  exp.mode = OneDMode::WeightSpace;
  outcome.weight = run_1d(exp);
  exp.mode = OneDMode::FeatureSpace;
  outcome.feature = run_1d(exp);
  outcome.closed_form_slope = closed_form_slope(exp.data);
  outcome.gradient_ratio = gradient_ratio_at_init(exp);

  // plot data: one row per step, both loss curves
  std::string dat = "# step loss_weight loss_feature\n";
  for (std::size_t k = 0; k < outcome.weight.rows.size(); ++k) {
    dat += std::to_string(k) + " " + format_double(outcome.weight.rows[k].loss) + " " +
           format_double(outcome.feature.rows[k].loss) + "\n";
  }
  ctx.write_artifact("traces/oned.dat", dat);

  std::string csv = "step,mode,param,loss\n";
  for (const auto& row : outcome.weight.rows) {
    csv += std::to_string(row.step) + ",weight," + format_double(row.param) + "," +
           format_double(row.loss) + "\n";
  }
  for (const auto& row : outcome.feature.rows) {
    csv += std::to_string(row.step) + ",feature," + format_double(row.param) + "," +
           format_double(row.loss) + "\n";
  }
  ctx.write_artifact("traces/oned_trace.csv", csv);

  const double fitted_w = outcome.weight.fitted_slope(exp);
  OneDExperiment feature_exp = exp;
  feature_exp.mode = OneDMode::FeatureSpace;
  const double fitted_f = outcome.feature.fitted_slope(feature_exp);

  ctx.add_metric("oned", "delta1_final", outcome.weight.final_param);
  ctx.add_metric("oned", "delta2_final", outcome.feature.final_param);
  ctx.add_metric("oned", "fitted_slope_weight", fitted_w);
  ctx.add_metric("oned", "fitted_slope_feature", fitted_f);
  ctx.add_metric("oned", "closed_form_slope", outcome.closed_form_slope);
  ctx.add_metric("oned", "gradient_ratio_at_init", outcome.gradient_ratio);

  if (std::abs(fitted_w - outcome.closed_form_slope) > check_tol) {
    ctx.fail("oned-weight-optimum", "weight-space slope " + format_double(fitted_w) +
                                        " missed the least-squares optimum");
  }
  if (std::abs(fitted_f - outcome.closed_form_slope) > check_tol) {
    ctx.fail("oned-feature-optimum", "feature-space slope " + format_double(fitted_f) +
                                         " missed the least-squares optimum");
  }
  if (assert_pattern) {
    for (std::size_t k = 1; k < outcome.weight.rows.size(); ++k) {
      if (outcome.feature.rows[k].loss > outcome.weight.rows[k].loss) {
        ctx.fail("oned-dominance", "feature-space loss above weight-space at step " +
                                       std::to_string(k));
        break;
      }
    }
  }

  std::string report = "one-dimensional comparison\n==========================\n";
  report += "closed-form slope: " + detail::fmt(outcome.closed_form_slope, 6) + "\n";
  report += "weight-space:  delta1 = " + detail::fmt(outcome.weight.final_param, 6) +
            ", slope = " + detail::fmt(fitted_w, 6) + "\n";
  report += "feature-space: delta2 = " + detail::fmt(outcome.feature.final_param, 6) +
            ", slope = " + detail::fmt(fitted_f, 6) + "\n";
  report += "gradient ratio at init: " + detail::fmt(outcome.gradient_ratio, 9) + "\n";
  ctx.set_report(report);
  ctx.finish();
  outcome.ok = ctx.ok();
  return outcome;
}

// ---------------------------------------------------------------------------
// eem recovery
// ---------------------------------------------------------------------------

struct EemOutcome {
  DeltaRecovery recovery;
  double delta_max_error = 0.0;  // max |delta_hat(x) - exact shift| over probes
  bool ok = false;
};

/// Builds a constructed lurking system, fits the shift map, and reports how
/// closely the fitted response matches g(X, u_d) on held-out data.
inline EemOutcome cmd_eem(const ConfigFile& cfg, const std::filesystem::path& out_dir) {
  ExperimentContext ctx(out_dir, cfg.hash());
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const std::size_t dim_in = static_cast<std::size_t>(cfg.get_int("dim_in", 4));
  const std::size_t dim_out = static_cast<std::size_t>(cfg.get_int("dim_out", 6));
  const double u_d = cfg.get_real("u_d", 0.8);
  const double noise_std = cfg.get_real("noise_std", 0.0);
  const std::size_t samples = static_cast<std::size_t>(cfg.get_int("samples", 300));

  TrainConfig train_cfg;
  train_cfg.lr_adapter = cfg.get_real("lr", 0.5);
  train_cfg.lr_head = train_cfg.lr_adapter;
  train_cfg.epochs = static_cast<int>(cfg.get_int("epochs", 4000));
  train_cfg.batch_size = static_cast<int>(cfg.get_int("batch_size", static_cast<long long>(samples)));
  train_cfg.loss = LossKind::Mse;
  train_cfg.optimizer = detail::optimizer_from_string(cfg.get_string("optimizer", "sgd"));
  train_cfg.seed = seed;
  train_cfg.shuffle = cfg.get_bool("shuffle", false);

  const std::string map_name = cfg.get_string("map", "affine");
  const ShiftMapKind map = map_name == "linear"   ? ShiftMapKind::Linear
                           : map_name == "affine" ? ShiftMapKind::Affine
                           : map_name == "mlp"    ? ShiftMapKind::Mlp
                                                  : throw ValueError("eem: unknown map " + map_name);
  const double alignment_tol = cfg.get_real("alignment_tol", 1e-6);
  const bool assert_alignment = cfg.get_bool("assert_alignment", noise_std == 0.0);
  cfg.ensure_all_consumed();

  const LurkingSystem sys =
      make_linear_lurking_system(dim_in, dim_out, u_d, noise_std, seed ^ detail::kSystemSalt);
  const RegressionSet data = sample_lurking_system(sys, samples, seed ^ detail::kSampleSalt);

  EemOutcome outcome;
  outcome.recovery = recover_delta(sys, data, train_cfg, map);

  // how far the fitted map is from the exact constant shift
  Rng probe_rng(seed + 17);
  Tensor probes = Tensor::randn(32, dim_in, probe_rng);
  Tensor fitted_delta = outcome.recovery.model.input_shift->delta(probes);
  const Tensor exact = sys.exact_delta();
  auto fd = fitted_delta.data();
  auto ed = exact.data();
  for (std::size_t i = 0; i < probes.rows(); ++i) {
    for (std::size_t j = 0; j < dim_in; ++j) {
      outcome.delta_max_error =
          std::max(outcome.delta_max_error, std::abs(fd[i * dim_in + j] - ed[j]));
    }
  }

  ctx.add_metric("eem", "alignment_mean", outcome.recovery.alignment_mean);
  ctx.add_metric("eem", "alignment_max", outcome.recovery.alignment_max);
  ctx.add_metric("eem", "delta_max_error", outcome.delta_max_error);
  ctx.add_metric("eem", "final_train_loss",
                 outcome.recovery.report.epoch_loss.empty()
                     ? 0.0
                     : outcome.recovery.report.epoch_loss.back());

  if (assert_alignment && outcome.recovery.alignment_max > alignment_tol) {
    ctx.fail("eem-alignment", "held-out alignment " +
                                  format_double(outcome.recovery.alignment_max) +
                                  " above tolerance " + format_double(alignment_tol));
  }

  std::string report = "effect-equivalence recovery\n===========================\n";
  report += "lurking value u_d: " + detail::fmt(u_d) + ", noise std: " + detail::fmt(noise_std) + "\n";
  report += "held-out alignment mean: " + format_double(outcome.recovery.alignment_mean) + "\n";
  report += "held-out alignment max:  " + format_double(outcome.recovery.alignment_max) + "\n";
  report += "max shift error vs exact: " + format_double(outcome.delta_max_error) + "\n";
  ctx.set_report(report);
  ctx.finish();
  outcome.ok = ctx.ok();
  return outcome;
}

// ---------------------------------------------------------------------------
// forgetting
// ---------------------------------------------------------------------------

struct MethodRow {
  std::string name;
  AccuracyBreakdown breakdown;
  double r2_unseen = 0.0;      // unseen-accuracy change vs the frozen baseline
  double seen_change = 0.0;    // seen-accuracy change, reported alongside
  std::size_t trainable = 0;
};

struct ForgettingOutcome {
  std::vector<MethodRow> rows;  // frozen, full-ft, feature method
  std::vector<int> seen;
  std::vector<int> unseen;
  bool ok = false;
};

/// Reproduces the seen/unseen forgetting comparison on the scale-shifted
/// synthetic task: frozen baseline, full fine-tuning, and one feature-space
/// method, all evaluated on the full downstream test set.
inline ForgettingOutcome cmd_forgetting(const ConfigFile& cfg,
                                        const std::filesystem::path& out_dir) {
  ExperimentContext ctx(out_dir, cfg.hash());
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const std::string checkpoint = cfg.require_string("checkpoint");
  const SyntheticSpec spec = detail::read_synthetic_spec(cfg, seed);
  const double scale = cfg.get_real("scale", 0.7);
  const double seen_fraction = cfg.get_real("seen_fraction", 0.5);
  const bool assert_pattern = cfg.get_bool("assert_pattern", true);

  TrainConfig ft_cfg;
  ft_cfg.lr_adapter = cfg.get_real("ft_lr", 0.01);
  ft_cfg.lr_head = cfg.get_real("ft_lr_head", ft_cfg.lr_adapter);
  ft_cfg.epochs = static_cast<int>(cfg.get_int("ft_epochs", 40));
  ft_cfg.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  ft_cfg.optimizer = detail::optimizer_from_string(cfg.get_string("optimizer", "adamw"));
  ft_cfg.seed = seed;

  TrainConfig feat_cfg = ft_cfg;
  feat_cfg.lr_adapter = cfg.get_real("feature_lr", 0.01);
  feat_cfg.lr_head = feat_cfg.lr_adapter;
  feat_cfg.epochs = static_cast<int>(cfg.get_int("feature_epochs", 60));

  const std::string feature_name = cfg.get_string("feature_adapter", "input-shift");
  const int feature_rank = static_cast<int>(cfg.get_int("feature_rank", 2));
  cfg.ensure_all_consumed();

  const Model base = load_model(checkpoint);

  DatasetPair source = generate_source(spec);
  const LurkingTransform transform = detail::transform_for_scale(scale);
  DatasetPair shifted{apply_lurking(source.train, transform),
                      apply_lurking(source.test, transform)};
  Rng split_rng(seed ^ detail::kSplitSalt);
  SeenUnseenSplit split = split_seen_unseen(shifted, seen_fraction, split_rng);

  ForgettingOutcome outcome;
  outcome.seen = split.seen;
  outcome.unseen = split.unseen;

  const AccuracyBreakdown frozen_breakdown = accuracy_breakdown(base, split.test);
  outcome.rows.push_back({"frozen", frozen_breakdown, 0.0, 0.0, 0});

  {
    Model m = clone_model(base);
    AdapterSpec full_ft;
    full_ft.kind = AdapterKind::FullFT;
    full_ft.init_seed = seed ^ detail::kAdapterSalt;
    fit(m, full_ft, split.train_seen, ft_cfg);
    const AccuracyBreakdown b = accuracy_breakdown(m, split.test);
    outcome.rows.push_back({"full-ft", b, r2(b, frozen_breakdown),
                            b.acc_seen - frozen_breakdown.acc_seen,
                            param_count(full_ft, base)});
  }

  {
    Model m = clone_model(base);
    const detail::AdapterToken token = detail::parse_adapter_token(feature_name, feature_rank);
    AdapterSpec feature;
    feature.kind = token.kind;
    feature.rank = token.rank;
    feature.train_head = false;  // the pre-trained head covers every class
    feature.init_seed = seed ^ detail::kAdapterSalt;
    fit(m, feature, split.train_seen, feat_cfg);
    const AccuracyBreakdown b = accuracy_breakdown(m, split.test);
    outcome.rows.push_back({to_string(feature.kind), b, r2(b, frozen_breakdown),
                            b.acc_seen - frozen_breakdown.acc_seen,
                            param_count(feature, base)});
  }

  for (const auto& row : outcome.rows) {
    ctx.add_metric(row.name, "acc_all", row.breakdown.acc_all);
    ctx.add_metric(row.name, "acc_unseen", row.breakdown.acc_unseen);
    ctx.add_metric(row.name, "acc_seen", row.breakdown.acc_seen);
    ctx.add_metric(row.name, "r2_unseen", row.r2_unseen);
    ctx.add_metric(row.name, "seen_change", row.seen_change);
    ctx.add_metric(row.name, "trainable_params", static_cast<double>(row.trainable));
  }

  if (assert_pattern) {
    const auto& frozen = outcome.rows[0].breakdown;
    const auto& full_ft = outcome.rows[1].breakdown;
    const auto& feature = outcome.rows[2].breakdown;
    if (full_ft.acc_seen <= frozen.acc_seen) {
      ctx.fail("forgetting-seen-gain", "full fine-tuning did not improve seen-class accuracy");
    }
    if (std::min(feature.acc_seen, feature.acc_unseen) <=
        std::min(full_ft.acc_seen, full_ft.acc_unseen)) {
      ctx.fail("forgetting-min-acc", "feature-space method did not beat full FT on min(seen, unseen)");
    }
    if (feature.acc_all <= full_ft.acc_all) {
      ctx.fail("forgetting-overall", "feature-space method did not beat full FT overall");
    }
  }

  std::vector<std::vector<std::string>> table_rows;
  for (const auto& row : outcome.rows) {
    table_rows.push_back({row.name, detail::fmt(row.breakdown.acc_all, 3),
                          detail::fmt(row.breakdown.acc_unseen, 3),
                          detail::fmt(row.breakdown.acc_seen, 3),
                          detail::fmt(row.r2_unseen, 3), detail::fmt(row.seen_change, 3),
                          std::to_string(row.trainable)});
  }
  std::string report = "seen/unseen forgetting comparison\n=================================\n";
  report += "seen classes:";
  for (int c : outcome.seen) report += " " + std::to_string(c);
  report += "\nunseen classes:";
  for (int c : outcome.unseen) report += " " + std::to_string(c);
  report += "\n\n";
  report += detail::format_table(
      {"method", "acc_all", "acc_unseen", "acc_seen", "R2(unseen)", "dSeen", "params"},
      table_rows);
  ctx.set_report(report);
  ctx.finish();
  outcome.ok = ctx.ok();
  return outcome;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareRow {
  std::string adapter;
  std::size_t trainable = 0;
  double colspace_residual = -1.0;  // -1 when not applicable
  std::map<std::string, double> accuracy_per_domain;
  std::map<std::string, double> r1_per_domain;
};

struct CompareOutcome {
  std::vector<std::string> domain_tags;
  std::string train_tag;
  std::map<std::string, double> zero_shot;
  std::vector<CompareRow> rows;
  bool ok = false;
};

/// Fine-tunes each configured adapter on one shifted domain and evaluates the
/// result across a battery of other shifts, reporting accuracy, R1 against the
/// zero-shot baseline, parameter budgets, and a column-space probe.
inline CompareOutcome cmd_compare(const ConfigFile& cfg,
                                  const std::filesystem::path& out_dir) {
  ExperimentContext ctx(out_dir, cfg.hash());
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  const std::string checkpoint = cfg.require_string("checkpoint");
  const SyntheticSpec spec = detail::read_synthetic_spec(cfg, seed);
  const double train_scale = cfg.get_real("train_scale", 0.7);
  const std::vector<double> eval_scales = cfg.get_real_list("eval_scales", {1.0, 0.7, 1.3});
  const int default_rank = static_cast<int>(cfg.get_int("rank", 2));
  const bool probe_colspace = cfg.get_bool("colspace_probe", true);
  const bool assert_init = cfg.get_bool("assert_init", true);
  const bool train_head = cfg.get_bool("train_head", false);

  TrainConfig train_cfg;
  train_cfg.lr_adapter = cfg.get_real("lr", 0.01);
  train_cfg.lr_head = cfg.get_real("lr_head", train_cfg.lr_adapter);
  train_cfg.epochs = static_cast<int>(cfg.get_int("epochs", 30));
  train_cfg.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  train_cfg.optimizer = detail::optimizer_from_string(cfg.get_string("optimizer", "adamw"));
  train_cfg.seed = seed;

  const auto adapter_names = cfg.get_string_list(
      "adapters", {"vefa", "lorfa:2", "lora:2", "linear-probe", "full-ft", "input-shift"});
  cfg.ensure_all_consumed();
  if (adapter_names.size() < 2) throw ValueError("compare: need at least 2 adapter specs");

  const Model base = load_model(checkpoint);
  DatasetPair source = generate_source(spec);

  CompareOutcome outcome;
  const LurkingTransform train_transform = detail::transform_for_scale(train_scale);
  outcome.train_tag = train_transform.tag();
  SplitDataset train_ds = apply_lurking(source.train, train_transform);

  std::vector<SplitDataset> eval_sets;
  for (double s : eval_scales) {
    SplitDataset ds = apply_lurking(source.test, detail::transform_for_scale(s));
    outcome.domain_tags.push_back(detail::transform_for_scale(s).tag());
    eval_sets.push_back(std::move(ds));
  }

  for (std::size_t d = 0; d < eval_sets.size(); ++d) {
    outcome.zero_shot[outcome.domain_tags[d]] = accuracy(base, eval_sets[d]);
    ctx.add_metric("zero-shot", "acc@" + outcome.domain_tags[d],
                   outcome.zero_shot[outcome.domain_tags[d]]);
  }

  for (const auto& name : adapter_names) {
    const detail::AdapterToken token = detail::parse_adapter_token(name, default_rank);
    AdapterSpec adapter;
    adapter.kind = token.kind;
    adapter.rank = token.rank;
    adapter.train_head = token.kind == AdapterKind::FullFT ||
                         token.kind == AdapterKind::LinearProbe || train_head;
    adapter.init_seed = seed ^ detail::kAdapterSalt;
    const std::string label = detail::adapter_token_label(token);

    if (assert_init) {
      Model probe = clone_model(base);
      Rng rng(adapter.init_seed);
      attach_adapters(probe, adapter, rng);
      for (std::size_t d = 0; d < eval_sets.size(); ++d) {
        const double diff = max_abs_diff(forward(probe, eval_sets[d].features),
                                         forward(base, eval_sets[d].features));
        if (diff > 1e-12) {
          ctx.fail("compare-zero-init", label + " deviates from the frozen baseline at init (" +
                                            format_double(diff) + ")");
          break;
        }
      }
    }

    CompareRow row;
    row.adapter = label;
    row.trainable = param_count(adapter, base);

    Model m = clone_model(base);
    fit(m, adapter, train_ds, train_cfg);
    for (std::size_t d = 0; d < eval_sets.size(); ++d) {
      const std::string& tag = outcome.domain_tags[d];
      const double acc = accuracy(m, eval_sets[d]);
      row.accuracy_per_domain[tag] = acc;
      row.r1_per_domain[tag] = r1(acc * 100.0, outcome.zero_shot[tag] * 100.0);
      ctx.add_metric(label, "acc@" + tag, acc);
      ctx.add_metric(label, "r1@" + tag, row.r1_per_domain[tag]);
    }
    ctx.add_metric(label, "trainable_params", static_cast<double>(row.trainable));

    if (probe_colspace &&
        (token.kind == AdapterKind::LoRA || token.kind == AdapterKind::LoRFA ||
         token.kind == AdapterKind::VeFA)) {
      // rank-deficient 6x6 probe: does 200 steps of training push the
      // effective update outside col(w0)?
      Rng probe_rng(seed + 1234);
      Tensor left = Tensor::randn(6, 3, probe_rng);
      Tensor right = Tensor::randn(3, 6, probe_rng);
      Tensor w0(6, 6);
      detail::gemm_nn(left.data(), right.data(), w0.data(), 6, 3, 6);

      Model probe_model;
      probe_model.kind = ModelKind::Mlp;
      probe_model.layers.push_back(LayerWeights{w0, std::nullopt, true, std::nullopt});
      probe_model.activations.push_back(Activation::None);

      AdapterSpec probe_spec = adapter;
      probe_spec.targets = TargetLayers::AllLinear;
      probe_spec.train_head = false;
      TrainConfig probe_cfg;
      probe_cfg.lr_adapter = 0.05;
      probe_cfg.lr_head = 0.05;
      probe_cfg.epochs = 200;
      probe_cfg.batch_size = 64;
      probe_cfg.loss = LossKind::Mse;
      probe_cfg.optimizer = OptimizerKind::AdamW;
      probe_cfg.seed = seed;
      probe_cfg.shuffle = false;
      Tensor px = Tensor::randn(64, 6, probe_rng);
      Tensor py = Tensor::randn(64, 6, probe_rng);
      fit_regression(probe_model, probe_spec, px, py, probe_cfg);
      row.colspace_residual = column_space_residual(probe_model.layers[0]);
      ctx.add_metric(label, "colspace_residual", row.colspace_residual);
      if ((token.kind == AdapterKind::LoRFA || token.kind == AdapterKind::VeFA) &&
          row.colspace_residual > 1e-8) {
        ctx.fail("compare-colspace", label + " left col(w0): residual " +
                                         format_double(row.colspace_residual));
      }
    }

    outcome.rows.push_back(std::move(row));
  }

  // parameter-budget ordering when the three adapter families are all present
  {
    std::map<std::string, std::size_t> counts;
    for (const auto& row : outcome.rows) counts[row.adapter] = row.trainable;
    const auto vefa = counts.find("vefa");
    const auto lorfa = counts.find("lorfa:" + std::to_string(default_rank));
    const auto lora = counts.find("lora:" + std::to_string(default_rank));
    if (vefa != counts.end() && lorfa != counts.end() && lora != counts.end()) {
      if (!(vefa->second < lorfa->second && lorfa->second < lora->second)) {
        ctx.fail("compare-param-order", "expected vefa < lorfa < lora parameter budgets");
      }
    }
  }

  std::vector<std::string> headers{"adapter", "params", "colspace"};
  for (const auto& tag : outcome.domain_tags) headers.push_back("acc@" + tag);
  for (const auto& tag : outcome.domain_tags) headers.push_back("R1@" + tag);
  std::vector<std::vector<std::string>> table_rows;
  {
    std::vector<std::string> zs{"zero-shot", "0", "-"};
    for (const auto& tag : outcome.domain_tags) {
      zs.push_back(detail::fmt(outcome.zero_shot[tag], 3));
    }
    for (std::size_t i = 0; i < outcome.domain_tags.size(); ++i) zs.push_back("-");
    table_rows.push_back(std::move(zs));
  }
  for (const auto& row : outcome.rows) {
    std::vector<std::string> cells{row.adapter, std::to_string(row.trainable),
                                   row.colspace_residual < 0.0
                                       ? "-"
                                       : format_double(row.colspace_residual)};
    for (const auto& tag : outcome.domain_tags) {
      cells.push_back(detail::fmt(row.accuracy_per_domain.at(tag), 3));
    }
    for (const auto& tag : outcome.domain_tags) {
      cells.push_back(detail::fmt(row.r1_per_domain.at(tag), 1));
    }
    table_rows.push_back(std::move(cells));
  }

  std::string report = "adapter comparison (train domain: " + outcome.train_tag + ")\n";
  report += std::string(report.size() - 1, '=') + "\n\n";
  report += detail::format_table(headers, table_rows);
  report += "\nR1 is reported in percentage points against the zero-shot row.\n";
  ctx.set_report(report);
  ctx.finish();
  outcome.ok = ctx.ok();
  return outcome;
}

}  // namespace featadapt
