#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "featadapt/featadapt.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  long long seed_override = -1;
  std::string out_override;
};

featadapt::ConfigFile load_config(const CommonArgs& args) {
  auto cfg = featadapt::ConfigFile::load(args.config_path);
  if (args.seed_override >= 0) cfg.set("seed", std::to_string(args.seed_override));
  if (!args.out_override.empty()) cfg.set("out_dir", args.out_override);
  return cfg;
}

std::filesystem::path resolve_out_dir(const featadapt::ConfigFile& cfg) {
  return std::filesystem::path(cfg.get_string("out_dir", "runs/latest"));
}

void add_common_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed_override, "override the config seed");
  cmd->add_option("--out", args.out_override, "override the output directory");
}

int report_outcome(bool ok, const std::filesystem::path& out_dir) {
  if (ok) {
    std::cout << "ok: artifacts in " << out_dir.string() << "\n";
    return 0;
  }
  std::cout << "FAILED: see manifest.json failures in " << out_dir.string() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-space adaptation experiments"};
  app.require_subcommand(1);

  CommonArgs pretrain_args, oned_args, eem_args, forgetting_args, compare_args;
  auto* pretrain = app.add_subcommand("pretrain", "train and checkpoint the source model");
  add_common_options(pretrain, pretrain_args);
  auto* oned = app.add_subcommand("oned", "1-d weight-space vs feature-space descent");
  add_common_options(oned, oned_args);
  auto* eem = app.add_subcommand("eem", "shift recovery on a constructed lurking system");
  add_common_options(eem, eem_args);
  auto* forgetting =
      app.add_subcommand("forgetting", "seen/unseen comparison on the shifted task");
  add_common_options(forgetting, forgetting_args);
  auto* compare = app.add_subcommand("compare", "adapter battery across shifted domains");
  add_common_options(compare, compare_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      auto cfg = load_config(pretrain_args);
      const auto out = resolve_out_dir(cfg);
      return report_outcome(featadapt::cmd_pretrain(cfg, out).ok, out);
    }
    if (oned->parsed()) {
      auto cfg = load_config(oned_args);
      const auto out = resolve_out_dir(cfg);
      return report_outcome(featadapt::cmd_oned(cfg, out).ok, out);
    }
    if (eem->parsed()) {
      auto cfg = load_config(eem_args);
      const auto out = resolve_out_dir(cfg);
      return report_outcome(featadapt::cmd_eem(cfg, out).ok, out);
    }
    if (forgetting->parsed()) {
      auto cfg = load_config(forgetting_args);
      const auto out = resolve_out_dir(cfg);
      return report_outcome(featadapt::cmd_forgetting(cfg, out).ok, out);
    }
    if (compare->parsed()) {
      auto cfg = load_config(compare_args);
      const auto out = resolve_out_dir(cfg);
      return report_outcome(featadapt::cmd_compare(cfg, out).ok, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
