#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "featadapt/errors.hpp"
#include "featadapt/io.hpp"

namespace featadapt {

inline constexpr const char* kToolVersion = "0.1.0";

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

inline LogLevel& log_threshold() {
  static LogLevel level = [] {
    const char* env = std::getenv("FEATADAPT_LOG");
    if (env == nullptr) return LogLevel::Info;
    const std::string v(env);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    if (v == "warn") return LogLevel::Warn;
    if (v == "error") return LogLevel::Error;
    return LogLevel::Info;
  }();
  return level;
}

inline void log_message(LogLevel level, const std::string& message) {
  if (level < log_threshold()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunFailure {
  std::string code;
  std::string message;
};

// Collects the artifacts, metrics and failures of one command run and writes
// metrics.csv plus manifest.json at the end. Artifact content hashes let a
// later verify pass detect post-hoc tampering.
class ExperimentContext {
 public:
  ExperimentContext(std::filesystem::path out_dir, std::string config_hash)
      : out_dir_(std::move(out_dir)), config_hash_(std::move(config_hash)),
        started_(utc_timestamp()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    // fail before any work if the directory is unusable
    const auto probe = out_dir_ / ".write_probe";
    write_text_file(probe, "ok");
    std::filesystem::remove(probe, ec);
  }

  const std::filesystem::path& out_dir() const { return out_dir_; }

  void add_metric(const std::string& run, const std::string& metric, double value) {
    metric_rows_.push_back({run, metric, value});
  }

  void fail(const std::string& code, const std::string& message) {
    failures_.push_back({code, message});
    log_message(LogLevel::Error, code + ": " + message);
  }

  bool ok() const { return failures_.empty(); }
  const std::vector<RunFailure>& failures() const { return failures_; }

  /// Writes a file under the run directory and records its content hash.
  void write_artifact(const std::string& rel_path, const std::string& content) {
    write_text_file(out_dir_ / rel_path, content);
    artifacts_.push_back(rel_path);
  }

  /// Registers a file that was written through another path (e.g. save_model).
  void note_artifact(const std::string& rel_path) { artifacts_.push_back(rel_path); }

  void set_report(const std::string& text) { write_artifact("report.txt", text); }

  /// Writes metrics.csv and manifest.json. metrics.csv contains no timestamps
  /// so identical runs produce byte-identical files.
  void finish() {
    std::string csv = "run,metric,value\n";
    for (const auto& row : metric_rows_) {
      csv += row.run + "," + row.metric + "," + format_double(row.value) + "\n";
    }
    write_artifact("metrics.csv", csv);

    nlohmann::json manifest;
    manifest["config_hash"] = config_hash_;
    manifest["tool_version"] = kToolVersion;
    manifest["started"] = started_;
    manifest["finished"] = utc_timestamp();
    nlohmann::json artifacts = nlohmann::json::array();
    for (const auto& rel : artifacts_) {
      nlohmann::json entry;
      entry["path"] = rel;
      entry["fnv1a64"] = fnv1a64_hex(read_text_file(out_dir_ / rel));
      artifacts.push_back(std::move(entry));
    }
    manifest["artifacts"] = std::move(artifacts);
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& row : metric_rows_) {
      nlohmann::json entry;
      entry["run"] = row.run;
      entry["metric"] = row.metric;
      entry["value"] = row.value;
      metrics.push_back(std::move(entry));
    }
    manifest["metrics"] = std::move(metrics);
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : failures_) {
      nlohmann::json entry;
      entry["code"] = f.code;
      entry["message"] = f.message;
      failures.push_back(std::move(entry));
    }
    manifest["failures"] = std::move(failures);
    write_text_file(out_dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  struct MetricRow {
    std::string run;
    std::string metric;
    double value;
  };

  std::filesystem::path out_dir_;
  std::string config_hash_;
  std::string started_;
  std::vector<std::string> artifacts_;
  std::vector<MetricRow> metric_rows_;
  std::vector<RunFailure> failures_;
};

struct ManifestCheck {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Re-hashes every artifact listed in <dir>/manifest.json.
inline ManifestCheck verify_manifest(const std::filesystem::path& dir) {
  ManifestCheck check;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  } catch (const std::exception& e) {
    check.ok = false;
    check.problems.push_back(std::string("manifest unreadable: ") + e.what());
    return check;
  }
  for (const auto& entry : manifest.at("artifacts")) {
    const std::string rel = entry.at("path").get<std::string>();
    const std::string expected = entry.at("fnv1a64").get<std::string>();
    try {
      const std::string actual = fnv1a64_hex(read_text_file(dir / rel));
      if (actual != expected) {
        check.ok = false;
        check.problems.push_back(rel + ": hash mismatch");
      }
    } catch (const IoError&) {
      check.ok = false;
      check.problems.push_back(rel + ": missing");
    }
  }
  return check;
}

}  // namespace featadapt
