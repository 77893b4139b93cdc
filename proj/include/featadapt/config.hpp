#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "featadapt/errors.hpp"
#include "featadapt/io.hpp"

namespace featadapt {

// Flat typed key-value run configuration:
//
//   # comment
//   experiment = forgetting
//   seed = 0
//   hidden = 32, 32
//
// No sections, no includes. Keys read through the typed getters are tracked
// so a run can reject misspelled leftovers via ensure_all_consumed().
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text) {
    ConfigFile cfg;
    int line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
      ++line_no;
      std::string_view line = trim(raw_line);
      if (const auto hash = line.find('#'); hash != std::string_view::npos) {
        line = trim(line.substr(0, hash));
      }
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ValueError("config line " + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) {
        throw ValueError("config line " + std::to_string(line_no) + ": empty key");
      }
      if (cfg.values_.count(key)) {
        throw ValueError("config: duplicate key '" + key + "'");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static ConfigFile load(const std::filesystem::path& path) {
    return parse(read_text_file(path));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) throw ValueError("config: missing required key '" + key + "'");
    return it->second;
  }

  long long get_int(const std::string& key, long long fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_int(it->second);
  }

  double get_real(const std::string& key, double fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_double(it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ValueError("config: key '" + key + "' expects true/false");
  }

  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::string> out;
    for (const auto& piece : split(it->second, ',')) {
      const auto trimmed = trim(piece);
      if (!trimmed.empty()) out.emplace_back(trimmed);
    }
    return out;
  }

  std::vector<double> get_real_list(const std::string& key,
                                    const std::vector<double>& fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& piece : split(it->second, ',')) {
      const auto trimmed = trim(piece);
      if (!trimmed.empty()) out.push_back(parse_double(std::string(trimmed)));
    }
    return out;
  }

  std::vector<long long> get_int_list(const std::string& key,
                                      const std::vector<long long>& fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<long long> out;
    for (const auto& piece : split(it->second, ',')) {
      const auto trimmed = trim(piece);
      if (!trimmed.empty()) out.push_back(parse_int(std::string(trimmed)));
    }
    return out;
  }

  /// Rejects keys that were never read by any getter (typo guard).
  void ensure_all_consumed() const {
    std::vector<std::string> unknown;
    for (const auto& [key, _] : values_) {
      if (!consumed_.count(key)) unknown.push_back(key);
    }
    if (!unknown.empty()) {
      std::string message = "config: unknown keys:";
      for (const auto& key : unknown) message += " " + key;
      throw ValueError(message);
    }
  }

  /// Sorted key=value rendering; the basis of the run's config hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [key, value] : values_) {
      out += key;
      out += " = ";
      out += value;
      out += "\n";
    }
    return out;
  }

  std::string hash() const { return fnv1a64_hex(canonical()); }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace featadapt
