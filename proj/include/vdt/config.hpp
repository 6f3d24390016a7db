// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Flat `key = value` run configuration with typed lookups.
 *
 * Lines are `key = value`; `#` starts a comment; blank lines are skipped.
 * Every lookup records the key and the value it resolved to (the default
 * when absent), so a run can echo its complete effective configuration.
 * Keys present in the file but never looked up are rejected by
 * reject_unknown().
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vdt {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Config {
public:
  Config() = default;

  static Config parse(const std::string &text);
  static Config load(const std::filesystem::path &path);

  bool contains(const std::string &key) const { return values_.contains(key); }
  /// Overrides (or adds) a key, e.g. from a command-line flag.
  void set(const std::string &key, const std::string &value);

  std::string get_string(const std::string &key, const std::string &fallback);
  std::string require_string(const std::string &key);
  double get_double(const std::string &key, double fallback);
  long long get_int(const std::string &key, long long fallback);
  std::size_t get_size(const std::string &key, std::size_t fallback);
  std::uint64_t get_u64(const std::string &key, std::uint64_t fallback);
  bool get_bool(const std::string &key, bool fallback);
  /// Comma-separated lists.
  std::vector<double> get_doubles(const std::string &key, const std::vector<double> &fallback);
  std::vector<std::size_t> get_sizes(const std::string &key, const std::vector<std::size_t> &fallback);
  std::vector<std::string> get_strings(const std::string &key, const std::vector<std::string> &fallback);

  /// Throws ConfigError naming every key that was never looked up.
  void reject_unknown() const;
  /// `key = value` for every looked-up key, sorted.
  std::string resolved_text() const;

private:
  std::optional<std::string> raw(const std::string &key);
  template <typename T> T record(const std::string &key, const std::string &raw_value, T value);

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> resolved_;
  std::map<std::string, int> lines_;
};

std::string format_double(double v);

} // namespace vdt
