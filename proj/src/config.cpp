// SPDX-License-Identifier: Apache-2.0
#include "vdt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace vdt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string &key, const std::string &s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string &key, const std::string &s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string &key, const std::string &s) {
  const long long v = parse_int(key, s);
  if (v < 0) throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

template <typename T, typename F> std::string join(const std::vector<T> &v, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(v);
}

Config Config::parse(const std::string &text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
    if (cfg.values_.contains(key))
      throw ConfigError("config line " + std::to_string(n) + ": duplicate key '" + key + "'");
    cfg.values_[key] = trim(std::string_view(line).substr(eq + 1));
    cfg.lines_[key] = n;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string &key, const std::string &value) { values_[key] = value; }

std::optional<std::string> Config::raw(const std::string &key) {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

template <typename T> T Config::record(const std::string &key, const std::string &raw_value, T value) {
  resolved_[key] = raw_value;
  return value;
}

std::string Config::get_string(const std::string &key, const std::string &fallback) {
  const auto v = raw(key).value_or(fallback);
  return record(key, v, v);
}

std::string Config::require_string(const std::string &key) {
  const auto v = raw(key);
  if (!v || v->empty()) throw ConfigError("config key '" + key + "' is required");
  return record(key, *v, *v);
}

double Config::get_double(const std::string &key, double fallback) {
  if (const auto v = raw(key)) return record(key, *v, parse_double(key, *v));
  return record(key, format_double(fallback), fallback);
}

long long Config::get_int(const std::string &key, long long fallback) {
  if (const auto v = raw(key)) return record(key, *v, parse_int(key, *v));
  return record(key, std::to_string(fallback), fallback);
}

std::size_t Config::get_size(const std::string &key, std::size_t fallback) {
  if (const auto v = raw(key)) return record(key, *v, parse_size(key, *v));
  return record(key, std::to_string(fallback), fallback);
}

std::uint64_t Config::get_u64(const std::string &key, std::uint64_t fallback) {
  if (const auto v = raw(key)) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size())
      throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + *v + "'");
    return record(key, *v, out);
  }
  return record(key, std::to_string(fallback), fallback);
}

bool Config::get_bool(const std::string &key, bool fallback) {
  if (const auto v = raw(key)) {
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return record(key, *v, true);
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return record(key, *v, false);
    throw ConfigError("config key '" + key + "': expected true or false, got '" + *v + "'");
  }
  return record(key, fallback ? "true" : "false", fallback);
}

std::vector<double> Config::get_doubles(const std::string &key, const std::vector<double> &fallback) {
  if (const auto v = raw(key)) {
    std::vector<double> out;
    for (const auto &item : split_list(*v)) out.push_back(parse_double(key, item));
    return record(key, *v, out);
  }
  return record(key, join(fallback, format_double), fallback);
}

std::vector<std::size_t> Config::get_sizes(const std::string &key, const std::vector<std::size_t> &fallback) {
  if (const auto v = raw(key)) {
    std::vector<std::size_t> out;
    for (const auto &item : split_list(*v)) out.push_back(parse_size(key, item));
    return record(key, *v, out);
  }
  return record(key, join(fallback, [](std::size_t s) { return std::to_string(s); }), fallback);
}

std::vector<std::string> Config::get_strings(const std::string &key, const std::vector<std::string> &fallback) {
  if (const auto v = raw(key)) return record(key, *v, split_list(*v));
  return record(key, join(fallback, [](const std::string &s) { return s; }), fallback);
}

void Config::reject_unknown() const {
  std::vector<std::string> unknown;
  for (const auto &[key, value] : values_)
    if (!resolved_.contains(key)) unknown.push_back(key);
  if (unknown.empty()) return;
  std::string msg = "unknown config key";
  msg += unknown.size() > 1 ? "s: " : ": ";
  for (std::size_t i = 0; i < unknown.size(); ++i) {
    msg += (i ? ", " : "") + unknown[i];
    if (const auto it = lines_.find(unknown[i]); it != lines_.end()) msg += " (line " + std::to_string(it->second) + ")";
  }
  throw ConfigError(msg);
}

std::string Config::resolved_text() const {
  std::string out;
  for (const auto &[key, value] : resolved_) out += key + " = " + value + "\n";
  return out;
}

} // namespace vdt
