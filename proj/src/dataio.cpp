// SPDX-License-Identifier: Apache-2.0
#include "vdt/dataio.hpp"

#include "vdt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace vdt {

namespace {

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  s.erase(0, b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_line(const std::string &line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(strip(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_cell(const std::string &s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::size_t column_index(const CsvText &csv, const std::string &name, const std::string &origin) {
  for (std::size_t j = 0; j < csv.header.size(); ++j)
    if (csv.header[j] == name) return j;
  throw DataError(origin + ": missing column: " + name);
}

double require_cell(const CsvText &csv, std::size_t row, std::size_t col) {
  const auto v = parse_cell(csv.rows[row][col]);
  if (!v)
    throw DataError("row " + std::to_string(row + 2) + ", column " + csv.header[col] + ": cannot parse '" +
                    csv.rows[row][col] + "'");
  return *v;
}

} // namespace

Layout parse_layout(const std::string &name) {
  if (name == "tabular") return Layout::tabular;
  if (name == "timeseries") return Layout::timeseries;
  throw DataError("unknown layout '" + name + "'");
}

Tensor2 Table::features() const {
  std::vector<std::size_t> cols(feature_count);
  for (std::size_t j = 0; j < feature_count; ++j) cols[j] = j;
  return data.select_cols(cols);
}

Tensor2 Table::targets() const {
  std::vector<std::size_t> cols;
  for (std::size_t j = feature_count; j < columns.size(); ++j) cols.push_back(j);
  return data.select_cols(cols);
}

CsvText parse_csv(const std::string &text, const std::string &origin) {
  CsvText csv;
  std::istringstream is(text);
  std::string line;
  bool header = true;
  for (std::size_t n = 1; std::getline(is, line); ++n) {
    if (strip(line).empty()) continue;
    auto cells = split_line(line);
    if (header) {
      csv.header = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != csv.header.size())
      throw DataError(origin + ": line " + std::to_string(n) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(csv.header.size()));
    csv.rows.push_back(std::move(cells));
  }
  if (header) throw DataError(origin + ": empty file");
  if (csv.rows.empty()) throw DataError(origin + ": no data rows");
  return csv;
}

CsvText read_csv(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

Table make_table(const CsvText &csv, const TableSchema &schema, const std::string &origin) {
  Table table;
  table.columns = schema.features;
  table.columns.insert(table.columns.end(), schema.targets.begin(), schema.targets.end());
  table.feature_count = schema.features.size();
  if (table.columns.empty()) throw DataError(origin + ": no columns declared");
  std::vector<std::string> missing;
  std::vector<std::size_t> idx;
  for (const auto &name : table.columns) {
    std::size_t j = 0;
    while (j < csv.header.size() && csv.header[j] != name) ++j;
    if (j == csv.header.size()) missing.push_back(name);
    idx.push_back(j);
  }
  if (!missing.empty()) {
    std::string msg = origin + ": missing column" + (missing.size() > 1 ? "s: " : ": ");
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
    throw DataError(msg);
  }

  const std::size_t width = idx.size();
  std::vector<std::vector<std::optional<double>>> cells(csv.rows.size(), std::vector<std::optional<double>>(width));
  for (std::size_t r = 0; r < csv.rows.size(); ++r)
    for (std::size_t j = 0; j < width; ++j) cells[r][j] = parse_cell(csv.rows[r][idx[j]]);

  if (schema.layout == Layout::tabular) {
    std::vector<double> flat;
    std::size_t kept = 0;
    for (const auto &row : cells) {
      bool ok = true;
      for (const auto &c : row) ok = ok && c.has_value();
      if (!ok) {
        ++table.dropped;
        continue;
      }
      for (const auto &c : row) flat.push_back(*c);
      ++kept;
    }
    if (kept == 0) throw DataError(origin + ": no complete rows");
    table.data = Tensor2(kept, width, std::move(flat));
    return table;
  }

  table.data = Tensor2(cells.size(), width);
  for (std::size_t j = 0; j < width; ++j) {
    std::optional<double> last;
    std::size_t first_valid = cells.size();
    for (std::size_t r = 0; r < cells.size(); ++r) {
      if (cells[r][j]) {
        last = cells[r][j];
        if (first_valid == cells.size()) first_valid = r;
      } else if (last) {
        ++table.imputed;
      }
      if (last) table.data(r, j) = *last;
    }
    if (first_valid == cells.size()) throw DataError(origin + ": column " + table.columns[j] + " has no valid cells");
    for (std::size_t r = 0; r < first_valid; ++r) {
      table.data(r, j) = *cells[first_valid][j];
      ++table.imputed;
    }
  }
  return table;
}

Table load_table(const std::filesystem::path &path, const TableSchema &schema) {
  return make_table(read_csv(path), schema, path.string());
}

std::string to_csv(const std::vector<std::string> &header, const Tensor2 &data) {
  if (header.size() != data.cols()) throw std::invalid_argument("to_csv: header width differs from data");
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < data.cols(); ++j) out += (j ? "," : "") + format_double(data(r, j));
    out += '\n';
  }
  return out;
}

std::string battery_csv(std::span<const DischargeProfile> profiles) {
  std::string out = "discharge_id,t,current,voltage\n";
  for (const auto &p : profiles) {
    p.validate();
    for (std::size_t n = 0; n < p.size(); ++n)
      out += std::to_string(p.id) + ',' + format_double(p.t[n]) + ',' + format_double(p.current[n]) + ',' +
             format_double(p.voltage[n]) + '\n';
  }
  return out;
}

std::vector<DischargeProfile> parse_battery(const CsvText &csv) {
  const std::size_t id = column_index(csv, "discharge_id", "battery csv");
  const std::size_t t = column_index(csv, "t", "battery csv");
  const std::size_t cur = column_index(csv, "current", "battery csv");
  const std::size_t volt = column_index(csv, "voltage", "battery csv");
  std::vector<DischargeProfile> out;
  std::map<long long, std::size_t> slot;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const double raw_id = require_cell(csv, r, id);
    const auto key = std::llround(raw_id);
    auto [it, fresh] = slot.try_emplace(key, out.size());
    if (fresh) {
      out.emplace_back();
      out.back().id = static_cast<int>(key);
    }
    auto &p = out[it->second];
    p.t.push_back(require_cell(csv, r, t));
    p.current.push_back(require_cell(csv, r, cur));
    p.voltage.push_back(require_cell(csv, r, volt));
  }
  for (const auto &p : out) {
    try {
      p.validate();
    } catch (const std::exception &e) {
      throw DataError("discharge " + std::to_string(p.id) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DischargeProfile> load_battery(const std::filesystem::path &path) { return parse_battery(read_csv(path)); }

std::string sensor_csv(const SensorField &field) {
  std::vector<const SensorSeries *> all;
  for (const auto &s : field.solid) all.push_back(&s);
  for (const auto &s : field.fluid) all.push_back(&s);
  if (all.empty()) throw std::invalid_argument("sensor_csv: no sensors");
  std::string out = "timestamp";
  for (const auto *s : all) out += ',' + s->id;
  out += '\n';
  const auto &t = all.front()->t;
  for (const auto *s : all)
    if (s->t != t) throw std::invalid_argument("sensor_csv: sensors must share timestamps");
  for (std::size_t k = 0; k < t.size(); ++k) {
    out += format_double(t[k]);
    for (const auto *s : all) out += ',' + format_double(s->values[k]);
    out += '\n';
  }
  return out;
}

std::vector<SensorSeries> sensor_group(const CsvText &csv, const std::string &prefix, const std::string &time_column) {
  const std::size_t tc = column_index(csv, time_column, "sensor csv");
  std::vector<SensorSeries> out;
  for (std::size_t j = 0; j < csv.header.size(); ++j) {
    if (j == tc || !csv.header[j].starts_with(prefix)) continue;
    SensorSeries s{csv.header[j], {}, {}};
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const auto v = parse_cell(csv.rows[r][j]);
      if (!v) continue;
      s.t.push_back(require_cell(csv, r, tc));
      s.values.push_back(*v);
    }
    if (s.values.empty()) throw DataError("sensor csv: column " + s.id + " has no valid cells");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("sensor csv: no columns with prefix '" + prefix + "'");
  return out;
}

} // namespace vdt
