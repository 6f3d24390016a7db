// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dataio.hpp
 * @brief  CSV ingestion and the file formats written by the generators.
 */
#pragma once

#include "vdt/pinn.hpp"
#include "vdt/sensorcat.hpp"
#include "vdt/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vdt {

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Layout : std::uint8_t {
  tabular,    ///< rows with unparseable cells are dropped
  timeseries  ///< unparseable cells are forward-filled, then back-filled
};
Layout parse_layout(const std::string &name);

struct TableSchema {
  std::vector<std::string> features;
  std::vector<std::string> targets;
  Layout layout = Layout::tabular;
};

struct Table {
  std::vector<std::string> columns; ///< features then targets
  Tensor2 data;                     ///< rows × columns, same order
  std::size_t feature_count = 0;
  std::size_t imputed = 0;          ///< cells filled (time series)
  std::size_t dropped = 0;          ///< rows removed (tabular)

  Tensor2 features() const;
  Tensor2 targets() const;
};

/// Header row plus raw cells; empty file and ragged rows throw DataError.
struct CsvText {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvText parse_csv(const std::string &text, const std::string &origin = "csv");
CsvText read_csv(const std::filesystem::path &path);

/// Selects the declared columns; missing ones are all named in the error.
Table make_table(const CsvText &csv, const TableSchema &schema, const std::string &origin = "csv");
Table load_table(const std::filesystem::path &path, const TableSchema &schema);

/// Header line plus rows, shortest round-trip formatting.
std::string to_csv(const std::vector<std::string> &header, const Tensor2 &data);

// ---- battery: discharge_id, t, current, voltage ---------------------------------------

std::string battery_csv(std::span<const DischargeProfile> profiles);
/// Groups rows by discharge_id in order of first appearance.
std::vector<DischargeProfile> parse_battery(const CsvText &csv);
std::vector<DischargeProfile> load_battery(const std::filesystem::path &path);

// ---- sensors: timestamp column, then one column per sensor ------------------------------

std::string sensor_csv(const SensorField &field);
/// Sensor columns whose names start with `prefix`, in file order.
std::vector<SensorSeries> sensor_group(const CsvText &csv, const std::string &prefix,
                                       const std::string &time_column = "timestamp");

} // namespace vdt
