// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth.hpp
 * @brief  Seeded synthetic stand-ins for the four case-study datasets.
 */
#pragma once

#include "vdt/active.hpp"
#include "vdt/pinn.hpp"
#include "vdt/sensorcat.hpp"

#include <string>
#include <vector>

namespace vdt {

enum class SynthKind : std::uint8_t { chf_like, seasonal_grid, sensor_field, degrading_cell };
SynthKind parse_synth_kind(const std::string &name);
std::string to_string(SynthKind k);

struct ChfSpec {
  std::size_t rows = 4000;
  double noise = 0.02; ///< relative (heteroscedastic) noise scale, 0 = noiseless
  std::uint64_t seed = 0;
};

/// Columns D (mm), L (m), P (kPa), G (kg/m²s), Tin (°C) → CHF (kW/m²).
/// Inputs are drawn skewed toward their modes; high mass flux is rare and
/// carries the largest heat fluxes.
ActiveData synth_chf(const ChfSpec &spec);
/// Noise-free CHF surface at the given inputs (rows of D, L, P, G, Tin).
std::vector<double> chf_surface(const Tensor2 &x);
inline const std::vector<std::string> kChfColumns{"D", "L", "P", "G", "Tin", "CHF"};

struct SeasonalSpec {
  std::size_t steps_per_day = 24;
  std::size_t days = 60;
  std::size_t days_per_year = 60; ///< length of the slow seasonal cycle
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Columns ghi, wind_speed, solar, wind; rows are time steps.
Tensor2 synth_seasonal(const SeasonalSpec &spec);
inline const std::vector<std::string> kSeasonalColumns{"ghi", "wind_speed", "solar", "wind"};

struct SensorFieldSpec {
  std::size_t sensors = 60; ///< per quantity (M); 2·M channels total
  double duration = 3600.0; ///< seconds
  double spacing = 1.0;     ///< native sample spacing (s)
  double noise = 0.5;       ///< °C
  std::uint64_t seed = 0;
};

struct SensorField {
  std::vector<SensorSeries> solid; ///< "TS_<i>"
  std::vector<SensorSeries> fluid; ///< "TF_<i>"
};

/// Cooldown ramps with a sensor-specific transient, sampled at the native spacing.
SensorField synth_sensor_field(const SensorFieldSpec &spec);

struct CellSpec {
  std::size_t discharges = 200;
  std::size_t steps = 60;
  double dt = 30.0;
  double capacity_fade = 0.002;     ///< per discharge
  double resistance_growth = 0.01;  ///< per discharge
  double noise = 0.005;             ///< volts
  EcmConstants ecm{};
  std::uint64_t seed = 0;
};

/// Discharges of the reference cell under random-walk currents in [0.5, 2.5] A.
std::vector<DischargeProfile> synth_degrading_cell(const CellSpec &spec);

} // namespace vdt
