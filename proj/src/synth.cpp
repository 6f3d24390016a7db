// SPDX-License-Identifier: Apache-2.0
#include "vdt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vdt {

namespace {

constexpr std::uint64_t kChfStream = 0x434846ULL;           // "CHF"
constexpr std::uint64_t kSeasonStream = 0x53454153ULL;      // "SEAS"
constexpr std::uint64_t kFieldStream = 0x4649454C44ULL;     // "FIELD"
constexpr std::uint64_t kCellStream = 0x43454C4CULL;        // "CELL"

/// Triangular variate on [0, 1] with the given mode.
double triangular(RngStream &rng, double mode) {
  const double u = rng.uniform();
  return u < mode ? std::sqrt(u * mode) : 1.0 - std::sqrt((1.0 - u) * (1.0 - mode));
}

struct Range {
  double lo, hi;
  double at(double u) const { return lo + u * (hi - lo); }
  double unit(double v) const { return (v - lo) / (hi - lo); }
};

constexpr Range kD{2.39, 16.0}, kL{0.07, 15.0}, kP{100.0, 20000.0}, kG{17.7, 7712.0}, kTin{9.0, 353.62};

double chf_value(double d, double l, double p, double g, double t) {
  const double pi = std::numbers::pi;
  const double main = 9000.0 * g * g * (1.3 - 0.8 * d) * (1.0 - 0.5 * p) * (1.0 - 0.3 * t) / (1.0 + l);
  const double ridge = 4000.0 * g * g * std::sin(3.0 * pi * p + 2.0 * pi * d) * (1.0 - 0.5 * l);
  const double subcooled = 900.0 * (1.0 - t) * (1.0 - p) * std::exp(-3.0 * l);
  return 2600.0 + main + ridge + subcooled;
}

} // namespace

SynthKind parse_synth_kind(const std::string &name) {
  if (name == "chf_like") return SynthKind::chf_like;
  if (name == "seasonal_grid") return SynthKind::seasonal_grid;
  if (name == "sensor_field") return SynthKind::sensor_field;
  if (name == "degrading_cell") return SynthKind::degrading_cell;
  throw std::invalid_argument("unknown synth kind '" + name + "'");
}

std::string to_string(SynthKind k) {
  switch (k) {
  case SynthKind::chf_like: return "chf_like";
  case SynthKind::seasonal_grid: return "seasonal_grid";
  case SynthKind::sensor_field: return "sensor_field";
  case SynthKind::degrading_cell: return "degrading_cell";
  }
  return "?";
}

std::vector<double> chf_surface(const Tensor2 &x) {
  if (x.cols() != 5) throw std::invalid_argument("chf_surface: expected 5 input columns");
  std::vector<double> y(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    y[r] = chf_value(kD.unit(x(r, 0)), kL.unit(x(r, 1)), kP.unit(x(r, 2)), kG.unit(x(r, 3)), kTin.unit(x(r, 4)));
  return y;
}

ActiveData synth_chf(const ChfSpec &spec) {
  if (spec.rows == 0) throw std::invalid_argument("synth_chf: rows must be >= 1");
  if (spec.noise < 0.0) throw std::invalid_argument("synth_chf: noise must be non-negative");
  RngStream rng(spec.seed, kChfStream);
  RngStream noise = rng.derive(1);
  ActiveData out{Tensor2(spec.rows, 5), Tensor2(spec.rows, 1)};
  for (std::size_t r = 0; r < spec.rows; ++r) {
    out.x(r, 0) = kD.at(triangular(rng, kD.unit(8.0)));
    out.x(r, 1) = kL.at(triangular(rng, kL.unit(3.0)));
    out.x(r, 2) = kP.at(triangular(rng, kP.unit(9800.0)));
    out.x(r, 3) = kG.at(std::pow(rng.uniform(), 5.0));
    out.x(r, 4) = kTin.at(triangular(rng, kTin.unit(279.86)));
  }
  const auto clean = chf_surface(out.x);
  for (std::size_t r = 0; r < spec.rows; ++r) out.y[r] = clean[r] * (1.0 + spec.noise * noise.normal());
  return out;
}

Tensor2 synth_seasonal(const SeasonalSpec &spec) {
  if (spec.steps_per_day == 0 || spec.days == 0 || spec.days_per_year == 0)
    throw std::invalid_argument("synth_seasonal: sizes must be >= 1");
  const double pi = std::numbers::pi;
  RngStream rng(spec.seed, kSeasonStream);
  const std::size_t n = spec.steps_per_day * spec.days;
  Tensor2 out(n, 4);
  double cloud = 0.85, speed = 5.0;
  bool windy = false;
  for (std::size_t k = 0; k < n; ++k) {
    const double hour = 24.0 * static_cast<double>(k % spec.steps_per_day) / static_cast<double>(spec.steps_per_day);
    const double season = 2.0 * pi * static_cast<double>(k / spec.steps_per_day) / static_cast<double>(spec.days_per_year);
    cloud = std::clamp(0.9 * cloud + 0.1 * 0.85 + 0.05 * rng.normal(), 0.5, 1.0);
    const double ghi = std::max(0.0, std::sin(pi * (hour - 6.0) / 12.0)) * (0.75 + 0.25 * std::cos(season)) * cloud;
    if (rng.uniform() < 0.03) windy = !windy;
    const double target = (windy ? 9.0 : 3.5) + 1.5 * std::sin(season + 1.0);
    speed = std::max(0.0, 0.85 * speed + 0.15 * target + 0.6 * rng.normal());
    out(k, 0) = ghi;
    out(k, 1) = speed;
    out(k, 2) = std::max(0.0, 0.95 * ghi + spec.noise * 0.2 * rng.normal());
    out(k, 3) = std::clamp(std::pow(speed / 12.0, 3.0), 0.0, 1.0) + spec.noise * rng.normal();
  }
  return out;
}

SensorField synth_sensor_field(const SensorFieldSpec &spec) {
  if (spec.sensors == 0) throw std::invalid_argument("synth_sensor_field: sensors must be >= 1");
  if (!(spec.spacing > 0.0 && spec.duration > spec.spacing))
    throw std::invalid_argument("synth_sensor_field: need 0 < spacing < duration");
  RngStream rng(spec.seed, kFieldStream);
  const auto steps = static_cast<std::size_t>(std::floor(spec.duration / spec.spacing));
  SensorField field;
  for (std::size_t i = 0; i < spec.sensors; ++i) {
    RngStream s = rng.derive(i);
    const double z = s.uniform();
    const double t0 = 400.0 + 300.0 * z + 20.0 * s.normal();
    const double t_end = 150.0 + 100.0 * z + 10.0 * s.normal();
    const double tau = 600.0 + 1500.0 * s.uniform();
    const double bump = 30.0 + 40.0 * s.uniform();
    const double t_bump = 600.0 + 1800.0 * s.uniform();
    const double width = 200.0 + 200.0 * s.uniform();
    const double fluid_drop = 50.0 + 30.0 * s.uniform();
    SensorSeries solid{"TS_" + std::to_string(i), {}, {}}, fluid{"TF_" + std::to_string(i), {}, {}};
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * spec.spacing;
      const double pulse = bump * std::exp(-std::pow((t - t_bump) / width, 2.0));
      const double ts = t_end + (t0 - t_end) * std::exp(-t / tau) + pulse;
      const double tf = t_end - 20.0 + (t0 - fluid_drop - t_end + 20.0) * std::exp(-t / (0.8 * tau)) + 0.7 * pulse;
      solid.t.push_back(t);
      fluid.t.push_back(t);
      solid.values.push_back(ts + spec.noise * s.normal());
      fluid.values.push_back(tf + spec.noise * s.normal());
    }
    field.solid.push_back(std::move(solid));
    field.fluid.push_back(std::move(fluid));
  }
  return field;
}

std::vector<DischargeProfile> synth_degrading_cell(const CellSpec &spec) {
  if (spec.discharges == 0 || spec.steps < 2) throw std::invalid_argument("synth_degrading_cell: need >= 1 discharge of >= 2 steps");
  RngStream rng(spec.seed, kCellStream);
  std::vector<DischargeProfile> out;
  for (std::size_t k = 0; k < spec.discharges; ++k) {
    RngStream s = rng.derive(k);
    DischargeProfile p;
    p.id = static_cast<int>(k);
    double i = 0.5 + 2.0 * s.uniform();
    for (std::size_t n = 0; n < spec.steps; ++n) {
      p.t.push_back(static_cast<double>(n) * spec.dt);
      p.current.push_back(i);
      i = std::clamp(i + 0.25 * s.normal(), 0.5, 2.5);
    }
    ReferenceCell cell(spec.ecm, {spec.capacity_fade, spec.resistance_growth}, k);
    p.voltage = simulate_voltage(cell, spec.ecm, p.current, spec.dt);
    for (double &v : p.voltage) v += spec.noise * s.normal();
    out.push_back(std::move(p));
  }
  return out;
}

} // namespace vdt
