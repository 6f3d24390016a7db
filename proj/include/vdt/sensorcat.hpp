// SPDX-License-Identifier: Apache-2.0
/**
 * @file   sensorcat.hpp
 * @brief  Structured sensor concatenation: block downsampling, quantile
 *         binning of sensor means, zig-zag interleaving and the resulting
 *         1-D training signal.
 */
#pragma once

#include "vdt/metrics.hpp"
#include "vdt/models.hpp"

#include <string>
#include <vector>

namespace vdt {

struct SensorSeries {
  std::string id;
  std::vector<double> t;
  std::vector<double> values;

  double mean() const;
  /// Equal lengths, non-empty, strictly increasing timestamps.
  void validate() const;
};

/// Block means over [t0 + k·interval, t0 + (k+1)·interval); the trailing partial
/// block is kept. Each output time stamp is its block start.
SensorSeries downsample(const SensorSeries &series, double interval = 30.0);

/// K lists of sensor positions. Interior edges are the j/K quantiles of the
/// means; a sensor goes to the bin equal to the number of edges strictly below
/// its mean. Within a bin sensors are sorted ascending by mean, ties by position.
std::vector<std::vector<std::size_t>> bin_sensors(std::span<const double> means, std::size_t bins = 10);

/// Pass c takes the front (c even) or back (c odd) of every nonempty bin in bin order.
std::vector<std::size_t> zigzag_order(std::vector<std::vector<std::size_t>> bins);

struct ConcatSignal {
  std::vector<double> values;
  std::vector<double> position;       ///< j/(len−1) within each sensor segment (0 for len 1)
  std::vector<std::size_t> boundaries; ///< start of each segment
  std::vector<std::size_t> order;      ///< sensor positions in concatenation order
};

/// Concatenates series in `order`; throws on duplicate or missing positions.
ConcatSignal build_signal(std::span<const SensorSeries> series, std::span<const std::size_t> order);

/// means → bins → zig-zag order.
std::vector<std::size_t> structured_order(std::span<const SensorSeries> series, std::size_t bins = 10);

/// How the two recurrent inputs are fed.
enum class Wiring : std::uint8_t {
  joint,   ///< (first quantity, second quantity) → both, aligned by one order
  ordinal  ///< (value, position within segment) → value
};
Wiring parse_wiring(const std::string &name);
std::string to_string(Wiring w);

/// N×2 series for make_sequences. Joint uses the first group's order for both.
Tensor2 wiring_series(std::span<const SensorSeries> first, std::span<const SensorSeries> second,
                      const std::vector<std::size_t> &order, Wiring wiring);

struct DropoutConfig {
  std::vector<double> fractions{1.0, 0.5, 0.1}; ///< share of the training sensors kept
  double test_share = 0.2;                       ///< sensors held out for evaluation
  std::size_t bins = 10;
  std::size_t seq_len = 10;
  std::size_t samples = 100;
  Wiring wiring = Wiring::ordinal;
  TrainConfig train;
  std::uint64_t seed = 0;
};

struct DropoutRow {
  double fraction = 0.0;
  std::size_t sensors = 0;
  MetricReport metrics; ///< first target column, with interval diagnostics
};

/**
 * For each fraction, trains a fresh model on the concatenated signal of that
 * share of the training sensors and evaluates on the held-out sensors'
 * signal. `first` and `second` are the two quantity groups (second may be
 * empty for the ordinal wiring).
 */
std::vector<DropoutRow> dropout_sweep(std::span<const SensorSeries> first, std::span<const SensorSeries> second,
                                      const ModelFactory &factory, const DropoutConfig &cfg);

} // namespace vdt
