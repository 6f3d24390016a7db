// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Regression error metrics and predictive-interval diagnostics.
 */
#pragma once

#include "vdt/numkit.hpp"
#include "vdt/varlayer.hpp"

#include <string>
#include <vector>

namespace vdt {

struct MetricReport {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;   ///< NaN when the truth is constant (see r2_defined)
  double mape = 0.0; ///< fraction, not percent
  bool r2_defined = true;
  bool has_interval = false;
  double coverage = 0.0;
  double width = 0.0;
};

inline constexpr double kMapeEpsilon = 1e-8;

/// MAE, MSE, RMSE, R² and MAPE of paired vectors.
MetricReport compute_metrics(std::span<const double> y, std::span<const double> yhat);
/// One report per column.
std::vector<MetricReport> compute_metrics(const Tensor2 &y, const Tensor2 &yhat);

struct IntervalDiagnostics {
  double coverage = 0.0; ///< fraction of truths with lower <= y <= upper
  double width = 0.0;    ///< mean(upper - lower)
};

IntervalDiagnostics interval_diagnostics(std::span<const double> y, std::span<const double> lower,
                                         std::span<const double> upper);
/// Per-column diagnostics against a predictive summary (same N×O shape as y).
std::vector<IntervalDiagnostics> interval_diagnostics(const Tensor2 &y, const PredictiveSummary &summary);

/// Reports with mean and interval diagnostics per output column.
std::vector<MetricReport> evaluate_summary(const Tensor2 &y, const PredictiveSummary &summary);

/// JSON object with the fixed key set (mae, mse, rmse, r2, mape, coverage, width).
std::string to_json(const MetricReport &m);

} // namespace vdt
