// SPDX-License-Identifier: Apache-2.0
#include "vdt/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vdt {

MetricReport compute_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size())
    throw std::invalid_argument("metrics: length mismatch " + std::to_string(y.size()) + " vs " +
                                std::to_string(yhat.size()));
  if (y.empty()) throw std::invalid_argument("metrics: empty input");
  const double n = static_cast<double>(y.size());
  const double ybar = mean(y);
  double abs_sum = 0.0, sq_sum = 0.0, tot = 0.0, pct = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    tot += (y[i] - ybar) * (y[i] - ybar);
    pct += std::abs(e) / std::max(std::abs(y[i]), kMapeEpsilon);
  }
  MetricReport m;
  m.mae = abs_sum / n;
  m.mse = sq_sum / n;
  m.rmse = std::sqrt(m.mse);
  m.mape = pct / n;
  if (tot > 0.0) {
    m.r2 = 1.0 - sq_sum / tot;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.r2_defined = false;
  }
  return m;
}

std::vector<MetricReport> compute_metrics(const Tensor2 &y, const Tensor2 &yhat) {
  if (!y.same_shape(yhat))
    throw std::invalid_argument("metrics: shape mismatch " + y.shape_string() + " vs " + yhat.shape_string());
  std::vector<MetricReport> out;
  for (std::size_t c = 0; c < y.cols(); ++c) out.push_back(compute_metrics(y.column_values(c), yhat.column_values(c)));
  return out;
}

IntervalDiagnostics interval_diagnostics(std::span<const double> y, std::span<const double> lower,
                                         std::span<const double> upper) {
  if (y.size() != lower.size() || y.size() != upper.size())
    throw std::invalid_argument("interval_diagnostics: length mismatch");
  if (y.empty()) throw std::invalid_argument("interval_diagnostics: empty input");
  std::size_t inside = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (lower[i] <= y[i] && y[i] <= upper[i]) ++inside;
    width += upper[i] - lower[i];
  }
  const double n = static_cast<double>(y.size());
  return {static_cast<double>(inside) / n, width / n};
}

std::vector<IntervalDiagnostics> interval_diagnostics(const Tensor2 &y, const PredictiveSummary &summary) {
  if (!y.same_shape(summary.lower))
    throw std::invalid_argument("interval_diagnostics: shape mismatch " + y.shape_string() + " vs " +
                                summary.lower.shape_string());
  std::vector<IntervalDiagnostics> out;
  for (std::size_t c = 0; c < y.cols(); ++c)
    out.push_back(interval_diagnostics(y.column_values(c), summary.lower.column_values(c),
                                       summary.upper.column_values(c)));
  return out;
}

std::vector<MetricReport> evaluate_summary(const Tensor2 &y, const PredictiveSummary &summary) {
  auto reports = compute_metrics(y, summary.mean);
  const auto diag = interval_diagnostics(y, summary);
  for (std::size_t c = 0; c < reports.size(); ++c) {
    reports[c].has_interval = true;
    reports[c].coverage = diag[c].coverage;
    reports[c].width = diag[c].width;
  }
  return reports;
}

std::string to_json(const MetricReport &m) {
  nlohmann::json j;
  j["mae"] = m.mae;
  j["mse"] = m.mse;
  j["rmse"] = m.rmse;
  j["r2"] = m.r2_defined ? nlohmann::json(m.r2) : nlohmann::json(nullptr);
  j["mape"] = m.mape;
  if (m.has_interval) {
    j["coverage"] = m.coverage;
    j["width"] = m.width;
  }
  return j.dump();
}

} // namespace vdt
