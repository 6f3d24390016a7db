// SPDX-License-Identifier: Apache-2.0
#include "vdt/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vdt {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Tensor2: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor2 Tensor2::row(std::span<const double> values) {
  return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

Tensor2 Tensor2::column(std::span<const double> values) {
  return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

std::vector<double> Tensor2::column_values(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Tensor2 Tensor2::select_rows(std::span<const std::size_t> rows) const {
  Tensor2 out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

Tensor2 Tensor2::select_cols(std::span<const std::size_t> cols) const {
  Tensor2 out(rows_, cols.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = (*this)(r, cols[j]);
  return out;
}

Tensor2 Tensor2::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) throw std::out_of_range("Tensor2::slice_rows: bad range");
  return {end - begin, cols_,
          std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                              data_.begin() + static_cast<std::ptrdiff_t>(end * cols_))};
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
  std::ostringstream os;
  os << '(' << rows_ << 'x' << cols_ << ')';
  return os.str();
}

Tensor2 vstack(std::span<const Tensor2> blocks) {
  if (blocks.empty()) return {};
  const std::size_t cols = blocks.front().cols();
  std::size_t rows = 0;
  for (const auto &b : blocks) {
    if (b.cols() != cols) throw std::invalid_argument("vstack: column mismatch");
    rows += b.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto &b : blocks) data.insert(data.end(), b.values().begin(), b.values().end());
  return {rows, cols, std::move(data)};
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id),
      key_(mix64(seed ^ mix64(stream_id + kGamma))) {}

RngStream RngStream::derive(std::uint64_t child_id) const {
  return RngStream(seed_, mix64(stream_id_ + kGamma * (child_id + 1)));
}

std::uint64_t RngStream::next_u64() { return mix64(key_ + kGamma * (++counter_)); }

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
  // Rejection sampling.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform(); // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::vector<double> gaussian_draw(RngStream stream, std::size_t n) {
  std::vector<double> out(n);
  for (auto &v : out) v = stream.normal();
  return out;
}

void shuffle_indices(std::span<std::size_t> idx, RngStream &stream) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

// ---------------------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("empty sample set");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0,1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("empty sample set");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, p);
}

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

StandardScaler::StandardScaler(std::vector<double> means, std::vector<double> stds)
    : means_(std::move(means)), stds_(std::move(stds)) {
  if (means_.size() != stds_.size()) throw std::invalid_argument("StandardScaler: width mismatch");
  for (auto &s : stds_) s = std::max(s, kStdFloor);
}

StandardScaler StandardScaler::fit(const Tensor2 &x) {
  if (x.empty()) throw std::invalid_argument("fit_scaler: empty matrix");
  std::vector<double> means(x.cols()), stds(x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const auto col = x.column_values(c);
    means[c] = mean(col);
    stds[c] = std::sqrt(variance(col));
  }
  return {std::move(means), std::move(stds)};
}

Tensor2 StandardScaler::transform(const Tensor2 &x) const {
  if (x.cols() != width()) throw std::invalid_argument("StandardScaler::transform: width mismatch");
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - means_[c]) / stds_[c];
  return out;
}

Tensor2 StandardScaler::inverse(const Tensor2 &z) const {
  if (z.cols() != width()) throw std::invalid_argument("StandardScaler::inverse: width mismatch");
  Tensor2 out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < z.cols(); ++c) out(r, c) = z(r, c) * stds_[c] + means_[c];
  return out;
}

StandardScaler StandardScaler::subset(std::span<const std::size_t> cols) const {
  std::vector<double> m, s;
  for (auto c : cols) {
    m.push_back(means_.at(c));
    s.push_back(stds_.at(c));
  }
  return {std::move(m), std::move(s)};
}

StandardScaler fit_scaler(const Tensor2 &x) { return StandardScaler::fit(x); }

} // namespace vdt
