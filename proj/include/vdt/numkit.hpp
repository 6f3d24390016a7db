// SPDX-License-Identifier: Apache-2.0
/**
 * @file   numkit.hpp
 * @brief  Deterministic numeric kernels: dense matrices, counter-based RNG
 *         streams, Gaussian sampling, quantiles and feature scaling.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vdt {

/// Dense row-major matrix of doubles. Vectors are 1×n or n×1 matrices.
class Tensor2 {
public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 row(std::span<const double> values);
  static Tensor2 column(std::span<const double> values);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  const std::vector<double> &values() const noexcept { return data_; }

  std::vector<double> column_values(std::size_t c) const;
  Tensor2 select_rows(std::span<const std::size_t> rows) const;
  Tensor2 select_cols(std::span<const std::size_t> cols) const;
  Tensor2 slice_rows(std::size_t begin, std::size_t end) const;

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const Tensor2 &other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Tensor2 &, const Tensor2 &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Vertically stacks matrices with equal column counts.
Tensor2 vstack(std::span<const Tensor2> blocks);

/**
 * Counter-based random stream.
 *
 * A stream is identified by (seed, stream_id). Its k-th 64-bit output is the
 * SplitMix64 finalizer applied to key + k*0x9E3779B97F4A7C15, with the key a
 * mixed function of seed and stream_id. Every operation is integer
 * arithmetic, so sequences are identical on all platforms. derive() maps a
 * child id to a fresh stream id through a bijective mix, so distinct
 * children of one parent never share a key.
 */
class RngStream {
public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t position() const noexcept { return counter_; }

  RngStream derive(std::uint64_t child_id) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (pairs are cached).
  double normal();

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

/// n standard-normal variates. Takes the stream by value: the caller's
/// stream is not advanced, so identical calls return identical vectors.
std::vector<double> gaussian_draw(RngStream stream, std::size_t n);

/// Fisher-Yates shuffle driven by the stream.
void shuffle_indices(std::span<std::size_t> idx, RngStream &stream);

/// Linear-interpolation quantile on order statistics: h = (n-1)p.
double quantile(std::span<const double> samples, double p);
/// Same as quantile() for input already sorted ascending.
double quantile_sorted(std::span<const double> sorted, double p);

double mean(std::span<const double> v);
/// Population variance.
double variance(std::span<const double> v);

/// Per-column z-score scaler using the population standard deviation.
class StandardScaler {
public:
  static constexpr double kStdFloor = 1e-12;

  StandardScaler() = default;
  StandardScaler(std::vector<double> means, std::vector<double> stds);

  static StandardScaler fit(const Tensor2 &x);

  Tensor2 transform(const Tensor2 &x) const;
  Tensor2 inverse(const Tensor2 &z) const;

  const std::vector<double> &means() const noexcept { return means_; }
  const std::vector<double> &stds() const noexcept { return stds_; }
  std::size_t width() const noexcept { return means_.size(); }
  /// Scaler restricted to a subset of columns.
  StandardScaler subset(std::span<const std::size_t> cols) const;

private:
  std::vector<double> means_;
  std::vector<double> stds_;
};

StandardScaler fit_scaler(const Tensor2 &x);

} // namespace vdt
