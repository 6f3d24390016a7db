// SPDX-License-Identifier: Apache-2.0
#include "vdt/sensorcat.hpp"
#include "vdt/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace vdt;

namespace {

SensorSeries series(const std::string &id, std::vector<double> values, double spacing = 1.0) {
  SensorSeries s{id, {}, std::move(values)};
  for (std::size_t i = 0; i < s.values.size(); ++i) s.t.push_back(spacing * static_cast<double>(i));
  return s;
}

// Reference trace of the zig-zag pass rule over already sorted bins.
std::vector<std::size_t> reference_zigzag(std::vector<std::vector<std::size_t>> bins) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> lo(bins.size(), 0), hi;
  for (const auto &b : bins) hi.push_back(b.size());
  for (std::size_t c = 0;; ++c) {
    bool any = false;
    for (std::size_t k = 0; k < bins.size(); ++k) {
      if (lo[k] == hi[k]) continue;
      any = true;
      out.push_back(c % 2 == 0 ? bins[k][lo[k]++] : bins[k][--hi[k]]);
    }
    if (!any) break;
  }
  return out;
}

} // namespace

TEST(Downsample, ConstantStaysConstant) {
  const auto d = downsample(series("a", std::vector<double>(100, 4.2)), 30.0);
  EXPECT_EQ(d.values.size(), 4u);
  for (double v : d.values) EXPECT_DOUBLE_EQ(v, 4.2);
}

TEST(Downsample, TwoHertzMinute) {
  std::vector<double> v(120);
  std::iota(v.begin(), v.end(), 0.0);
  const auto d = downsample(series("a", v, 0.5), 30.0);
  ASSERT_EQ(d.values.size(), 2u);
  EXPECT_DOUBLE_EQ(d.values[0], 29.5);
  EXPECT_DOUBLE_EQ(d.values[1], 89.5);
  EXPECT_EQ(d.t, (std::vector<double>{0.0, 30.0}));
}

TEST(Downsample, WholeDurationIsGlobalMean) {
  std::vector<double> v{1, 5, 2, 8, 4};
  const auto d = downsample(series("a", v), 5.0);
  ASSERT_EQ(d.values.size(), 1u);
  EXPECT_DOUBLE_EQ(d.values[0], 4.0);
}

TEST(Downsample, PartialTrailingBlockKept) {
  const auto d = downsample(series("a", {1, 2, 3, 4, 5}), 2.0);
  EXPECT_EQ(d.values, (std::vector<double>{1.5, 3.5, 5.0}));
}

TEST(Downsample, Errors) {
  EXPECT_THROW(downsample(series("a", {}), 30.0), std::invalid_argument);
  EXPECT_THROW(downsample(series("a", {1, 2, 3}, 30.0), 30.0), std::invalid_argument);
}

TEST(Bins, MedianEdge) {
  const std::vector<double> means{10, 20, 30, 40};
  const auto bins = bin_sensors(means, 2);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(bins[1], (std::vector<std::size_t>{2, 3}));
}

TEST(Bins, FewerSensorsThanBins) {
  const std::vector<double> means{3.0, 1.0, 2.0};
  const auto bins = bin_sensors(means, 10);
  std::vector<std::size_t> all;
  std::size_t empty = 0;
  for (const auto &b : bins) {
    all.insert(all.end(), b.begin(), b.end());
    empty += b.empty();
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_GE(empty, 7u);
}

TEST(Bins, EqualMeansKeepInputOrder) {
  const std::vector<double> means(6, 5.0);
  const auto bins = bin_sensors(means, 4);
  EXPECT_EQ(bins[0], (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  for (std::size_t k = 1; k < 4; ++k) EXPECT_TRUE(bins[k].empty());
}

TEST(Zigzag, HandTraces) {
  const std::vector<double> one{1, 2, 3};
  EXPECT_EQ(zigzag_order(bin_sensors(one, 1)), (std::vector<std::size_t>{0, 2, 1}));
  const std::vector<double> four{10, 20, 30, 40};
  EXPECT_EQ(zigzag_order(bin_sensors(four, 2)), (std::vector<std::size_t>{0, 2, 1, 3}));
  const std::vector<double> single{7};
  EXPECT_EQ(zigzag_order(bin_sensors(single, 10)), (std::vector<std::size_t>{0}));
}

TEST(Zigzag, RandomInstancesArePermutationsAndAlternate) {
  RngStream rng(1, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(60), k = 1 + rng.below(12);
    std::vector<double> means(n);
    for (double &m : means) m = rng.below(4) == 0 ? 1.0 : rng.normal();
    const auto bins = bin_sensors(means, k);
    const auto order = zigzag_order(bins);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    ASSERT_EQ(sorted, ids);
    EXPECT_EQ(order, reference_zigzag(bins));
    EXPECT_EQ(order, zigzag_order(bin_sensors(means, k)));
    for (const auto &b : bins) {
      for (std::size_t i = 1; i < b.size(); ++i) EXPECT_LE(means[b[i - 1]], means[b[i]]);
      std::vector<std::size_t> sub;
      for (std::size_t s : order)
        if (std::find(b.begin(), b.end(), s) != b.end()) sub.push_back(s);
      std::size_t lo = 0, hi = b.size();
      for (std::size_t i = 0; i < sub.size(); ++i) EXPECT_EQ(sub[i], i % 2 == 0 ? b[lo++] : b[--hi]);
    }
  }
}

TEST(Signal, LengthsAndBoundaries) {
  const std::vector<SensorSeries> s{series("a", {1, 2, 3}), series("b", {4, 5, 6, 7, 8})};
  const std::vector<std::size_t> order{0, 1};
  const auto sig = build_signal(s, order);
  EXPECT_EQ(sig.values.size(), 8u);
  EXPECT_EQ(sig.boundaries, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(sig.values, (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(sig.position[2], 1.0);
  EXPECT_EQ(sig.position[3], 0.0);
}

TEST(Signal, ConservesValues) {
  RngStream rng(2, 2);
  std::vector<SensorSeries> s;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < 9; ++i) {
    std::vector<double> v(1 + rng.below(20));
    for (double &x : v) {
      x = rng.normal();
      sum += x;
      sum2 += x * x;
    }
    s.push_back(series("s" + std::to_string(i), v));
  }
  const auto sig = build_signal(s, structured_order(s, 3));
  double got = 0.0, got2 = 0.0;
  for (double x : sig.values) {
    got += x;
    got2 += x * x;
  }
  EXPECT_NEAR(got, sum, 1e-12);
  EXPECT_NEAR(got2, sum2, 1e-12);
  for (std::size_t i = 1; i < sig.boundaries.size(); ++i) EXPECT_LT(sig.boundaries[i - 1], sig.boundaries[i]);
}

TEST(Signal, RejectsBadOrders) {
  const std::vector<SensorSeries> s{series("a", {1}), series("b", {2})};
  EXPECT_THROW(build_signal(s, std::vector<std::size_t>{0, 0}), std::invalid_argument);
  EXPECT_THROW(build_signal(s, std::vector<std::size_t>{0}), std::invalid_argument);
  EXPECT_THROW(build_signal(s, std::vector<std::size_t>{0, 2}), std::invalid_argument);
}

TEST(Wiring, OrdinalAndJointShapes) {
  const std::vector<SensorSeries> a{series("TS_0", {1, 2, 3}), series("TS_1", {7, 8, 9})};
  const std::vector<SensorSeries> b{series("TF_0", {0.1, 0.2, 0.3}), series("TF_1", {0.7, 0.8, 0.9})};
  const std::vector<std::size_t> order{1, 0};
  const Tensor2 ord = wiring_series(a, {}, order, Wiring::ordinal);
  EXPECT_EQ(ord.rows(), 6u);
  EXPECT_EQ(ord(0, 0), 7.0);
  EXPECT_EQ(ord(1, 1), 0.5);
  const Tensor2 joint = wiring_series(a, b, order, Wiring::joint);
  EXPECT_EQ(joint(3, 0), 1.0);
  EXPECT_EQ(joint(3, 1), 0.1);
  EXPECT_EQ(parse_wiring("joint"), Wiring::joint);
  EXPECT_THROW(parse_wiring("both"), std::invalid_argument);
}

TEST(Field, SynthIsDeterministic) {
  SensorFieldSpec spec;
  spec.sensors = 3;
  spec.duration = 120.0;
  spec.seed = 4;
  const auto a = synth_sensor_field(spec), b = synth_sensor_field(spec);
  EXPECT_EQ(a.solid[2].values, b.solid[2].values);
  EXPECT_EQ(a.fluid[0].id, "TF_0");
  EXPECT_EQ(a.solid[0].values.size(), 120u);
}
