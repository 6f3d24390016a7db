// SPDX-License-Identifier: Apache-2.0
#include "vdt/active.hpp"
#include "vdt/twinloop.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace vdt;

namespace {

std::vector<std::size_t> iota_vec(std::size_t n, std::size_t start = 0) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), start);
  return v;
}

ActiveData linear_data(std::size_t rows, std::uint64_t seed) {
  RngStream rng(seed, 1);
  ActiveData d{Tensor2(rows, 2), Tensor2(rows, 1)};
  for (std::size_t r = 0; r < rows; ++r) {
    d.x(r, 0) = rng.normal();
    d.x(r, 1) = rng.normal();
    d.y[r] = 1.5 * d.x(r, 0) - 0.5 * d.x(r, 1) + 0.01 * rng.normal();
  }
  return d;
}

ModelFactory tiny_factory() {
  return [] { return std::unique_ptr<VdtModel>(new VariationalFnn("a", {2, 4}, 1, Activation::tanh)); };
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 16;
  t.lr = 1e-2;
  return t;
}

} // namespace

TEST(Acquire, WholePoolWhenSizeEqualsPerIter) {
  AalConfig cfg;
  const auto pool = iota_vec(20, 100);
  RngStream s(1, 1);
  const ScoreFn score = [](std::span<const std::size_t> c) {
    std::vector<double> v(c.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>((i * 7) % 5);
    return v;
  };
  auto got = acquire(score, pool, cfg, s);
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, pool);
}

TEST(Acquire, TiesGoToLowestIndices) {
  AalConfig cfg;
  const auto pool = iota_vec(300, 1000);
  RngStream s(2, 2);
  const ScoreFn flat = [](std::span<const std::size_t> c) { return std::vector<double>(c.size(), 0.3); };
  auto got = acquire(flat, pool, cfg, s);
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, iota_vec(20, 1000));
}

TEST(Acquire, MatchesBruteForceTopK) {
  AalConfig cfg;
  const auto pool = iota_vec(5000);
  std::vector<double> value(5000);
  RngStream vr(3, 3);
  for (double &v : value) v = vr.uniform();
  const ScoreFn score = [&](std::span<const std::size_t> c) {
    std::vector<double> out;
    for (std::size_t i : c) out.push_back(value[i]);
    return out;
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream a(seed, 4), b(seed, 4);
    auto got = acquire(score, pool, cfg, a);
    auto cand = draw_candidates(pool, cfg.candidate_pool, b);
    ASSERT_EQ(cand.size(), 500u);
    std::sort(cand.begin(), cand.end(), [&](std::size_t x, std::size_t y) { return value[x] > value[y]; });
    std::vector<std::size_t> expect(cand.begin(), cand.begin() + 20);
    std::sort(got.begin(), got.end());
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(got, expect);
  }
}

TEST(Acquire, PoolSmallerThanPerIterThrows) {
  AalConfig cfg;
  RngStream s(1, 1);
  const auto pool = iota_vec(19);
  EXPECT_THROW(acquire([](auto c) { return std::vector<double>(c.size()); }, pool, cfg, s), std::invalid_argument);
}

TEST(Acquire, LabeledIndicesNeverReturn) {
  AalConfig cfg;
  cfg.candidate_pool = 60;
  std::vector<std::size_t> unlabeled = iota_vec(400);
  std::set<std::size_t> labeled;
  RngStream s(5, 5), sc(6, 6);
  const ScoreFn score = [&](std::span<const std::size_t> c) {
    std::vector<double> v(c.size());
    for (double &x : v) x = sc.uniform();
    return v;
  };
  while (unlabeled.size() >= cfg.per_iter) {
    const auto cand = draw_candidates(unlabeled, cfg.candidate_pool, s);
    for (std::size_t c : cand) EXPECT_FALSE(labeled.count(c));
    const auto picked = select_top(cand, score(cand), cfg.per_iter);
    for (std::size_t p : picked) EXPECT_TRUE(labeled.insert(p).second);
    std::erase_if(unlabeled, [&](std::size_t i) { return labeled.count(i) > 0; });
  }
  EXPECT_EQ(labeled.size(), 400u);
}

TEST(Trial, SizesGrowByPerIter) {
  const auto data = linear_data(600, 1);
  AalConfig cfg;
  cfg.target_r2 = 1.0;
  cfg.max_iterations = 4;
  cfg.samples = 5;
  cfg.seed = 2;
  const auto split = make_split(600, cfg, RngStream(2, 9));
  EXPECT_EQ(split.test.size(), 120u);
  EXPECT_EQ(split.initial.size(), 10u);
  for (Strategy st : {Strategy::aal, Strategy::random}) {
    const auto curve = run_trial(data, split, cfg, st, tiny_factory(), tiny_train(), RngStream(2, 10));
    ASSERT_EQ(curve.points.size(), 4u);
    std::set<std::uint64_t> hashes;
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      EXPECT_EQ(curve.points[i].size, 10 + 20 * i);
      EXPECT_TRUE(hashes.insert(curve.points[i].labeled_hash).second);
      if (i > 0) {
        EXPECT_GE(curve.points[i].cum_seconds, curve.points[i - 1].cum_seconds);
      }
    }
    EXPECT_FALSE(curve.reached);
  }
}

TEST(Trial, ImmediateStopWhenInitialMeetsTarget) {
  const auto data = linear_data(300, 2);
  AalConfig cfg;
  cfg.target_r2 = 1e-9;
  cfg.samples = 5;
  const auto split = make_split(300, cfg, RngStream(3, 9));
  auto train = tiny_train();
  train.epochs = 60;
  const auto curve = run_trial(data, split, cfg, Strategy::aal, tiny_factory(), train, RngStream(3, 10));
  ASSERT_EQ(curve.points.size(), 1u);
  EXPECT_EQ(curve.points[0].size, 10u);
  EXPECT_TRUE(curve.reached);
  EXPECT_EQ(curve.samples_to_target, 10u);
}

TEST(Trial, DeterministicPerStrategy) {
  const auto data = linear_data(400, 3);
  AalConfig cfg;
  cfg.target_r2 = 1.0;
  cfg.max_iterations = 3;
  cfg.samples = 5;
  const auto split = make_split(400, cfg, RngStream(4, 9));
  for (Strategy st : {Strategy::aal, Strategy::random}) {
    const auto a = run_trial(data, split, cfg, st, tiny_factory(), tiny_train(), RngStream(4, 10));
    const auto b = run_trial(data, split, cfg, st, tiny_factory(), tiny_train(), RngStream(4, 10));
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      EXPECT_EQ(a.points[i].r2, b.points[i].r2);
      EXPECT_EQ(a.points[i].labeled_hash, b.points[i].labeled_hash);
    }
  }
}

TEST(Trial, FixedCandidateBatchMode) {
  const auto data = linear_data(400, 4);
  AalConfig cfg;
  cfg.target_r2 = 1.0;
  cfg.max_iterations = 5;
  cfg.samples = 5;
  cfg.candidate_pool = 50;
  cfg.redraw_candidates = false;
  const auto split = make_split(400, cfg, RngStream(5, 9));
  const auto curve = run_trial(data, split, cfg, Strategy::aal, tiny_factory(), tiny_train(), RngStream(5, 10));
  ASSERT_EQ(curve.points.size(), 5u);
  EXPECT_EQ(curve.points.back().size, 90u);
}

TEST(PairedTrials, JobsDoNotChangeResults) {
  const auto data = linear_data(300, 5);
  AalConfig cfg;
  cfg.target_r2 = 1.0;
  cfg.max_iterations = 2;
  cfg.samples = 5;
  cfg.trials = 3;
  const auto a = run_paired_trials(data, cfg, tiny_factory(), tiny_train(), 1);
  const auto b = run_paired_trials(data, cfg, tiny_factory(), tiny_train(), 3);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a[t].aal.points.back().labeled_hash, b[t].aal.points.back().labeled_hash);
    EXPECT_EQ(a[t].random.points.back().r2, b[t].random.points.back().r2);
    EXPECT_EQ(a[t].aal.points.front().labeled_hash, a[t].random.points.front().labeled_hash);
  }
}

namespace {

LearningCurve curve_of(std::vector<std::pair<std::size_t, double>> pts) {
  LearningCurve c;
  for (auto [s, r] : pts) c.points.push_back({s, r, 0.0, 0});
  return c;
}

} // namespace

TEST(Aggregate, SingleCurve) {
  const auto bands = aggregate_trials({curve_of({{10, 0.2}, {30, 0.5}})});
  ASSERT_EQ(bands.size(), 2u);
  EXPECT_EQ(bands[1].mean, 0.5);
  EXPECT_EQ(bands[0].std, 0.0);
}

TEST(Aggregate, IdenticalCurvesHaveZeroSpread) {
  const auto c = curve_of({{10, 0.2}, {30, 0.5}, {50, 0.7}});
  for (const auto &b : aggregate_trials({c, c})) EXPECT_EQ(b.std, 0.0);
}

TEST(Aggregate, TwoValueBand) {
  const auto bands = aggregate_trials({curve_of({{10, 0.9}}), curve_of({{10, 1.0}})});
  EXPECT_NEAR(bands[0].mean, 0.95, 1e-15);
  EXPECT_NEAR(bands[0].std, 0.05, 1e-15);
}

TEST(Aggregate, ShortCurvesCarryFinalValue) {
  const auto bands = aggregate_trials({curve_of({{10, 0.4}}), curve_of({{10, 0.6}, {30, 0.8}})});
  ASSERT_EQ(bands.size(), 2u);
  EXPECT_NEAR(bands[1].mean, 0.6, 1e-15);
  EXPECT_THROW(aggregate_trials({}), std::invalid_argument);
}
