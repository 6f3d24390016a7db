// SPDX-License-Identifier: Apache-2.0
#include "vdt/active.hpp"

#include "vdt/metrics.hpp"
#include "vdt/twinloop.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace vdt {

namespace {

constexpr std::uint64_t kSplitStream = 0x53504C4954ULL;  // "SPLIT"
constexpr std::uint64_t kAcquireStream = 0x4143515549ULL; // "ACQUI"
constexpr std::uint64_t kScoreStream = 0x53434F5245ULL;   // "SCORE"

} // namespace

void AalConfig::validate() const {
  if (initial_n == 0) throw std::invalid_argument("AalConfig: initial_n must be >= 1");
  if (per_iter == 0) throw std::invalid_argument("AalConfig: per_iter must be >= 1");
  if (per_iter > candidate_pool) throw std::invalid_argument("AalConfig: per_iter exceeds candidate_pool");
  if (!(target_r2 > 0.0 && target_r2 <= 1.0)) throw std::invalid_argument("AalConfig: target_r2 must be in (0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("AalConfig: test_fraction in (0, 1)");
  if (samples < 2) throw std::invalid_argument("AalConfig: samples must be >= 2");
}

Strategy parse_strategy(const std::string &name) {
  if (name == "aal" || name == "uncertainty") return Strategy::aal;
  if (name == "random") return Strategy::random;
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

std::string to_string(Strategy s) { return s == Strategy::aal ? "aal" : "random"; }

std::vector<std::size_t> draw_candidates(std::span<const std::size_t> unlabeled, std::size_t count,
                                         RngStream &stream) {
  std::vector<std::size_t> pool(unlabeled.begin(), unlabeled.end());
  if (pool.size() <= count) return pool;
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::vector<std::size_t> select_top(std::span<const std::size_t> candidates, std::span<const double> scores,
                                    std::size_t k) {
  if (candidates.size() != scores.size()) throw std::invalid_argument("select_top: score count mismatch");
  if (k > candidates.size()) throw std::invalid_argument("select_top: fewer candidates than requested");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[order[i]]);
  return out;
}

std::vector<std::size_t> acquire(const ScoreFn &score, std::span<const std::size_t> unlabeled, const AalConfig &cfg,
                                 RngStream &stream) {
  if (unlabeled.size() < cfg.per_iter)
    throw std::invalid_argument("acquire: pool of " + std::to_string(unlabeled.size()) + " is smaller than per_iter " +
                                std::to_string(cfg.per_iter));
  const auto candidates = draw_candidates(unlabeled, cfg.candidate_pool, stream);
  const auto scores = score(candidates);
  return select_top(candidates, scores, cfg.per_iter);
}

TrialSplit make_split(std::size_t rows, const AalConfig &cfg, const RngStream &stream) {
  cfg.validate();
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RngStream s = stream.derive(0);
  shuffle_indices(idx, s);
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(rows)));
  TrialSplit split;
  split.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.pool.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  if (cfg.max_pool && split.pool.size() > cfg.max_pool) split.pool.resize(cfg.max_pool);
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.pool.begin(), split.pool.end());
  if (split.pool.size() < cfg.initial_n) throw std::invalid_argument("make_split: pool smaller than initial_n");
  RngStream init = stream.derive(1);
  split.initial = draw_candidates(split.pool, cfg.initial_n, init);
  std::sort(split.initial.begin(), split.initial.end());
  return split;
}

LearningCurve run_trial(const ActiveData &data, const TrialSplit &split, const AalConfig &cfg, Strategy strategy,
                        const ModelFactory &factory, const TrainConfig &train, const RngStream &stream) {
  cfg.validate();
  if (data.x.rows() != data.y.rows()) throw std::invalid_argument("run_trial: inputs and targets differ in rows");
  const StandardScaler xs = StandardScaler::fit(data.x.select_rows(split.pool));
  const Tensor2 x = xs.transform(data.x);
  const Tensor2 x_test = x.select_rows(split.test), y_test = data.y.select_rows(split.test);

  std::vector<std::size_t> labeled = split.initial;
  std::vector<std::size_t> unlabeled;
  std::set_difference(split.pool.begin(), split.pool.end(), labeled.begin(), labeled.end(),
                      std::back_inserter(unlabeled));
  std::vector<std::size_t> batch; // persistent candidates when not re-drawing
  LearningCurve curve;
  double cumulative = 0.0;

  for (std::size_t iter = 0;; ++iter) {
    std::sort(labeled.begin(), labeled.end());
    const Tensor2 y_lab = data.y.select_rows(labeled);
    const StandardScaler ys = StandardScaler::fit(y_lab);
    auto model = factory();
    RngStream init(train.seed, kInitStream);
    model->init(init);
    TrainConfig tc = train;
    tc.batch_size = std::min(train.batch_size, labeled.size());
    const auto t0 = std::chrono::steady_clock::now();
    train_model(*model, x.select_rows(labeled), ys.transform(y_lab), tc, nullptr, false);
    cumulative += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const Tensor2 pred = ys.inverse(model->predict_mean(x_test));
    const auto reports = compute_metrics(y_test, pred);
    double r2 = 0.0;
    for (const auto &m : reports) r2 += m.r2_defined ? m.r2 : 0.0;
    r2 /= static_cast<double>(reports.size());
    curve.points.push_back({labeled.size(), r2, cumulative, fingerprint(labeled)});
    if (r2 >= cfg.target_r2) {
      curve.reached = true;
      curve.samples_to_target = labeled.size();
      break;
    }
    if (unlabeled.size() < cfg.per_iter) break;
    if (cfg.max_iterations && iter + 1 >= cfg.max_iterations) break;

    RngStream acq = stream.derive(kAcquireStream).derive(iter);
    const RngStream score_stream = stream.derive(kScoreStream).derive(iter);
    const ScoreFn score = [&](std::span<const std::size_t> cand) -> std::vector<double> {
      if (strategy == Strategy::random) {
        RngStream r = score_stream;
        std::vector<double> s(cand.size());
        for (double &v : s) v = r.uniform();
        return s;
      }
      const std::vector<std::size_t> rows(cand.begin(), cand.end());
      return uncertainty_score(model->predict(x.select_rows(rows), cfg.samples, score_stream, false));
    };
    std::vector<std::size_t> picked;
    if (cfg.redraw_candidates) {
      picked = acquire(score, unlabeled, cfg, acq);
    } else {
      if (batch.size() < cfg.per_iter) batch = draw_candidates(unlabeled, cfg.candidate_pool, acq);
      picked = select_top(batch, score(batch), cfg.per_iter);
      std::vector<std::size_t> rest;
      for (std::size_t c : batch)
        if (std::find(picked.begin(), picked.end(), c) == picked.end()) rest.push_back(c);
      batch = std::move(rest);
    }
    std::sort(picked.begin(), picked.end());
    labeled.insert(labeled.end(), picked.begin(), picked.end());
    std::vector<std::size_t> remaining;
    std::set_difference(unlabeled.begin(), unlabeled.end(), picked.begin(), picked.end(),
                        std::back_inserter(remaining));
    unlabeled = std::move(remaining);
  }
  return curve;
}

std::vector<BandPoint> aggregate_trials(const std::vector<LearningCurve> &curves) {
  if (curves.empty()) throw std::invalid_argument("aggregate_trials: no curves");
  std::map<std::size_t, int> sizes;
  for (const auto &c : curves) {
    if (c.points.empty()) throw std::invalid_argument("aggregate_trials: empty curve");
    for (const auto &p : c.points) sizes[p.size] = 0;
  }
  std::vector<BandPoint> out;
  for (const auto &[size, unused] : sizes) {
    std::vector<double> r2;
    for (const auto &c : curves) {
      double v = c.points.back().r2;
      for (const auto &p : c.points)
        if (p.size == size) v = p.r2;
      r2.push_back(v);
    }
    out.push_back({size, mean(r2), std::sqrt(variance(r2))});
  }
  return out;
}

std::vector<TrialOutcome> run_paired_trials(const ActiveData &data, const AalConfig &cfg, const ModelFactory &factory,
                                            const TrainConfig &train, std::size_t jobs) {
  cfg.validate();
  std::vector<TrialOutcome> out(cfg.trials);
  auto one = [&](std::size_t t) {
    const RngStream trial_stream = RngStream(cfg.seed, kSplitStream).derive(t);
    const TrialSplit split = make_split(data.x.rows(), cfg, trial_stream);
    TrainConfig tc = train;
    tc.seed = train.seed + 0x9E3779B97F4A7C15ULL * t;
    out[t].trial = t;
    out[t].aal = run_trial(data, split, cfg, Strategy::aal, factory, tc, trial_stream.derive(2));
    out[t].random = run_trial(data, split, cfg, Strategy::random, factory, tc, trial_stream.derive(2));
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cfg.trials));
  if (jobs == 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) one(t);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&, w] {
      try {
        for (std::size_t t; (t = next.fetch_add(1)) < cfg.trials;) one(t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto &th : workers) th.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::string curves_csv(const std::vector<TrialOutcome> &trials) {
  std::ostringstream os;
  os.precision(10);
  os << "trial,strategy,iteration,size,r2,cum_seconds\n";
  for (const auto &t : trials)
    for (const auto *c : {&t.aal, &t.random})
      for (std::size_t i = 0; i < c->points.size(); ++i) {
        const auto &p = c->points[i];
        os << t.trial << ',' << (c == &t.aal ? "aal" : "random") << ',' << i << ',' << p.size << ',' << p.r2 << ','
           << p.cum_seconds << '\n';
      }
  return os.str();
}

} // namespace vdt
