// SPDX-License-Identifier: Apache-2.0
#include "vdt/sensorcat.hpp"

#include "vdt/twinloop.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace vdt {

double SensorSeries::mean() const { return vdt::mean(values); }

void SensorSeries::validate() const {
  if (values.empty()) throw std::invalid_argument("sensor " + id + ": empty series");
  if (t.size() != values.size()) throw std::invalid_argument("sensor " + id + ": timestamp/value lengths differ");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw std::invalid_argument("sensor " + id + ": timestamps not strictly increasing");
}

SensorSeries downsample(const SensorSeries &series, double interval) {
  series.validate();
  if (!(interval > 0.0)) throw std::invalid_argument("downsample: interval must be positive");
  double spacing = 0.0;
  for (std::size_t i = 1; i < series.t.size(); ++i) spacing = std::max(spacing, series.t[i] - series.t[i - 1]);
  if (series.t.size() > 1 && !(interval > spacing))
    throw std::invalid_argument("downsample: interval must exceed the native spacing");
  SensorSeries out{series.id, {}, {}};
  const double t0 = series.t.front();
  std::size_t i = 0;
  while (i < series.t.size()) {
    const auto block = static_cast<long long>(std::floor((series.t[i] - t0) / interval));
    double acc = 0.0;
    std::size_t count = 0;
    for (; i < series.t.size() && static_cast<long long>(std::floor((series.t[i] - t0) / interval)) == block; ++i) {
      acc += series.values[i];
      ++count;
    }
    out.t.push_back(t0 + static_cast<double>(block) * interval);
    out.values.push_back(acc / static_cast<double>(count));
  }
  return out;
}

std::vector<std::vector<std::size_t>> bin_sensors(std::span<const double> means, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("bin_sensors: need at least one bin");
  std::vector<std::vector<std::size_t>> out(bins);
  if (means.empty()) return out;
  std::vector<double> sorted(means.begin(), means.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (std::size_t j = 1; j < bins; ++j)
    edges.push_back(quantile_sorted(sorted, static_cast<double>(j) / static_cast<double>(bins)));
  std::vector<std::size_t> order(means.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  for (std::size_t s : order) {
    const auto below = static_cast<std::size_t>(
        std::count_if(edges.begin(), edges.end(), [&](double e) { return e < means[s]; }));
    out[below].push_back(s);
  }
  return out;
}

std::vector<std::size_t> zigzag_order(std::vector<std::vector<std::size_t>> bins) {
  std::vector<std::deque<std::size_t>> queues;
  std::size_t remaining = 0;
  for (auto &b : bins) {
    remaining += b.size();
    queues.emplace_back(b.begin(), b.end());
  }
  std::vector<std::size_t> order;
  order.reserve(remaining);
  for (std::size_t pass = 0; remaining > 0; ++pass) {
    for (auto &q : queues) {
      if (q.empty()) continue;
      if (pass % 2 == 0) {
        order.push_back(q.front());
        q.pop_front();
      } else {
        order.push_back(q.back());
        q.pop_back();
      }
      --remaining;
    }
  }
  return order;
}

ConcatSignal build_signal(std::span<const SensorSeries> series, std::span<const std::size_t> order) {
  std::vector<bool> used(series.size(), false);
  for (std::size_t s : order) {
    if (s >= series.size()) throw std::invalid_argument("build_signal: unknown sensor position " + std::to_string(s));
    if (used[s]) throw std::invalid_argument("build_signal: duplicate sensor " + series[s].id);
    used[s] = true;
  }
  for (std::size_t s = 0; s < series.size(); ++s)
    if (!used[s]) throw std::invalid_argument("build_signal: sensor " + series[s].id + " missing from order");
  ConcatSignal sig;
  sig.order.assign(order.begin(), order.end());
  for (std::size_t s : order) {
    const auto &v = series[s].values;
    sig.boundaries.push_back(sig.values.size());
    sig.values.insert(sig.values.end(), v.begin(), v.end());
    for (std::size_t j = 0; j < v.size(); ++j)
      sig.position.push_back(v.size() > 1 ? static_cast<double>(j) / static_cast<double>(v.size() - 1) : 0.0);
  }
  return sig;
}

std::vector<std::size_t> structured_order(std::span<const SensorSeries> series, std::size_t bins) {
  std::vector<double> means;
  for (const auto &s : series) means.push_back(s.mean());
  return zigzag_order(bin_sensors(means, bins));
}

Wiring parse_wiring(const std::string &name) {
  if (name == "joint") return Wiring::joint;
  if (name == "ordinal") return Wiring::ordinal;
  throw std::invalid_argument("unknown wiring '" + name + "'");
}

std::string to_string(Wiring w) { return w == Wiring::joint ? "joint" : "ordinal"; }

Tensor2 wiring_series(std::span<const SensorSeries> first, std::span<const SensorSeries> second,
                      const std::vector<std::size_t> &order, Wiring wiring) {
  const ConcatSignal a = build_signal(first, order);
  Tensor2 out(a.values.size(), 2);
  if (wiring == Wiring::ordinal) {
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      out(i, 0) = a.values[i];
      out(i, 1) = a.position[i];
    }
    return out;
  }
  if (second.size() != first.size()) throw std::invalid_argument("joint wiring: groups differ in sensor count");
  const ConcatSignal b = build_signal(second, order);
  if (b.values.size() != a.values.size()) throw std::invalid_argument("joint wiring: groups differ in length");
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    out(i, 0) = a.values[i];
    out(i, 1) = b.values[i];
  }
  return out;
}

namespace {

constexpr std::uint64_t kSensorSplitStream = 0x53454E53ULL; // "SENS"
constexpr std::uint64_t kSensorPredictStream = 0x53505245ULL;

template <typename T> std::vector<T> pick(std::span<const T> all, std::span<const std::size_t> idx) {
  std::vector<T> out;
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

} // namespace

std::vector<DropoutRow> dropout_sweep(std::span<const SensorSeries> first, std::span<const SensorSeries> second,
                                      const ModelFactory &factory, const DropoutConfig &cfg) {
  if (first.size() < 2) throw std::invalid_argument("dropout_sweep: need at least 2 sensors");
  if (cfg.wiring == Wiring::joint && second.size() != first.size())
    throw std::invalid_argument("dropout_sweep: joint wiring needs two equally sized groups");
  std::vector<std::size_t> idx(first.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RngStream split(cfg.seed, kSensorSplitStream);
  shuffle_indices(idx, split);
  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.test_share * static_cast<double>(first.size()))));
  if (n_test >= first.size()) throw std::invalid_argument("dropout_sweep: no training sensors left");
  const std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());

  const bool joint = cfg.wiring == Wiring::joint;
  const std::vector<std::size_t> targets = joint ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{0};
  const std::vector<std::size_t> features{0, 1};

  auto series_for = [&](std::span<const std::size_t> chosen) {
    const auto a = pick(first, chosen);
    const auto b = joint ? pick(second, chosen) : std::vector<SensorSeries>{};
    return wiring_series(a, b, structured_order(a, cfg.bins), cfg.wiring);
  };
  const Tensor2 test_series = series_for(test_idx);

  std::vector<DropoutRow> rows;
  for (double f : cfg.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("dropout_sweep: fractions must lie in (0, 1]");
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(f * static_cast<double>(train_idx.size()))));
    const std::vector<std::size_t> chosen(train_idx.begin(), train_idx.begin() + static_cast<std::ptrdiff_t>(keep));
    const Tensor2 train_series = series_for(chosen);
    const StandardScaler scaler = StandardScaler::fit(train_series);
    const SequenceSet tr = make_sequences(scaler.transform(train_series), cfg.seq_len, features, targets);
    const SequenceSet te = make_sequences(scaler.transform(test_series), cfg.seq_len, features, targets);
    const StandardScaler target_scaler = scaler.subset(targets);

    auto model = factory();
    RngStream init(cfg.train.seed, kInitStream);
    model->init(init);
    train_model(*model, tr.x, tr.y, cfg.train);
    PredictiveSummary s = model->predict(te.x, cfg.samples, RngStream(cfg.seed, kSensorPredictStream));
    s.mean = target_scaler.inverse(s.mean);
    s.lower = target_scaler.inverse(s.lower);
    s.upper = target_scaler.inverse(s.upper);
    s.draws.clear();
    DropoutRow row;
    row.fraction = f;
    row.sensors = keep;
    row.metrics = evaluate_summary(target_scaler.inverse(te.y), s).front();
    rows.push_back(row);
  }
  return rows;
}

} // namespace vdt
