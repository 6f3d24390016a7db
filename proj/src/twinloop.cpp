// SPDX-License-Identifier: Apache-2.0
#include "vdt/twinloop.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vdt {

namespace {

constexpr std::uint64_t kPredictStream = 0x50524544ULL; // "PRED"

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t fnv(const unsigned char *p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::size_t> all_columns(std::size_t n) {
  std::vector<std::size_t> c(n);
  std::iota(c.begin(), c.end(), std::size_t{0});
  return c;
}

} // namespace

std::uint64_t fingerprint(std::span<const std::size_t> values) {
  std::vector<std::uint64_t> v(values.begin(), values.end());
  return fnv(reinterpret_cast<const unsigned char *>(v.data()), v.size() * sizeof(std::uint64_t));
}

std::uint64_t fingerprint(std::span<const double> values) {
  return fnv(reinterpret_cast<const unsigned char *>(values.data()), values.size() * sizeof(double));
}

// ---- sequences ---------------------------------------------------------------------------

SequenceSet make_sequences(const Tensor2 &series, std::size_t seq_len, std::span<const std::size_t> feature_cols,
                           std::span<const std::size_t> target_cols) {
  if (seq_len == 0) throw std::invalid_argument("make_sequences: sequence length must be >= 1");
  if (series.rows() < seq_len + 1)
    throw std::invalid_argument("make_sequences: series of " + std::to_string(series.rows()) +
                                " rows is shorter than L+1 = " + std::to_string(seq_len + 1));
  for (std::size_t c : feature_cols)
    if (c >= series.cols()) throw std::invalid_argument("make_sequences: feature column out of range");
  for (std::size_t c : target_cols)
    if (c >= series.cols()) throw std::invalid_argument("make_sequences: target column out of range");
  const std::size_t count = series.rows() - seq_len, f = feature_cols.size();
  SequenceSet out{Tensor2(count, seq_len * f), Tensor2(count, target_cols.size()), {}};
  out.target_rows.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t t = 0; t < seq_len; ++t)
      for (std::size_t j = 0; j < f; ++j) out.x(k, t * f + j) = series(k + t, feature_cols[j]);
    for (std::size_t j = 0; j < target_cols.size(); ++j) out.y(k, j) = series(k + seq_len, target_cols[j]);
    out.target_rows[k] = k + seq_len;
  }
  return out;
}

SequenceSet make_sequences(const Tensor2 &series, std::size_t seq_len) {
  const auto cols = all_columns(series.cols());
  return make_sequences(series, seq_len, cols, cols);
}

// ---- sessions ----------------------------------------------------------------------------

void SessionPlan::validate(std::size_t series_rows) const {
  if (seq_len == 0) throw std::invalid_argument("SessionPlan: seq_len must be >= 1");
  if (train_window == 0 || test_window == 0) throw std::invalid_argument("SessionPlan: empty train or test window");
  if (sessions == 0) throw std::invalid_argument("SessionPlan: need at least one session");
  if (rows_required() > series_rows)
    throw std::invalid_argument("SessionPlan: needs " + std::to_string(rows_required()) + " rows, series has " +
                                std::to_string(series_rows));
}

std::vector<SessionLog> run_sessions(const Tensor2 &series, const SessionPlan &plan, const ModelFactory &factory,
                                     const SessionConfig &cfg) {
  plan.validate(series.rows());
  cfg.train.validate();
  if (cfg.mode == SessionMode::windowed && cfg.run_dir.empty())
    throw std::invalid_argument("run_sessions: windowed mode needs a run directory for checkpoints");
  const auto features = cfg.feature_cols.empty() ? all_columns(series.cols()) : cfg.feature_cols;
  const auto targets = cfg.target_cols.empty() ? all_columns(series.cols()) : cfg.target_cols;

  // Scalers come from session 0's training rows only and stay frozen.
  const Tensor2 fit_rows = series.slice_rows(0, plan.test_begin(0));
  const StandardScaler scaler = StandardScaler::fit(fit_rows);
  const StandardScaler target_scaler = scaler.subset(targets);
  const SequenceSet pairs = make_sequences(scaler.transform(series), plan.seq_len, features, targets);
  auto pair_of_row = [&](std::size_t row) { return row - plan.seq_len; };

  if (!cfg.run_dir.empty()) std::filesystem::create_directories(cfg.run_dir);
  std::vector<SessionLog> logs;
  AdamState carried;
  const Tensor2 probe = pairs.x.slice_rows(0, std::min<std::size_t>(8, pairs.x.rows()));

  for (std::size_t t = 0; t < plan.sessions; ++t) {
    SessionLog log;
    log.session = t;
    auto model = factory();
    const bool warm = cfg.mode == SessionMode::windowed && t > 0;
    if (warm) {
      const auto prev = cfg.run_dir / ("session_" + std::to_string(t - 1) + ".vdtc");
      if (!std::filesystem::exists(prev))
        throw std::runtime_error("missing checkpoint " + prev.string() + "; rerun from session " +
                                 std::to_string(t - 1) + " to resume");
      load_checkpoint(prev, model->state(), cfg.reset_optimizer ? nullptr : &carried);
    } else {
      RngStream init(cfg.train.seed, kInitStream);
      model->init(init);
    }
    log.probe_start = fingerprint(model->predict_mean(probe).data());

    const std::size_t begin = cfg.mode == SessionMode::cumulative ? plan.train_begin(0) : plan.train_begin(t);
    const std::size_t end = plan.test_begin(t);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t r = begin; r < end; ++r) train_idx.push_back(pair_of_row(r));
    for (std::size_t r = end; r < end + plan.test_window; ++r) test_idx.push_back(pair_of_row(r));
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t k : train_idx) train_rows.push_back(pairs.target_rows[k]);
    for (std::size_t k : test_idx) test_rows.push_back(pairs.target_rows[k]);
    log.train_pairs = train_idx.size();
    log.train_rows_hash = fingerprint(train_rows);
    log.test_rows_hash = fingerprint(test_rows);
    log.train_row_min = train_rows.front();
    log.train_row_max = train_rows.back();
    log.test_row_min = test_rows.front();
    log.test_row_max = test_rows.back();

    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + 0x9E3779B97F4A7C15ULL * t;
    AdamState fresh(AdamConfig{.weight_decay = tc.weight_decay});
    AdamState &opt = (cfg.reset_optimizer || !warm) ? fresh : carried;
    const Tensor2 xs = pairs.x.select_rows(train_idx), ys = pairs.y.select_rows(train_idx);
    auto t0 = Clock::now();
    const FitResult fr = train_model(*model, xs, ys, tc, &opt, cfg.fit_noise);
    log.train_seconds = seconds_since(t0);
    log.epoch_loss = fr.epoch_loss;
    log.probe_end = fingerprint(model->predict_mean(probe).data());

    if (!cfg.run_dir.empty()) {
      log.checkpoint = cfg.run_dir / ("session_" + std::to_string(t) + ".vdtc");
      save_checkpoint(log.checkpoint, model->state(), cfg.reset_optimizer ? nullptr : &opt);
    }
    if (!cfg.reset_optimizer) carried = opt;

    t0 = Clock::now();
    PredictiveSummary summary =
        model->predict(pairs.x.select_rows(test_idx), cfg.samples, RngStream(cfg.train.seed, kPredictStream).derive(t));
    log.inference_seconds = seconds_since(t0);
    summary.mean = target_scaler.inverse(summary.mean);
    summary.lower = target_scaler.inverse(summary.lower);
    summary.upper = target_scaler.inverse(summary.upper);
    summary.draws.clear();
    log.metrics = evaluate_summary(target_scaler.inverse(pairs.y.select_rows(test_idx)), summary);
    logs.push_back(std::move(log));
  }
  return logs;
}

std::string sessions_csv(const std::vector<SessionLog> &logs) {
  std::ostringstream os;
  os.precision(10);
  os << "session,output,r2,mae,rmse,mse,mape,coverage,width,train_s,infer_s\n";
  for (const auto &l : logs)
    for (std::size_t o = 0; o < l.metrics.size(); ++o) {
      const auto &m = l.metrics[o];
      os << l.session << ',' << o << ',' << m.r2 << ',' << m.mae << ',' << m.rmse << ',' << m.mse << ',' << m.mape
         << ',' << m.coverage << ',' << m.width << ',' << l.train_seconds << ',' << l.inference_seconds << '\n';
    }
  return os.str();
}

// ---- rolling updates --------------------------------------------------------------------

std::vector<DischargeResult> evaluate_profiles(BattNN &model, std::span<const DischargeProfile> profiles,
                                               std::size_t samples, const RngStream &stream) {
  const auto summaries = predict_battnn(model, profiles, samples, stream);
  std::vector<DischargeResult> out;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    DischargeResult r;
    r.id = profiles[k].id;
    r.metrics = evaluate_summary(Tensor2::column(profiles[k].voltage), summaries[k]).front();
    out.push_back(r);
  }
  return out;
}

RollingResult rolling_update(std::span<const DischargeProfile> profiles, BattNN &model, const RollingConfig &cfg) {
  if (cfg.block == 0) throw std::invalid_argument("rolling_update: block must be >= 1");
  if (profiles.size() < cfg.block + 1)
    throw std::invalid_argument("rolling_update: need at least " + std::to_string(cfg.block + 1) + " profiles, got " +
                                std::to_string(profiles.size()));
  const std::size_t blocks = (profiles.size() + cfg.block - 1) / cfg.block;
  auto block_span = [&](std::size_t k) {
    const std::size_t b = k * cfg.block, e = std::min(profiles.size(), b + cfg.block);
    return profiles.subspan(b, e - b);
  };
  if (!cfg.run_dir.empty()) std::filesystem::create_directories(cfg.run_dir);

  RollingResult result;
  std::vector<std::size_t> seen;
  auto train_block = [&](std::size_t k, const TrainConfig &base) {
    TrainConfig tc = base;
    tc.seed = cfg.seed + 0x9E3779B97F4A7C15ULL * k;
    const auto t0 = Clock::now();
    train_battnn(model, block_span(k), tc);
    result.block_train_seconds.push_back(seconds_since(t0));
    for (std::size_t i = k * cfg.block; i < std::min(profiles.size(), (k + 1) * cfg.block); ++i) seen.push_back(i);
    if (!cfg.run_dir.empty())
      save_checkpoint(cfg.run_dir / ("block_" + std::to_string(k) + ".vdtc"), model.state());
  };

  train_block(0, cfg.initial);
  for (std::size_t k = 1; k < blocks; ++k) {
    const std::uint64_t provenance = fingerprint(seen);
    auto evals = evaluate_profiles(model, block_span(k), cfg.samples, RngStream(cfg.seed, kPredictStream).derive(k));
    for (std::size_t j = 0; j < evals.size(); ++j) {
      auto &e = evals[j];
      e.block = k;
      e.position = k * cfg.block + j;
      e.trained_below = seen.empty() ? 0 : *std::max_element(seen.begin(), seen.end()) + 1;
      e.model_trained_on = provenance;
      result.discharges.push_back(e);
    }
    if (k + 1 < blocks) train_block(k, cfg.finetune);
  }
  return result;
}

} // namespace vdt
