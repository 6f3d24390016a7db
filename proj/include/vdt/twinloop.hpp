// SPDX-License-Identifier: Apache-2.0
/**
 * @file   twinloop.hpp
 * @brief  Session-based twin updating for streamed series and rolling
 *         fine-tuning of the battery model.
 *
 * A session trains on a fixed-size window of the stream (warm-started from
 * the previous session's checkpoint) and is then evaluated on the window
 * that follows. Because every session sees the same amount of data, the
 * update cost stays flat as history grows.
 */
#pragma once

#include "vdt/metrics.hpp"
#include "vdt/models.hpp"
#include "vdt/pinn.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

namespace vdt {

/// 64-bit FNV-1a over the raw bytes; used for index-set and output fingerprints.
std::uint64_t fingerprint(std::span<const std::size_t> values);
std::uint64_t fingerprint(std::span<const double> values);

struct SequenceSet {
  Tensor2 x;                        ///< count × (L·F), window k flattened time-major
  Tensor2 y;                        ///< count × targets
  std::vector<std::size_t> target_rows; ///< series row of each pair's target
};

/// X[k] = feature rows k..k+L−1, y[k] = target columns of row k+L.
SequenceSet make_sequences(const Tensor2 &series, std::size_t seq_len, std::span<const std::size_t> feature_cols,
                           std::span<const std::size_t> target_cols);
/// All columns as both features and targets.
SequenceSet make_sequences(const Tensor2 &series, std::size_t seq_len);

struct SessionPlan {
  std::size_t seq_len = 24;      ///< L
  std::size_t train_window = 0;  ///< rows whose targets train session t
  std::size_t test_window = 0;   ///< rows evaluated after session t
  std::size_t sessions = 1;      ///< T
  std::size_t stride = 0;        ///< offset between sessions; 0 means train_window

  std::size_t effective_stride() const noexcept { return stride ? stride : train_window; }
  std::size_t train_begin(std::size_t t) const noexcept { return seq_len + t * effective_stride(); }
  std::size_t test_begin(std::size_t t) const noexcept { return train_begin(t) + train_window; }
  /// Rows needed to run every session.
  std::size_t rows_required() const noexcept { return test_begin(sessions - 1) + test_window; }
  void validate(std::size_t series_rows) const;
};

enum class SessionMode : std::uint8_t { windowed, cumulative };

struct SessionConfig {
  TrainConfig train;
  std::size_t samples = 200;           ///< S for interval construction
  SessionMode mode = SessionMode::windowed;
  bool reset_optimizer = true;         ///< false carries Adam moments across sessions
  bool fit_noise = true;
  std::filesystem::path run_dir;       ///< checkpoints session_<t>.vdtc live here
  std::vector<std::size_t> feature_cols; ///< empty: all columns
  std::vector<std::size_t> target_cols;  ///< empty: all columns
};

struct SessionLog {
  std::size_t session = 0;
  std::vector<MetricReport> metrics; ///< one per output, original units
  double train_seconds = 0.0;
  double inference_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::size_t train_pairs = 0;
  std::uint64_t train_rows_hash = 0; ///< fingerprint of the target rows fed to training
  std::uint64_t test_rows_hash = 0;
  std::size_t train_row_min = 0, train_row_max = 0, test_row_min = 0, test_row_max = 0;
  std::uint64_t probe_start = 0;     ///< posterior-mean output on the probe batch before training
  std::uint64_t probe_end = 0;       ///< same after training
  std::vector<double> epoch_loss;
};

/**
 * Runs the plan. Scalers are fit on session 0's training rows and frozen.
 * Windowed mode warm-starts session t from checkpoint t−1; cumulative mode
 * retrains from a fresh init on every row up to the end of window t.
 */
std::vector<SessionLog> run_sessions(const Tensor2 &series, const SessionPlan &plan, const ModelFactory &factory,
                                     const SessionConfig &cfg);

/// Session logs as CSV rows (session, output, r2, mae, rmse, mse, mape, coverage, width, train_s, infer_s).
std::string sessions_csv(const std::vector<SessionLog> &logs);

// ---- rolling battery updates ------------------------------------------------------------

struct RollingConfig {
  std::size_t block = 10;
  TrainConfig initial;   ///< training on block 0
  TrainConfig finetune;  ///< each subsequent fine-tune
  std::size_t samples = 50;
  std::uint64_t seed = 0;
  std::filesystem::path run_dir; ///< optional: checkpoint per block
};

struct DischargeResult {
  int id = 0;
  std::size_t block = 0;
  MetricReport metrics;
  std::size_t position = 0;           ///< index of the profile in the input list
  std::uint64_t model_trained_on = 0; ///< fingerprint of profile positions the predicting model saw
  std::size_t trained_below = 0;      ///< every seen position is < this
};

struct RollingResult {
  std::vector<DischargeResult> discharges;
  std::vector<double> block_train_seconds;
};

/// Train on block 0; then for every later block predict it with intervals
/// before fine-tuning on it.
RollingResult rolling_update(std::span<const DischargeProfile> profiles, BattNN &model, const RollingConfig &cfg);

/// Evaluates `model` on every profile with S-sample intervals.
std::vector<DischargeResult> evaluate_profiles(BattNN &model, std::span<const DischargeProfile> profiles,
                                               std::size_t samples, const RngStream &stream);

} // namespace vdt
