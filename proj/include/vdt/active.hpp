// SPDX-License-Identifier: Apache-2.0
/**
 * @file   active.hpp
 * @brief  Pool-based active learning with a random pre-selection step.
 *
 * Each iteration draws a random candidate subset of the unlabeled pool,
 * scores it, and labels the highest-scoring rows. The uncertainty strategy
 * scores by predictive spread; the random baseline scores by uniform draws,
 * so both strategies share every other line of code.
 */
#pragma once

#include "vdt/models.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vdt {

struct AalConfig {
  std::size_t initial_n = 10;
  std::size_t per_iter = 20;
  std::size_t candidate_pool = 500;
  double target_r2 = 0.98;
  std::size_t trials = 50;
  std::size_t max_pool = 0;       ///< cap on the acquisition pool, 0 = no cap
  std::size_t max_iterations = 0; ///< 0 = until target or exhaustion
  std::size_t samples = 50;       ///< S for uncertainty scoring
  double test_fraction = 0.2;
  bool redraw_candidates = true;  ///< false keeps one pre-randomized batch until it runs dry
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Strategy : std::uint8_t { aal, random };
Strategy parse_strategy(const std::string &name);
std::string to_string(Strategy s);

/// Scores for the given pool indices (higher = more informative).
using ScoreFn = std::function<std::vector<double>(std::span<const std::size_t> candidates)>;

/// `count` indices drawn uniformly without replacement (all of them, in order, if fewer).
std::vector<std::size_t> draw_candidates(std::span<const std::size_t> unlabeled, std::size_t count, RngStream &stream);

/// The `k` highest scores; ties go to the lower index.
std::vector<std::size_t> select_top(std::span<const std::size_t> candidates, std::span<const double> scores,
                                    std::size_t k);

/// Candidate draw followed by top-per_iter selection.
std::vector<std::size_t> acquire(const ScoreFn &score, std::span<const std::size_t> unlabeled, const AalConfig &cfg,
                                 RngStream &stream);

struct CurvePoint {
  std::size_t size = 0;
  double r2 = 0.0;
  double cum_seconds = 0.0;
  std::uint64_t labeled_hash = 0; ///< fingerprint of the sorted labeled index set
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  bool reached = false;
  std::size_t samples_to_target = 0; ///< size at the first point with r2 >= target (0 if never)
};

struct ActiveData {
  Tensor2 x; ///< N × inputs
  Tensor2 y; ///< N × outputs
};

/// Pool/test split and initial labeled set shared by paired trials.
struct TrialSplit {
  std::vector<std::size_t> pool;    ///< acquisition pool (row indices of the data)
  std::vector<std::size_t> test;    ///< holdout rows
  std::vector<std::size_t> initial; ///< subset of pool
};

TrialSplit make_split(std::size_t rows, const AalConfig &cfg, const RngStream &stream);

/**
 * Iterates acquire → label → retrain from a fresh init → evaluate until
 * test R² reaches the target, the pool cannot supply per_iter more rows or
 * max_iterations is hit.
 */
LearningCurve run_trial(const ActiveData &data, const TrialSplit &split, const AalConfig &cfg, Strategy strategy,
                        const ModelFactory &factory, const TrainConfig &train, const RngStream &stream);

struct BandPoint {
  std::size_t size = 0;
  double mean = 0.0;
  double std = 0.0; ///< population
};

/// Per-size mean/std of R², shorter curves padded with their final R².
std::vector<BandPoint> aggregate_trials(const std::vector<LearningCurve> &curves);

struct TrialOutcome {
  std::size_t trial = 0;
  LearningCurve aal;
  LearningCurve random;
};

/// Paired trials (same split and initial set for both strategies). `jobs` > 1
/// runs trials on worker threads; results do not depend on it.
std::vector<TrialOutcome> run_paired_trials(const ActiveData &data, const AalConfig &cfg, const ModelFactory &factory,
                                            const TrainConfig &train, std::size_t jobs = 1);

/// CSV rows: trial, strategy, iteration, size, r2, cum_seconds.
std::string curves_csv(const std::vector<TrialOutcome> &trials);

} // namespace vdt
