// SPDX-License-Identifier: Apache-2.0
/**
 * @file   train.hpp
 * @brief  Adam with decoupled weight decay, step-drop learning-rate
 *         schedules, the epoch/batch loop and the binary checkpoint format.
 */
#pragma once

#include "vdt/autodiff.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vdt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First/second moment accumulators, one pair per parameter in list order.
class AdamState {
public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig &config() const noexcept { return cfg_; }
  AdamConfig &config() noexcept { return cfg_; }
  std::size_t steps() const noexcept { return step_; }
  void reset();

  /// One update from the gradients stored in each Parameter::grad.
  void step(const ParameterList &params, double lr);

  std::vector<Tensor2> &first_moments() noexcept { return m_; }
  std::vector<Tensor2> &second_moments() noexcept { return v_; }
  const std::vector<Tensor2> &first_moments() const noexcept { return m_; }
  const std::vector<Tensor2> &second_moments() const noexcept { return v_; }
  void set_steps(std::size_t s) noexcept { step_ = s; }

private:
  AdamConfig cfg_;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
  std::size_t step_ = 0;
};

void adam_step(AdamState &state, const ParameterList &params, double lr);

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  /// (epoch, multiplier): from that epoch on (1-based) the rate is multiplied.
  std::vector<std::pair<std::size_t, double>> lr_schedule;
  std::uint64_t seed = 0;
  double beta = 1e-4;        ///< KL weight
  double prior_sigma = 1.0;
  double clip_norm = 0.0;    ///< global-norm clip, 0 disables
  double weight_decay = 0.0;
  bool shuffle = true;

  void validate() const;
};

/// Base rate times every multiplier whose epoch is <= `epoch` (1-based).
double effective_lr(const TrainConfig &cfg, std::size_t epoch);

/// Scales all gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_global_norm(const ParameterList &params, double max_norm);

struct FitResult {
  std::vector<double> epoch_loss; ///< size-weighted mean batch loss per epoch
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

/// Loss of one minibatch. `eps` is the stream for this batch's θ draw.
using BatchLoss =
    std::function<Var(Tape &tape, std::span<const std::size_t> batch, const RngStream &eps)>;

/**
 * Generic minibatch loop. Epoch e shuffles item indices with
 * RngStream(seed, kShuffleStream).derive(e) (Fisher–Yates); batch b of epoch e
 * draws its ε from RngStream(seed, kNoiseStream).derive(e).derive(b).
 * Passing an AdamState continues its moments; otherwise a fresh one is used.
 */
FitResult fit(const ParameterList &params, std::size_t n_items, const BatchLoss &loss,
              const TrainConfig &cfg, AdamState *state = nullptr);

inline constexpr std::uint64_t kShuffleStream = 0x5348554646ULL; // "SHUFF"
inline constexpr std::uint64_t kNoiseStream = 0x4E4F495345ULL;   // "NOISE"
inline constexpr std::uint64_t kInitStream = 0x494E4954ULL;      // "INIT"

// ---- checkpoints ------------------------------------------------------------------

class CheckpointError : public std::runtime_error {
public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, checksum, shape_mismatch, missing_tensor };
  CheckpointError(Kind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

struct NamedTensor {
  std::string name;
  Tensor2 value;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "VDTC", u32 version, u32 count, then per tensor u16 name length,
/// UTF-8 name, u8 rank, rank × u64 dims, row-major little-endian f64 data;
/// a trailing u32 CRC32 covers every preceding byte.
std::vector<unsigned char> encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const unsigned char> bytes);

/// Writes parameters (and optionally optimizer moments) atomically.
void save_checkpoint(const std::filesystem::path &path, const ParameterList &params,
                     const AdamState *optimizer = nullptr);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path &path);
/// Restores every parameter by name. Optimizer moments are restored when
/// `optimizer` is given and the file contains them.
void load_checkpoint(const std::filesystem::path &path, const ParameterList &params,
                     AdamState *optimizer = nullptr);

/// Writes bytes to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path &path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::filesystem::path &path, const std::string &text);

} // namespace vdt
