// SPDX-License-Identifier: Apache-2.0
/**
 * @file   models.hpp
 * @brief  Deterministic backbones capped by a variational linear head.
 *
 * Every model maps an N-row input matrix to N×O outputs. Sequence models
 * take each window flattened into one row (time-major, L steps of F
 * features), which lets tabular and sequence data share the same batching,
 * training and prediction code.
 */
#pragma once

#include "vdt/backbones.hpp"
#include "vdt/train.hpp"
#include "vdt/varlayer.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vdt {

class VdtModel {
public:
  virtual ~VdtModel() = default;

  virtual void init(RngStream &rng) = 0;
  /// Deterministic trunk output, the input of the variational head.
  virtual Var features(Tape &tape, const Tensor2 &x) = 0;
  virtual VariationalLinear &head() = 0;
  virtual std::size_t input_width() const = 0;
  virtual std::string describe() const = 0;

  std::size_t output_width() { return head().out_dim(); }

  /// Head sample drawn from *eps, or the posterior mean when eps is null.
  Var forward(Tape &tape, const Tensor2 &x, const RngStream *eps);
  Var kl(Tape &tape, const IsotropicPrior &prior) { return head().kl(tape, prior); }

  /// Trainable parameters (trunk then head).
  ParameterList trainable();
  /// Trainable parameters plus non-trained buffers; this is what checkpoints hold.
  ParameterList state();

  Tensor2 predict_mean(const Tensor2 &x);
  /// S stochastic passes. Pass s draws θ from stream.derive(s).derive(0) and,
  /// when observation_noise is set, adds noise ⊙ z with z from
  /// stream.derive(s).derive(1).
  PredictiveSummary predict(const Tensor2 &x, std::size_t samples, const RngStream &stream,
                            bool observation_noise = true);

protected:
  virtual void collect_trunk(ParameterList &out) = 0;
};

/// Dense trunk with a variational head: widths = {in, h1, ..., hk}, head hk→out.
class VariationalFnn final : public VdtModel {
public:
  VariationalFnn(const std::string &name, std::vector<std::size_t> widths, std::size_t out,
                 Activation hidden = Activation::relu);

  void init(RngStream &rng) override;
  Var features(Tape &tape, const Tensor2 &x) override;
  VariationalLinear &head() override { return head_; }
  std::size_t input_width() const override { return trunk_.in_dim(); }
  std::string describe() const override;

protected:
  void collect_trunk(ParameterList &out) override { trunk_.collect(out); }

private:
  Mlp trunk_;
  VariationalLinear head_;
};

struct RnnSpec {
  std::size_t seq_len = 1;          ///< L
  std::size_t features = 1;         ///< F, per-step input width
  std::vector<std::size_t> pre;     ///< dense widths applied per step before the RNN
  CellKind cell = CellKind::lstm;
  std::vector<std::size_t> hidden;  ///< stacked recurrent widths
  std::vector<std::size_t> post;    ///< dense widths after the last hidden state
  std::size_t out = 1;
  Activation dense_act = Activation::tanh;
};

/// Per-step dense layers, a recurrent stack, dense layers on h_L, variational head.
class VariationalRnn final : public VdtModel {
public:
  VariationalRnn(const std::string &name, const RnnSpec &spec);

  void init(RngStream &rng) override;
  Var features(Tape &tape, const Tensor2 &x) override;
  VariationalLinear &head() override { return head_; }
  std::size_t input_width() const override { return spec_.seq_len * spec_.features; }
  std::string describe() const override;
  const RnnSpec &spec() const noexcept { return spec_; }

protected:
  void collect_trunk(ParameterList &out) override;

private:
  RnnSpec spec_;
  Mlp pre_;
  RnnStack rnn_;
  Mlp post_;
  VariationalLinear head_;
};

using ModelFactory = std::function<std::unique_ptr<VdtModel>()>;

/// Named architecture presets. `scale` in (0, 1] shrinks hidden widths for desk runs.
std::unique_ptr<VdtModel> make_preset(const std::string &preset, std::size_t input_width,
                                      std::size_t output_width, double scale = 1.0,
                                      std::size_t seq_len = 1, CellKind cell = CellKind::lstm);

/// Minibatch training of MSE + beta·KL; afterwards the head's noise buffer is
/// set to the per-output RMS residual of posterior-mean predictions on (x, y)
/// when fit_noise is true.
FitResult train_model(VdtModel &model, const Tensor2 &x, const Tensor2 &y, const TrainConfig &cfg,
                      AdamState *optimizer = nullptr, bool fit_noise = true);

/// Sets head().noise() to the per-output RMS of y − predict_mean(x).
void fit_observation_noise(VdtModel &model, const Tensor2 &x, const Tensor2 &y);

} // namespace vdt
