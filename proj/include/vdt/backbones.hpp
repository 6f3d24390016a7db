// SPDX-License-Identifier: Apache-2.0
/**
 * @file   backbones.hpp
 * @brief  Deterministic differentiable layers: dense, vanilla RNN, LSTM and
 *         GRU cells, their stacks, and a central-difference gradient checker.
 */
#pragma once

#include "vdt/autodiff.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vdt {

enum class Activation : std::uint8_t { identity, relu, tanh, sigmoid };

Activation parse_activation(const std::string &name);
Var activate(Var x, Activation act);

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) fill.
void init_uniform_fan_in(Tensor2 &w, std::size_t fan_in, RngStream &rng);

class DenseLayer {
public:
  DenseLayer() = default;
  DenseLayer(const std::string &name, std::size_t in, std::size_t out, Activation act);

  std::size_t in_dim() const noexcept { return weight_.value.cols(); }
  std::size_t out_dim() const noexcept { return weight_.value.rows(); }
  Activation activation() const noexcept { return act_; }

  void init(RngStream &rng);
  Var forward(Tape &tape, Var x);
  /// σ(x·Wᵀ + b) without recording gradients.
  Tensor2 forward(const Tensor2 &x);

  Parameter &weight() noexcept { return weight_; }
  Parameter &bias() noexcept { return bias_; }
  void collect(ParameterList &out);

private:
  Parameter weight_;
  Parameter bias_;
  Activation act_ = Activation::identity;
};

/// Sequence of dense layers; hidden layers use `hidden`, the last uses `last`.
class Mlp {
public:
  Mlp() = default;
  Mlp(const std::string &name, std::vector<std::size_t> widths, Activation hidden,
      Activation last);

  void init(RngStream &rng);
  Var forward(Tape &tape, Var x);
  std::size_t in_dim() const;
  std::size_t out_dim() const;
  bool empty() const noexcept { return layers_.empty(); }
  std::vector<DenseLayer> &layers() noexcept { return layers_; }
  const std::vector<DenseLayer> &layers() const noexcept { return layers_; }
  void collect(ParameterList &out);

private:
  std::vector<DenseLayer> layers_;
};

enum class CellKind : std::uint8_t { vanilla, lstm, gru };

CellKind parse_cell_kind(const std::string &name);
std::string to_string(CellKind kind);

struct RnnState {
  Var h;
  Var c; // LSTM only
};

/// Intermediates of one recurrent step, read back from the tape.
struct StepTrace {
  Tensor2 input_gate, forget_gate, output_gate, candidate; // LSTM
  Tensor2 update_gate, reset_gate;                         // GRU (candidate shared)
  Tensor2 h_prev, c_prev, h, c;
};

/**
 * One recurrent cell. Parameter blocks follow the usual naming:
 *   vanilla: h_t = tanh(W_x x_t + W_h h_{t-1} + b)
 *   lstm:    gates i, f, o and candidate c̃, each with (W, U, b)
 *   gru:     gates z, r and candidate h̃, each with (W, U, b)
 * W maps the input (hidden×in), U the previous hidden state (hidden×hidden).
 */
class RnnCell {
public:
  RnnCell() = default;
  RnnCell(const std::string &name, CellKind kind, std::size_t in, std::size_t hidden);

  CellKind kind() const noexcept { return kind_; }
  std::size_t in_dim() const noexcept { return in_; }
  std::size_t hidden_size() const noexcept { return hidden_; }

  void init(RngStream &rng);
  RnnState zero_state(Tape &tape, std::size_t batch) const;
  RnnState step(Tape &tape, Var x, const RnnState &prev, StepTrace *trace = nullptr);

  /// Parameter block by suffix, e.g. "W_z", "U_f", "b_c" (vanilla: "W_x", "W_h", "b").
  Parameter &block(const std::string &suffix);
  void collect(ParameterList &out);

private:
  struct Gate {
    Parameter w, u, b;
  };
  Gate &gate(std::size_t i) { return gates_[i]; }
  Var pre(Tape &tape, std::size_t g, Var x, Var h);

  std::string name_;
  CellKind kind_ = CellKind::vanilla;
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  std::vector<Gate> gates_;
};

/// Vector-level single steps; these return the full trace of intermediates.
StepTrace gru_step(RnnCell &cell, std::span<const double> x, std::span<const double> h_prev);
StepTrace lstm_step(RnnCell &cell, std::span<const double> x, std::span<const double> h_prev,
                    std::span<const double> c_prev);

/// Stacked cells; each layer consumes the full hidden sequence of the one below.
class RnnStack {
public:
  RnnStack() = default;
  RnnStack(const std::string &name, CellKind kind, std::size_t in, std::vector<std::size_t> hidden);

  void init(RngStream &rng);
  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t depth() const noexcept { return cells_.size(); }
  std::vector<RnnCell> &cells() noexcept { return cells_; }
  void collect(ParameterList &out);

  /// Runs all layers over xs (each batch×in); returns the top layer's
  /// hidden sequence. `state` carries per-layer state in and out.
  std::vector<Var> forward(Tape &tape, std::span<const Var> xs, std::vector<RnnState> &state);
  std::vector<RnnState> zero_state(Tape &tape, std::size_t batch) const;

private:
  std::vector<RnnCell> cells_;
};

/// Single-sequence unroll of one cell: sequence is T×in (rows are time).
/// Returns T×hidden. h0 may be empty (zeros). Throws "empty sequence" when T=0.
Tensor2 unroll(RnnCell &cell, const Tensor2 &sequence, std::span<const double> h0 = {});
/// Same for a stack; `state` (optional) carries layer states across calls.
Tensor2 unroll(RnnStack &stack, const Tensor2 &sequence,
               std::vector<std::pair<Tensor2, Tensor2>> *state = nullptr);

// ---- gradient checking -----------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = false;
  double worst() const;
};

using LossFn = std::function<Var(Tape &)>;

/**
 * Compares analytic gradients against central differences with step h.
 * Per parameter tensor the error is max_i |a_i − n_i| / max(max|a|, max|n|, 1e-8),
 * i.e. the worst entry error relative to the tensor's gradient scale.
 * `analytic_scale` multiplies the analytic gradient (1.0 normally; used for
 * negative controls).
 */
GradCheckReport grad_check(const ParameterList &params, const LossFn &loss, double tolerance,
                           double h = 1e-6, double analytic_scale = 1.0);

} // namespace vdt
