// SPDX-License-Identifier: Apache-2.0
#include "vdt/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vdt {

Activation parse_activation(const std::string &name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

Var activate(Var x, Activation act) {
  switch (act) {
  case Activation::identity: return x;
  case Activation::relu: return relu(x);
  case Activation::tanh: return tanh(x);
  case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

void init_uniform_fan_in(Tensor2 &w, std::size_t fan_in, RngStream &rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto &v : w.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
}

// ---- DenseLayer -------------------------------------------------------------

DenseLayer::DenseLayer(const std::string &name, std::size_t in, std::size_t out, Activation act)
    : weight_(name + ".W", Tensor2(out, in), ParamRole::weight),
      bias_(name + ".b", Tensor2(1, out), ParamRole::bias), act_(act) {}

void DenseLayer::init(RngStream &rng) {
  init_uniform_fan_in(weight_.value, in_dim(), rng);
  bias_.value.fill(0.0);
}

Var DenseLayer::forward(Tape &tape, Var x) {
  const Tensor2 &xv = tape.value(x);
  if (xv.cols() != in_dim()) {
    throw std::invalid_argument("dense_forward: input shape " + xv.shape_string() +
                                " incompatible with weight shape " +
                                weight_.value.shape_string());
  }
  return activate(affine(x, tape.param(weight_), tape.param(bias_)), act_);
}

Tensor2 DenseLayer::forward(const Tensor2 &x) {
  Tape tape(false);
  return tape.value(forward(tape, tape.constant(x)));
}

void DenseLayer::collect(ParameterList &out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---- Mlp ----------------------------------------------------------------------

Mlp::Mlp(const std::string &name, std::vector<std::size_t> widths, Activation hidden,
         Activation last) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool is_last = i + 2 == widths.size();
    layers_.emplace_back(name + ".l" + std::to_string(i), widths[i], widths[i + 1],
                         is_last ? last : hidden);
  }
}

void Mlp::init(RngStream &rng) {
  for (auto &l : layers_) l.init(rng);
}

Var Mlp::forward(Tape &tape, Var x) {
  for (auto &l : layers_) x = l.forward(tape, x);
  return x;
}

std::size_t Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

void Mlp::collect(ParameterList &out) {
  for (auto &l : layers_) l.collect(out);
}

// ---- RnnCell ------------------------------------------------------------------

CellKind parse_cell_kind(const std::string &name) {
  if (name == "vanilla" || name == "rnn") return CellKind::vanilla;
  if (name == "lstm") return CellKind::lstm;
  if (name == "gru") return CellKind::gru;
  throw std::invalid_argument("unknown cell kind: " + name);
}

std::string to_string(CellKind kind) {
  switch (kind) {
  case CellKind::vanilla: return "vanilla";
  case CellKind::lstm: return "lstm";
  case CellKind::gru: return "gru";
  }
  return "?";
}

namespace {
// Gate suffixes per cell kind, in storage order.
std::vector<std::string> gate_names(CellKind kind) {
  switch (kind) {
  case CellKind::vanilla: return {""};
  case CellKind::lstm: return {"i", "f", "o", "c"};
  case CellKind::gru: return {"z", "r", "h"};
  }
  return {};
}
} // namespace

RnnCell::RnnCell(const std::string &name, CellKind kind, std::size_t in, std::size_t hidden)
    : name_(name), kind_(kind), in_(in), hidden_(hidden) {
  if (in == 0 || hidden == 0) throw std::invalid_argument("RnnCell: zero dimension");
  for (const auto &g : gate_names(kind)) {
    Gate gate;
    if (kind == CellKind::vanilla) {
      gate.w = Parameter(name + ".W_x", Tensor2(hidden, in));
      gate.u = Parameter(name + ".W_h", Tensor2(hidden, hidden));
      gate.b = Parameter(name + ".b", Tensor2(1, hidden), ParamRole::bias);
    } else {
      gate.w = Parameter(name + ".W_" + g, Tensor2(hidden, in));
      gate.u = Parameter(name + ".U_" + g, Tensor2(hidden, hidden));
      gate.b = Parameter(name + ".b_" + g, Tensor2(1, hidden), ParamRole::bias);
    }
    gates_.push_back(std::move(gate));
  }
}

void RnnCell::init(RngStream &rng) {
  for (auto &g : gates_) {
    init_uniform_fan_in(g.w.value, in_, rng);
    init_uniform_fan_in(g.u.value, hidden_, rng);
    g.b.value.fill(0.0);
  }
}

Parameter &RnnCell::block(const std::string &suffix) {
  const std::string full = name_ + "." + suffix;
  for (auto &g : gates_)
    for (Parameter *p : {&g.w, &g.u, &g.b})
      if (p->name == full) return *p;
  throw std::invalid_argument("RnnCell: no parameter block " + full);
}

void RnnCell::collect(ParameterList &out) {
  for (auto &g : gates_) {
    out.push_back(&g.w);
    out.push_back(&g.u);
    out.push_back(&g.b);
  }
}

RnnState RnnCell::zero_state(Tape &tape, std::size_t batch) const {
  RnnState s;
  s.h = tape.constant(Tensor2(batch, hidden_));
  if (kind_ == CellKind::lstm) s.c = tape.constant(Tensor2(batch, hidden_));
  return s;
}

Var RnnCell::pre(Tape &tape, std::size_t g, Var x, Var h) {
  Gate &gt = gates_[g];
  return affine2(x, tape.param(gt.w), h, tape.param(gt.u), tape.param(gt.b));
}

RnnState RnnCell::step(Tape &tape, Var x, const RnnState &prev, StepTrace *trace) {
  const Tensor2 &xv = tape.value(x);
  const Tensor2 &hv = tape.value(prev.h);
  if (xv.cols() != in_ || hv.cols() != hidden_ || xv.rows() != hv.rows()) {
    throw std::invalid_argument("rnn step: input " + xv.shape_string() + " / state " +
                                hv.shape_string() + " incompatible with cell (" +
                                std::to_string(in_) + " -> " + std::to_string(hidden_) + ")");
  }
  RnnState next;
  switch (kind_) {
  case CellKind::vanilla: {
    next.h = tanh(pre(tape, 0, x, prev.h));
    break;
  }
  case CellKind::lstm: {
    if (tape.value(prev.c).cols() != hidden_) throw std::invalid_argument("lstm step: cell state width");
    Var i = sigmoid(pre(tape, 0, x, prev.h));
    Var f = sigmoid(pre(tape, 1, x, prev.h));
    Var o = sigmoid(pre(tape, 2, x, prev.h));
    Var g = tanh(pre(tape, 3, x, prev.h));
    next.c = add(mul(f, prev.c), mul(i, g));
    next.h = mul(o, tanh(next.c));
    if (trace) {
      trace->input_gate = tape.value(i);
      trace->forget_gate = tape.value(f);
      trace->output_gate = tape.value(o);
      trace->candidate = tape.value(g);
      trace->c_prev = tape.value(prev.c);
      trace->c = tape.value(next.c);
    }
    break;
  }
  case CellKind::gru: {
    Var z = sigmoid(pre(tape, 0, x, prev.h));
    Var r = sigmoid(pre(tape, 1, x, prev.h));
    Var cand = tanh(pre(tape, 2, x, mul(r, prev.h)));
    next.h = add(mul(one_minus(z), prev.h), mul(z, cand));
    if (trace) {
      trace->update_gate = tape.value(z);
      trace->reset_gate = tape.value(r);
      trace->candidate = tape.value(cand);
    }
    break;
  }
  }
  if (trace) {
    trace->h_prev = tape.value(prev.h);
    trace->h = tape.value(next.h);
  }
  return next;
}

StepTrace gru_step(RnnCell &cell, std::span<const double> x, std::span<const double> h_prev) {
  if (cell.kind() != CellKind::gru) throw std::invalid_argument("gru_step: cell is not a GRU");
  Tape tape(false);
  RnnState prev{tape.constant(Tensor2::row(h_prev)), {}};
  StepTrace trace;
  cell.step(tape, tape.constant(Tensor2::row(x)), prev, &trace);
  return trace;
}

StepTrace lstm_step(RnnCell &cell, std::span<const double> x, std::span<const double> h_prev,
                    std::span<const double> c_prev) {
  if (cell.kind() != CellKind::lstm) throw std::invalid_argument("lstm_step: cell is not an LSTM");
  Tape tape(false);
  RnnState prev{tape.constant(Tensor2::row(h_prev)), tape.constant(Tensor2::row(c_prev))};
  StepTrace trace;
  cell.step(tape, tape.constant(Tensor2::row(x)), prev, &trace);
  return trace;
}

// ---- RnnStack -----------------------------------------------------------------

RnnStack::RnnStack(const std::string &name, CellKind kind, std::size_t in,
                   std::vector<std::size_t> hidden) {
  if (hidden.empty()) throw std::invalid_argument("RnnStack needs at least one layer");
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    cells_.emplace_back(name + ".cell" + std::to_string(i), kind, width, hidden[i]);
    width = hidden[i];
  }
}

void RnnStack::init(RngStream &rng) {
  for (auto &c : cells_) c.init(rng);
}

std::size_t RnnStack::in_dim() const { return cells_.empty() ? 0 : cells_.front().in_dim(); }
std::size_t RnnStack::out_dim() const { return cells_.empty() ? 0 : cells_.back().hidden_size(); }

void RnnStack::collect(ParameterList &out) {
  for (auto &c : cells_) c.collect(out);
}

std::vector<RnnState> RnnStack::zero_state(Tape &tape, std::size_t batch) const {
  std::vector<RnnState> s;
  for (const auto &c : cells_) s.push_back(c.zero_state(tape, batch));
  return s;
}

std::vector<Var> RnnStack::forward(Tape &tape, std::span<const Var> xs,
                                   std::vector<RnnState> &state) {
  if (xs.empty()) throw std::invalid_argument("empty sequence");
  if (state.size() != cells_.size()) state = zero_state(tape, tape.value(xs.front()).rows());
  std::vector<Var> seq(xs.begin(), xs.end());
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    for (auto &v : seq) {
      state[l] = cells_[l].step(tape, v, state[l]);
      v = state[l].h;
    }
  }
  return seq;
}

Tensor2 unroll(RnnCell &cell, const Tensor2 &sequence, std::span<const double> h0) {
  if (sequence.rows() == 0) throw std::invalid_argument("empty sequence");
  Tape tape(false);
  RnnState s = cell.zero_state(tape, 1);
  if (!h0.empty()) {
    if (h0.size() != cell.hidden_size()) throw std::invalid_argument("unroll: h0 width mismatch");
    s.h = tape.constant(Tensor2::row(h0));
  }
  Tensor2 out(sequence.rows(), cell.hidden_size());
  for (std::size_t t = 0; t < sequence.rows(); ++t) {
    s = cell.step(tape, tape.constant(Tensor2::row(sequence.row_span(t))), s);
    const Tensor2 &h = tape.value(s.h);
    std::copy(h.data().begin(), h.data().end(), out.row_span(t).begin());
  }
  return out;
}

Tensor2 unroll(RnnStack &stack, const Tensor2 &sequence,
               std::vector<std::pair<Tensor2, Tensor2>> *state) {
  if (sequence.rows() == 0) throw std::invalid_argument("empty sequence");
  Tape tape(false);
  std::vector<RnnState> s = stack.zero_state(tape, 1);
  if (state && state->size() == s.size()) {
    for (std::size_t l = 0; l < s.size(); ++l) {
      s[l].h = tape.constant((*state)[l].first);
      if (stack.cells()[l].kind() == CellKind::lstm) s[l].c = tape.constant((*state)[l].second);
    }
  }
  std::vector<Var> xs;
  for (std::size_t t = 0; t < sequence.rows(); ++t)
    xs.push_back(tape.constant(Tensor2::row(sequence.row_span(t))));
  auto hs = stack.forward(tape, xs, s);
  if (state) {
    state->clear();
    for (std::size_t l = 0; l < s.size(); ++l) {
      Tensor2 c = stack.cells()[l].kind() == CellKind::lstm ? tape.value(s[l].c) : Tensor2();
      state->emplace_back(tape.value(s[l].h), std::move(c));
    }
  }
  Tensor2 out(sequence.rows(), stack.out_dim());
  for (std::size_t t = 0; t < hs.size(); ++t) {
    const Tensor2 &h = tape.value(hs[t]);
    std::copy(h.data().begin(), h.data().end(), out.row_span(t).begin());
  }
  return out;
}

// ---- grad_check -----------------------------------------------------------------

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto &e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradCheckReport grad_check(const ParameterList &params, const LossFn &loss, double tolerance,
                           double h, double analytic_scale) {
  if (params.empty()) throw std::invalid_argument("grad_check: no trainable parameters");
  for (Parameter *p : params) p->zero_grad();
  {
    Tape tape(true);
    Var l = loss(tape);
    tape.backward(l);
  }
  auto evaluate = [&loss]() {
    Tape tape(false);
    return tape.value(loss(tape))[0];
  };
  GradCheckReport report;
  report.tolerance = tolerance;
  for (Parameter *p : params) {
    double scale = 1e-8, max_err = 0.0;
    std::vector<double> numeric(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = evaluate();
      p->value[i] = orig - h;
      const double down = evaluate();
      p->value[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = p->grad[i] * analytic_scale;
      scale = std::max({scale, std::abs(a), std::abs(numeric[i])});
    }
    for (std::size_t i = 0; i < numeric.size(); ++i)
      max_err = std::max(max_err, std::abs(p->grad[i] * analytic_scale - numeric[i]));
    report.entries.push_back({p->name, max_err / scale});
  }
  report.passed = report.worst() < tolerance;
  return report;
}

} // namespace vdt
