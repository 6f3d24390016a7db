// SPDX-License-Identifier: Apache-2.0
#include "vdt/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vdt {

namespace {

std::string join_widths(const std::vector<std::size_t> &w) {
  std::ostringstream os;
  for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "->" : "") << w[i];
  return os.str();
}

std::size_t scaled(std::size_t width, double scale) {
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(static_cast<double>(width) * scale)));
}

} // namespace

// ---- VdtModel -------------------------------------------------------------------

Var VdtModel::forward(Tape &tape, const Tensor2 &x, const RngStream *eps) {
  if (x.cols() != input_width()) {
    throw std::invalid_argument("model input shape " + x.shape_string() + " incompatible with input width " +
                                std::to_string(input_width()));
  }
  return head().forward(tape, features(tape, x), eps);
}

ParameterList VdtModel::trainable() {
  ParameterList out;
  collect_trunk(out);
  head().collect(out);
  return out;
}

ParameterList VdtModel::state() {
  ParameterList out = trainable();
  head().collect_buffers(out);
  return out;
}

Tensor2 VdtModel::predict_mean(const Tensor2 &x) {
  Tape tape(false);
  return tape.value(forward(tape, x, nullptr));
}

PredictiveSummary VdtModel::predict(const Tensor2 &x, std::size_t samples, const RngStream &stream,
                                    bool observation_noise) {
  if (samples < 2) throw std::invalid_argument("need >=2 samples for quantiles");
  Tape tape(false);
  const Var feats = features(tape, x);
  const Tensor2 &noise = head().noise().value;
  const bool add_noise = observation_noise && std::any_of(noise.data().begin(), noise.data().end(),
                                                          [](double s) { return s != 0.0; });
  const SampledForward pass = [&](const RngStream &pass_stream) {
    const RngStream theta_stream = pass_stream.derive(0);
    Tensor2 out = tape.value(head().forward(tape, feats, &theta_stream));
    if (add_noise) {
      const auto z = gaussian_draw(pass_stream.derive(1), out.size());
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += noise[c] * z[r * out.cols() + c];
    }
    return out;
  };
  return predict_with_ci(pass, samples, stream);
}

// ---- VariationalFnn -----------------------------------------------------------------

VariationalFnn::VariationalFnn(const std::string &name, std::vector<std::size_t> widths, std::size_t out,
                               Activation hidden)
    : trunk_(name + ".trunk", widths, hidden, hidden), head_(name + ".head", widths.back(), out) {}

void VariationalFnn::init(RngStream &rng) {
  trunk_.init(rng);
  head_.init(rng);
}

Var VariationalFnn::features(Tape &tape, const Tensor2 &x) { return trunk_.forward(tape, tape.constant(x)); }

std::string VariationalFnn::describe() const {
  std::vector<std::size_t> w{trunk_.in_dim()};
  for (const auto &l : trunk_.layers()) w.push_back(l.out_dim());
  return "vfnn " + join_widths(w) + " -> var " + std::to_string(head_.in_dim()) + "->" +
         std::to_string(head_.out_dim());
}

// ---- VariationalRnn ---------------------------------------------------------------------

VariationalRnn::VariationalRnn(const std::string &name, const RnnSpec &spec) : spec_(spec) {
  if (spec.seq_len == 0 || spec.features == 0) throw std::invalid_argument("VariationalRnn: empty input shape");
  if (spec.hidden.empty()) throw std::invalid_argument("VariationalRnn: need at least one recurrent layer");
  std::size_t width = spec.features;
  if (!spec.pre.empty()) {
    std::vector<std::size_t> w{width};
    w.insert(w.end(), spec.pre.begin(), spec.pre.end());
    pre_ = Mlp(name + ".pre", w, spec.dense_act, spec.dense_act);
    width = spec.pre.back();
  }
  rnn_ = RnnStack(name + ".rnn", spec.cell, width, spec.hidden);
  width = spec.hidden.back();
  if (!spec.post.empty()) {
    std::vector<std::size_t> w{width};
    w.insert(w.end(), spec.post.begin(), spec.post.end());
    post_ = Mlp(name + ".post", w, spec.dense_act, spec.dense_act);
    width = spec.post.back();
  }
  head_ = VariationalLinear(name + ".head", width, spec.out);
}

void VariationalRnn::init(RngStream &rng) {
  if (!pre_.empty()) pre_.init(rng);
  rnn_.init(rng);
  if (!post_.empty()) post_.init(rng);
  head_.init(rng);
}

void VariationalRnn::collect_trunk(ParameterList &out) {
  if (!pre_.empty()) pre_.collect(out);
  rnn_.collect(out);
  if (!post_.empty()) post_.collect(out);
}

Var VariationalRnn::features(Tape &tape, const Tensor2 &x) {
  const std::size_t n = x.rows(), f = spec_.features;
  std::vector<Var> steps;
  steps.reserve(spec_.seq_len);
  for (std::size_t t = 0; t < spec_.seq_len; ++t) {
    Tensor2 xt(n, f);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) xt(r, c) = x(r, t * f + c);
    Var v = tape.constant(std::move(xt));
    if (!pre_.empty()) v = pre_.forward(tape, v);
    steps.push_back(v);
  }
  auto state = rnn_.zero_state(tape, n);
  const auto hs = rnn_.forward(tape, steps, state);
  Var h = hs.back();
  if (!post_.empty()) h = post_.forward(tape, h);
  return h;
}

std::string VariationalRnn::describe() const {
  std::ostringstream os;
  os << "v" << to_string(spec_.cell) << " L=" << spec_.seq_len << " F=" << spec_.features;
  if (!spec_.pre.empty()) os << " pre " << join_widths(spec_.pre);
  os << " rnn " << join_widths(spec_.hidden);
  if (!spec_.post.empty()) os << " post " << join_widths(spec_.post);
  os << " -> var " << head_.in_dim() << "->" << head_.out_dim();
  return os.str();
}

// ---- presets -------------------------------------------------------------------------

std::unique_ptr<VdtModel> make_preset(const std::string &preset, std::size_t input_width,
                                      std::size_t output_width, double scale, std::size_t seq_len,
                                      CellKind cell) {
  if (!(scale > 0.0 && scale <= 1.0)) throw std::invalid_argument("preset scale must be in (0, 1]");
  if (preset == "vfnn_chf") {
    const std::size_t h = scaled(100, scale);
    return std::make_unique<VariationalFnn>("vfnn", std::vector<std::size_t>{input_width, h, h, h}, output_width,
                                            Activation::relu);
  }
  if (preset == "vrnn_psml") {
    const std::size_t h = scaled(35, scale);
    RnnSpec s;
    s.seq_len = seq_len;
    s.features = input_width;
    s.pre = {h};
    s.cell = cell;
    s.hidden = {h};
    s.post = {h, h};
    s.out = output_width;
    return std::make_unique<VariationalRnn>("vrnn", s);
  }
  if (preset == "vrnn_httf") {
    RnnSpec s;
    s.seq_len = seq_len;
    s.features = input_width;
    s.cell = cell;
    s.hidden = {scaled(48, scale), scaled(64, scale), scaled(32, scale)};
    s.post = {scaled(32, scale)};
    s.out = output_width;
    return std::make_unique<VariationalRnn>("vrnn", s);
  }
  throw std::invalid_argument("unknown preset '" + preset + "'");
}

// ---- training ------------------------------------------------------------------------

void fit_observation_noise(VdtModel &model, const Tensor2 &x, const Tensor2 &y) {
  const Tensor2 pred = model.predict_mean(x);
  if (!pred.same_shape(y))
    throw std::invalid_argument("fit_observation_noise: shape mismatch " + pred.shape_string() + " vs " +
                                y.shape_string());
  Tensor2 &noise = model.head().noise().value;
  for (std::size_t c = 0; c < y.cols(); ++c) {
    double sq = 0.0;
    for (std::size_t r = 0; r < y.rows(); ++r) sq += (y(r, c) - pred(r, c)) * (y(r, c) - pred(r, c));
    noise[c] = std::sqrt(sq / static_cast<double>(y.rows()));
  }
}

FitResult train_model(VdtModel &model, const Tensor2 &x, const Tensor2 &y, const TrainConfig &cfg,
                      AdamState *optimizer, bool fit_noise) {
  if (x.rows() != y.rows())
    throw std::invalid_argument("train_model: " + std::to_string(x.rows()) + " inputs vs " +
                                std::to_string(y.rows()) + " targets");
  if (y.cols() != model.output_width())
    throw std::invalid_argument("train_model: target width " + std::to_string(y.cols()) + " vs model output " +
                                std::to_string(model.output_width()));
  const IsotropicPrior prior{cfg.prior_sigma};
  const BatchLoss loss = [&](Tape &tape, std::span<const std::size_t> batch, const RngStream &eps) {
    const Var pred = model.forward(tape, x.select_rows(batch), &eps);
    Var l = mse(pred, tape.constant(y.select_rows(batch)));
    if (cfg.beta > 0.0) l = add(l, scale(model.kl(tape, prior), cfg.beta));
    return l;
  };
  FitResult res = fit(model.trainable(), x.rows(), loss, cfg, optimizer);
  if (fit_noise) fit_observation_noise(model, x, y);
  return res;
}

} // namespace vdt
