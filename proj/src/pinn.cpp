// SPDX-License-Identifier: Apache-2.0
#include "vdt/pinn.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace vdt {

// ---- DischargeProfile ---------------------------------------------------------------

void DischargeProfile::validate() const {
  if (t.size() != current.size() || t.size() != voltage.size())
    throw std::invalid_argument("discharge " + std::to_string(id) + ": column lengths differ");
  if (t.size() < 2) throw std::invalid_argument("discharge " + std::to_string(id) + ": need at least 2 steps");
  const double step = t[1] - t[0];
  if (!(step > 0.0)) throw std::invalid_argument("discharge " + std::to_string(id) + ": timestamps not increasing");
  for (std::size_t n = 1; n < t.size(); ++n) {
    if (std::abs((t[n] - t[n - 1]) - step) > 1e-6 * std::max(1.0, std::abs(step)))
      throw std::invalid_argument("discharge " + std::to_string(id) + ": non-uniform timestamps at step " +
                                  std::to_string(n));
  }
}

double DischargeProfile::dt() const {
  validate();
  return t[1] - t[0];
}

// ---- PinnModel ------------------------------------------------------------------------

namespace {

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t> &hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

} // namespace

PinnModel::PinnModel(const std::string &name, std::size_t state_dim, std::size_t input_dim, std::size_t output_dim,
                     std::vector<std::size_t> f_hidden, std::vector<std::size_t> h_hidden, double dt, double lambda)
    : state_dim_(state_dim), input_dim_(input_dim), dt_(dt), lambda_(lambda),
      f_net_(name + ".f", widths(state_dim + input_dim, f_hidden, state_dim), Activation::tanh, Activation::identity),
      h_net_(name + ".h", widths(state_dim, h_hidden, output_dim), Activation::tanh, Activation::identity) {
  if (!(dt > 0.0)) throw std::invalid_argument("PinnModel: dt must be positive");
  set_lambda(lambda);
}

void PinnModel::set_lambda(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("PinnModel: lambda must be non-negative");
  lambda_ = lambda;
}

void PinnModel::init(RngStream &rng) {
  f_net_.init(rng);
  h_net_.init(rng);
}

void PinnModel::collect(ParameterList &out) {
  f_net_.collect(out);
  h_net_.collect(out);
}

Var PinnModel::vector_field(Var x, Var u) { return f_net_.forward(*x.tape, concat_cols(x, u)); }

Var PinnModel::euler_step(Var x, Var u) { return add(x, scale(vector_field(x, u), dt_)); }

Tensor2 PinnModel::euler_step(const Tensor2 &x, const Tensor2 &u) {
  Tape tape(false);
  return tape.value(euler_step(tape.constant(x), tape.constant(u)));
}

Var PinnModel::decode(Var x) { return h_net_.forward(*x.tape, x); }

std::vector<Var> PinnModel::rollout(Var x0, std::span<const Var> inputs) {
  std::vector<Var> states{x0};
  states.reserve(inputs.size() + 1);
  for (const Var &u : inputs) states.push_back(euler_step(states.back(), u));
  return states;
}

Tensor2 PinnModel::rollout(const Tensor2 &x0, const Tensor2 &inputs) {
  Tape tape(false);
  std::vector<Var> us;
  for (std::size_t n = 0; n < inputs.rows(); ++n) us.push_back(tape.constant(inputs.slice_rows(n, n + 1)));
  const auto states = rollout(tape.constant(x0), us);
  std::vector<Tensor2> rows;
  for (const Var &s : states) rows.push_back(tape.value(s));
  return vstack(rows);
}

Var PinnModel::physics_loss(std::span<const Var> states, std::span<const Var> inputs) {
  if (states.size() < 2) throw std::invalid_argument("physics_loss: need at least 2 states");
  if (inputs.size() + 1 < states.size()) throw std::invalid_argument("physics_loss: too few inputs");
  std::vector<Var> residuals;
  residuals.reserve(states.size() - 1);
  for (std::size_t n = 0; n + 1 < states.size(); ++n) {
    const Var quotient = scale(sub(states[n + 1], states[n]), 1.0 / dt_);
    residuals.push_back(sub(quotient, vector_field(states[n], inputs[n])));
  }
  return mean(square(stack_rows(residuals)));
}

Var PinnModel::physics_loss(Tape &tape, const Tensor2 &states, const Tensor2 &inputs) {
  const std::size_t n = states.rows();
  if (n < 2) throw std::invalid_argument("physics_loss: need at least 2 states");
  if (inputs.rows() + 1 < n) throw std::invalid_argument("physics_loss: too few inputs");
  const Var head = tape.constant(states.slice_rows(0, n - 1));
  const Var tail = tape.constant(states.slice_rows(1, n));
  const Var u = tape.constant(inputs.slice_rows(0, n - 1));
  const Var residual = sub(scale(sub(tail, head), 1.0 / dt_), vector_field(head, u));
  return mean(square(residual));
}

Var PinnModel::total_loss(Tape &tape, const Tensor2 &states, const Tensor2 &inputs, const Tensor2 &targets) {
  const Var data = mse(decode(tape.constant(states)), tape.constant(targets));
  if (lambda_ == 0.0) return data;
  return add(data, scale(physics_loss(tape, states, inputs), lambda_));
}

Var PinnModel::rollout_loss(Tape &tape, const Tensor2 &x0, const Tensor2 &inputs, const Tensor2 &targets) {
  if (targets.rows() != inputs.rows())
    throw std::invalid_argument("rollout_loss: " + std::to_string(inputs.rows()) + " inputs vs " +
                                std::to_string(targets.rows()) + " targets");
  std::vector<Var> us;
  for (std::size_t n = 0; n < inputs.rows(); ++n) us.push_back(tape.constant(inputs.slice_rows(n, n + 1)));
  const auto states = rollout(tape.constant(x0), us);
  std::vector<Var> decoded;
  for (std::size_t n = 0; n < inputs.rows(); ++n) decoded.push_back(decode(states[n]));
  const Var data = mse(stack_rows(decoded), tape.constant(targets));
  if (lambda_ == 0.0) return data;
  return add(data, scale(physics_loss(states, us), lambda_));
}

double physics_loss(PinnModel &model, const Tensor2 &states, const Tensor2 &inputs) {
  Tape tape(false);
  return tape.value(model.physics_loss(tape, states, inputs))[0];
}

// ---- circuit rollout ----------------------------------------------------------------------

void EcmConstants::validate() const {
  if (!(q_max > 0.0 && c_sp > 0.0 && r_s >= 0.0 && tau_s > 0.0 && inv_cs >= 0.0))
    throw std::invalid_argument("EcmConstants: q_max, c_sp, tau_s must be positive; r_s, inv_cs non-negative");
}

CellRollout simulate_cell(Tape &tape, CellComponents &cell, const EcmConstants &ecm, const Tensor2 &currents,
                          double dt, const RngStream *eps) {
  ecm.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("simulate_cell: dt must be positive");
  const std::size_t batch = currents.rows(), steps = currents.cols();
  CellRollout roll;
  roll.states.push_back({tape.constant(Tensor2(batch, 1, ecm.q_max)), tape.constant(Tensor2(batch, 1)),
                         tape.constant(Tensor2(batch, 1))});
  for (std::size_t n = 0; n < steps; ++n) {
    Tensor2 in(batch, 1);
    for (std::size_t b = 0; b < batch; ++b) in[b] = currents(b, n);
    const Var i = tape.constant(std::move(in));
    const CellLatent x = roll.states.back();
    const Var q_norm = scale(x.q_b, 1.0 / ecm.q_max);
    const Var s = cell.soc(q_norm, eps);
    const Var v_b = cell.open_circuit(q_norm, s, eps);
    const Var g = cell.inv_rsp(s, eps);
    const Var v_sp = scale(x.q_sp, 1.0 / ecm.c_sp);
    Var v = sub(sub(v_b, scale(i, ecm.r_s)), v_sp);
    if (ecm.inv_cs != 0.0) v = sub(v, scale(x.q_s, ecm.inv_cs));
    roll.voltage.push_back(v);

    const CellLatent rate{scale(i, -1.0), sub(i, mul(g, v_sp)), sub(i, scale(x.q_s, 1.0 / ecm.tau_s))};
    roll.rates.push_back(rate);
    roll.states.push_back({add(x.q_b, scale(rate.q_b, dt)), add(x.q_sp, scale(rate.q_sp, dt)),
                           add(x.q_s, scale(rate.q_s, dt))});
  }
  return roll;
}

Var cell_physics_loss(const CellRollout &roll, double dt) {
  if (roll.rates.empty()) throw std::invalid_argument("cell_physics_loss: need at least 2 states");
  std::vector<Var> residuals;
  residuals.reserve(3 * roll.rates.size());
  const double inv_dt = 1.0 / dt;
  for (std::size_t n = 0; n < roll.rates.size(); ++n) {
    const CellLatent &a = roll.states[n], &b = roll.states[n + 1], &f = roll.rates[n];
    residuals.push_back(sub(scale(sub(b.q_b, a.q_b), inv_dt), f.q_b));
    residuals.push_back(sub(scale(sub(b.q_sp, a.q_sp), inv_dt), f.q_sp));
    residuals.push_back(sub(scale(sub(b.q_s, a.q_s), inv_dt), f.q_s));
  }
  return mean(square(stack_rows(residuals)));
}

// ---- ReferenceCell -------------------------------------------------------------------------

ReferenceCell::ReferenceCell(const EcmConstants &ecm, Ageing ageing, std::size_t discharge_index) {
  ecm.validate();
  const double k = static_cast<double>(discharge_index);
  const double capacity = 1.0 - ageing.capacity_fade * k;
  if (!(capacity > 0.1)) throw std::invalid_argument("ReferenceCell: capacity faded below 10%");
  capacity_ratio_ = 1.0 / capacity;
  conductance_ = 1.0 / (kRsp0 * (1.0 + ageing.resistance_growth * k));
}

Var ReferenceCell::soc(Var q_norm, const RngStream *) {
  return one_minus(scale(one_minus(q_norm), capacity_ratio_));
}

Var ReferenceCell::open_circuit(Var, Var soc, const RngStream *) {
  // 3.3 V + linear slope + a knee near empty
  return shift(add(scale(soc, 0.75), scale(tanh(shift(scale(soc, 6.0), -1.5)), 0.12)), 3.3);
}

Var ReferenceCell::inv_rsp(Var soc, const RngStream *) { return shift(scale(soc, 0.6 * conductance_), 0.7 * conductance_); }

std::vector<double> simulate_voltage(CellComponents &cell, const EcmConstants &ecm, std::span<const double> current,
                                     double dt) {
  Tape tape(false);
  const auto roll = simulate_cell(tape, cell, ecm, Tensor2::row(current), dt, nullptr);
  std::vector<double> v;
  v.reserve(roll.voltage.size());
  for (const Var &x : roll.voltage) v.push_back(tape.value(x)[0]);
  return v;
}

// ---- BattNN -------------------------------------------------------------------------------------

namespace {

std::size_t width(std::size_t w, double scale) {
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(static_cast<double>(w) * scale)));
}

const RngStream *substream(const RngStream *eps, std::uint64_t k, RngStream &slot) {
  if (eps == nullptr) return nullptr;
  slot = eps->derive(k);
  return &slot;
}

} // namespace

BattNN::BattNN(const EcmConstants &ecm, double scale)
    : ecm_(ecm),
      soc_net_("battnn.soc", {1, width(4, scale), width(4, scale)}, Activation::tanh, Activation::tanh),
      vb_net_("battnn.vb", {2, width(8, scale), width(8, scale), width(8, scale)}, Activation::tanh, Activation::tanh),
      rsp_net_("battnn.rsp", {1, width(8, scale), width(8, scale), width(4, scale)}, Activation::tanh,
               Activation::tanh),
      soc_head_("battnn.soc.head", width(4, scale), 1), vb_head_("battnn.vb.head", width(8, scale), 1),
      rsp_head_("battnn.rsp.head", width(4, scale), 1), noise_("battnn.noise", Tensor2(1, 1), ParamRole::variational) {
  ecm.validate();
}

void BattNN::init(RngStream &rng) {
  soc_net_.init(rng);
  soc_head_.init(rng);
  vb_net_.init(rng);
  vb_head_.init(rng);
  rsp_net_.init(rng);
  rsp_head_.init(rng);
  noise_.value.fill(0.0);
}

Var BattNN::soc(Var q_norm, const RngStream *eps) {
  RngStream slot;
  return sigmoid(soc_head_.forward(*q_norm.tape, soc_net_.forward(*q_norm.tape, q_norm), substream(eps, 0, slot)));
}

Var BattNN::open_circuit(Var q_norm, Var soc, const RngStream *eps) {
  RngStream slot;
  Tape &tape = *q_norm.tape;
  const Var h = vb_net_.forward(tape, concat_cols(q_norm, soc));
  return shift(vb_head_.forward(tape, h, substream(eps, 1, slot)), ecm_.v_nominal);
}

Var BattNN::inv_rsp(Var soc, const RngStream *eps) {
  RngStream slot;
  Tape &tape = *soc.tape;
  const Var h = rsp_net_.forward(tape, soc);
  return scale(softplus(rsp_head_.forward(tape, h, substream(eps, 2, slot))), 1.0 / ReferenceCell::kRsp0);
}

CellRollout BattNN::forward(Tape &tape, const Tensor2 &currents, double dt, const RngStream *eps) {
  return simulate_cell(tape, *this, ecm_, currents, dt, eps);
}

Var BattNN::kl(Tape &tape, const IsotropicPrior &prior) {
  return add(add(soc_head_.kl(tape, prior), vb_head_.kl(tape, prior)), rsp_head_.kl(tape, prior));
}

ParameterList BattNN::trainable() {
  ParameterList out;
  soc_net_.collect(out);
  soc_head_.collect(out);
  vb_net_.collect(out);
  vb_head_.collect(out);
  rsp_net_.collect(out);
  rsp_head_.collect(out);
  return out;
}

ParameterList BattNN::state() {
  ParameterList out = trainable();
  out.push_back(&noise_);
  return out;
}

std::vector<double> battnn_forward(BattNN &model, const DischargeProfile &profile, const RngStream *eps) {
  profile.validate();
  Tape tape(false);
  const auto roll = model.forward(tape, Tensor2::row(profile.current), profile.dt(), eps);
  std::vector<double> v;
  for (const Var &x : roll.voltage) v.push_back(tape.value(x)[0]);
  return v;
}

namespace {

/// Groups profile positions by (length, dt) so each group rolls out as one batch.
std::vector<std::vector<std::size_t>> group_profiles(std::span<const DischargeProfile *const> profiles) {
  std::map<std::pair<std::size_t, double>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < profiles.size(); ++k) groups[{profiles[k]->size(), profiles[k]->dt()}].push_back(k);
  std::vector<std::vector<std::size_t>> out;
  for (auto &[key, idx] : groups) out.push_back(std::move(idx));
  return out;
}

Tensor2 gather(std::span<const DischargeProfile *const> profiles, const std::vector<std::size_t> &idx,
               std::vector<double> DischargeProfile::*field) {
  const std::size_t steps = profiles[idx.front()]->size();
  Tensor2 out(idx.size(), steps);
  for (std::size_t b = 0; b < idx.size(); ++b)
    for (std::size_t n = 0; n < steps; ++n) out(b, n) = (profiles[idx[b]]->*field)[n];
  return out;
}

/// Voltage nodes of a rollout in step-major order, and the matching targets.
Var stacked_voltage(const CellRollout &roll) { return stack_rows(roll.voltage); }

Tensor2 step_major(const Tensor2 &bn) {
  Tensor2 out(bn.size(), 1);
  for (std::size_t n = 0; n < bn.cols(); ++n)
    for (std::size_t b = 0; b < bn.rows(); ++b) out[n * bn.rows() + b] = bn(b, n);
  return out;
}

} // namespace

Var battnn_total_loss(Tape &tape, BattNN &model, std::span<const DischargeProfile *const> profiles, double beta,
                      const IsotropicPrior &prior, const RngStream *eps) {
  if (profiles.empty()) throw std::invalid_argument("battnn_total_loss: no profiles");
  std::size_t total = 0;
  for (const auto *p : profiles) total += p->size();
  Var loss{};
  bool first = true;
  for (const auto &idx : group_profiles(profiles)) {
    const double dt = profiles[idx.front()]->dt();
    const auto roll = model.forward(tape, gather(profiles, idx, &DischargeProfile::current), dt, eps);
    const Tensor2 target = step_major(gather(profiles, idx, &DischargeProfile::voltage));
    const double weight = static_cast<double>(target.size()) / static_cast<double>(total);
    Var term = mse(stacked_voltage(roll), tape.constant(target));
    if (model.lambda() != 0.0) term = add(term, scale(cell_physics_loss(roll, dt), model.lambda()));
    term = scale(term, weight);
    loss = first ? term : add(loss, term);
    first = false;
  }
  if (beta > 0.0) loss = add(loss, scale(model.kl(tape, prior), beta));
  return loss;
}

FitResult train_battnn(BattNN &model, std::span<const DischargeProfile> profiles, const TrainConfig &cfg,
                       AdamState *optimizer, bool fit_noise) {
  if (profiles.empty()) throw std::invalid_argument("train_battnn: no profiles");
  for (const auto &p : profiles) p.validate();
  const IsotropicPrior prior{cfg.prior_sigma};
  const BatchLoss loss = [&](Tape &tape, std::span<const std::size_t> batch, const RngStream &eps) {
    std::vector<const DischargeProfile *> chosen;
    for (std::size_t k : batch) chosen.push_back(&profiles[k]);
    return battnn_total_loss(tape, model, chosen, cfg.beta, prior, &eps);
  };
  FitResult res = fit(model.trainable(), profiles.size(), loss, cfg, optimizer);
  if (fit_noise) {
    double sq = 0.0;
    std::size_t count = 0;
    for (const auto &p : profiles) {
      const auto v = battnn_forward(model, p);
      for (std::size_t n = 0; n < v.size(); ++n) sq += (v[n] - p.voltage[n]) * (v[n] - p.voltage[n]);
      count += v.size();
    }
    model.noise().value[0] = std::sqrt(sq / static_cast<double>(count));
  }
  return res;
}

std::vector<PredictiveSummary> predict_battnn(BattNN &model, std::span<const DischargeProfile> profiles,
                                              std::size_t samples, const RngStream &stream, bool observation_noise) {
  if (samples < 2) throw std::invalid_argument("need >=2 samples for quantiles");
  std::vector<const DischargeProfile *> ptrs;
  for (const auto &p : profiles) ptrs.push_back(&p);
  std::vector<PredictiveSummary> out(profiles.size());
  const double sigma = observation_noise ? model.noise().value[0] : 0.0;
  for (const auto &idx : group_profiles(ptrs)) {
    const double dt = ptrs[idx.front()]->dt();
    const Tensor2 currents = gather(ptrs, idx, &DischargeProfile::current);
    const std::size_t steps = currents.cols();
    std::vector<std::vector<Tensor2>> draws(idx.size());
    for (std::size_t s = 0; s < samples; ++s) {
      const RngStream pass = stream.derive(s);
      const RngStream theta = pass.derive(0);
      Tape tape(false);
      const auto roll = model.forward(tape, currents, dt, &theta);
      std::vector<double> z;
      if (sigma != 0.0) z = gaussian_draw(pass.derive(1), idx.size() * steps);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        Tensor2 d(steps, 1);
        for (std::size_t n = 0; n < steps; ++n) {
          d[n] = tape.value(roll.voltage[n])[b];
          if (sigma != 0.0) d[n] += sigma * z[b * steps + n];
        }
        draws[b].push_back(std::move(d));
      }
    }
    for (std::size_t b = 0; b < idx.size(); ++b) out[idx[b]] = summarize_draws(std::move(draws[b]));
  }
  return out;
}

} // namespace vdt
