// SPDX-License-Identifier: Apache-2.0
#include "vdt/gradsuite.hpp"

#include "vdt/pinn.hpp"
#include "vdt/varlayer.hpp"

#include <stdexcept>

namespace vdt {

namespace {

constexpr std::uint64_t kGradStream = 0x47524144ULL; // "GRAD"

Tensor2 random_tensor(std::size_t rows, std::size_t cols, RngStream &rng, double spread = 1.0) {
  Tensor2 t(rows, cols);
  for (double &v : t.data()) v = spread * rng.normal();
  return t;
}

GradCheckReport check_dense(RngStream &rng, double tol, double h) {
  Mlp net("dense", {4, 5, 5, 3}, Activation::tanh, Activation::sigmoid);
  DenseLayer relu_layer("dense.relu", 3, 2, Activation::relu);
  net.init(rng);
  relu_layer.init(rng);
  const Tensor2 x = random_tensor(3, 4, rng), y = random_tensor(3, 2, rng);
  ParameterList params;
  net.collect(params);
  relu_layer.collect(params);
  return grad_check(params, [&](Tape &t) {
    return mse(relu_layer.forward(t, net.forward(t, t.constant(x))), t.constant(y));
  }, tol, h);
}

GradCheckReport check_rnn(CellKind kind, RngStream &rng, double tol, double h) {
  RnnStack stack("rnn", kind, 3, {4, 3});
  stack.init(rng);
  constexpr std::size_t steps = 4, batch = 2;
  std::vector<Tensor2> xs;
  for (std::size_t s = 0; s < steps; ++s) xs.push_back(random_tensor(batch, 3, rng));
  const Tensor2 y = random_tensor(batch * steps, 3, rng);
  ParameterList params;
  stack.collect(params);
  return grad_check(params, [&](Tape &t) {
    std::vector<Var> in;
    for (const auto &x : xs) in.push_back(t.constant(x));
    auto state = stack.zero_state(t, batch);
    const auto hs = stack.forward(t, in, state);
    return mse(stack_rows(hs), t.constant(y));
  }, tol, h);
}

GradCheckReport check_variational(RngStream &rng, double tol, double h) {
  VariationalLinear layer("var", 4, 2);
  layer.init(rng);
  for (Parameter *p : {&layer.rho_weight(), &layer.rho_bias()})
    for (double &v : p->value.data()) v = -3.0 + rng.normal();
  const Tensor2 x = random_tensor(5, 4, rng), y = random_tensor(5, 2, rng);
  const RngStream eps = rng.derive(1);
  const IsotropicPrior prior{0.5 + rng.uniform()};
  ParameterList params;
  layer.collect(params);
  return grad_check(params, [&](Tape &t) {
    return add(mse(layer.forward(t, t.constant(x), &eps), t.constant(y)), scale(layer.kl(t, prior), 1e-2));
  }, tol, h);
}

GradCheckReport check_pinn(RngStream &rng, double tol, double h) {
  PinnModel model("pinn", 2, 1, 1, {6}, {5}, 0.1, 0.5);
  model.init(rng);
  constexpr std::size_t steps = 5;
  const Tensor2 x0 = random_tensor(1, 2, rng, 0.5), u = random_tensor(steps, 1, rng), y = random_tensor(steps, 1, rng);
  // Data term on the rollout, physics term on a supplied trajectory.
  const Tensor2 states = random_tensor(steps + 1, 2, rng, 0.5);
  ParameterList params;
  model.collect(params);
  return grad_check(params, [&](Tape &t) {
    return add(model.rollout_loss(t, x0, u, y), model.physics_loss(t, states, u));
  }, tol, h);
}

GradCheckReport check_battnn(RngStream &rng, double tol, double h) {
  BattNN model({}, 0.5);
  model.init(rng);
  constexpr std::size_t steps = 4;
  DischargeProfile p;
  for (std::size_t n = 0; n < steps; ++n) {
    p.t.push_back(30.0 * static_cast<double>(n));
    p.current.push_back(0.5 + 2.0 * rng.uniform());
    p.voltage.push_back(3.6 + 0.2 * rng.normal());
  }
  const DischargeProfile *profiles[] = {&p};
  const RngStream eps = rng.derive(1);
  ParameterList params = model.trainable();
  return grad_check(params, [&](Tape &t) {
    return battnn_total_loss(t, model, profiles, 1e-3, IsotropicPrior{1.0}, &eps);
  }, tol, h);
}

} // namespace

const std::vector<std::string> &gradcheck_units() {
  static const std::vector<std::string> units{"dense", "vanilla_rnn", "lstm", "gru", "variational", "pinn_rollout",
                                              "battnn"};
  return units;
}

GradCheckReport check_unit(const std::string &unit, std::uint64_t seed, double tolerance, double h) {
  RngStream rng(seed, kGradStream);
  if (unit == "dense") return check_dense(rng, tolerance, h);
  if (unit == "vanilla_rnn") return check_rnn(CellKind::vanilla, rng, tolerance, h);
  if (unit == "lstm") return check_rnn(CellKind::lstm, rng, tolerance, h);
  if (unit == "gru") return check_rnn(CellKind::gru, rng, tolerance, h);
  if (unit == "variational") return check_variational(rng, tolerance, h);
  if (unit == "pinn_rollout") return check_pinn(rng, tolerance, h);
  if (unit == "battnn") return check_battnn(rng, tolerance, h);
  throw std::invalid_argument("unknown gradcheck unit '" + unit + "'");
}

std::vector<UnitCheck> run_gradcheck_suite(std::size_t instances, double tolerance, std::uint64_t base_seed,
                                           double h) {
  if (instances == 0) throw std::invalid_argument("run_gradcheck_suite: need at least one instance");
  std::vector<UnitCheck> out;
  for (const auto &unit : gradcheck_units()) {
    UnitCheck u{unit, instances, 0.0, "", true};
    for (std::size_t i = 0; i < instances; ++i) {
      const auto report = check_unit(unit, base_seed + i, tolerance, h);
      for (const auto &e : report.entries)
        if (e.max_rel_error >= u.worst) {
          u.worst = e.max_rel_error;
          u.worst_parameter = e.name;
        }
      u.passed = u.passed && report.passed;
    }
    out.push_back(u);
  }
  return out;
}

} // namespace vdt
