// SPDX-License-Identifier: Apache-2.0
#include "vdt/pinn.hpp"
#include "vdt/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vdt;

namespace {

Tensor2 random_matrix(std::size_t r, std::size_t c, RngStream &rng) {
  Tensor2 t(r, c);
  for (double &v : t.data()) v = rng.normal();
  return t;
}

void zero_all(Mlp &net) {
  ParameterList ps;
  net.collect(ps);
  for (Parameter *p : ps) p->value.fill(0.0);
}

double value(Tape &tape, Var v) { return tape.value(v)[0]; }

} // namespace

TEST(Euler, ZeroFieldIsFixedPoint) {
  PinnModel model("p", 3, 1, 1, {5}, {4}, 0.1);
  RngStream rng(1, 1);
  model.init(rng);
  zero_all(model.f_net());
  const Tensor2 x = random_matrix(2, 3, rng), u = random_matrix(2, 1, rng);
  EXPECT_EQ(model.euler_step(x, u), x);
}

TEST(Euler, ConstantFieldStepsLinearly) {
  PinnModel model("p", 3, 1, 1, {5}, {4}, 0.1);
  RngStream rng(2, 2);
  model.init(rng);
  zero_all(model.f_net());
  const std::vector<double> c{1.0, -2.0, 0.5};
  model.f_net().layers().back().bias().value = Tensor2::row(c);
  const Tensor2 x = random_matrix(1, 3, rng), u = random_matrix(1, 1, rng);
  const Tensor2 next = model.euler_step(x, u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(next[j], x[j] + 0.1 * c[j], 1e-15);
}

TEST(Euler, LinearFieldMatchesClosedForm) {
  // f(x, u) = A x + B u with no hidden layer; x_{n+1} = (I + dt A) x_n + dt B u_n.
  const double dt = 0.05;
  PinnModel model("p", 2, 1, 1, {}, {}, dt);
  RngStream rng(3, 3);
  model.init(rng);
  auto &layer = model.f_net().layers().front();
  layer.bias().value.fill(0.0);
  const Tensor2 &w = layer.weight().value; // 2 × 3: [A | B]
  const std::size_t steps = 40;
  const Tensor2 inputs = random_matrix(steps, 1, rng);
  const Tensor2 x0(1, 2, std::vector<double>{1.0, -0.5});
  const Tensor2 traj = model.rollout(x0, inputs);
  ASSERT_EQ(traj.rows(), steps + 1);
  std::vector<double> x{1.0, -0.5};
  for (std::size_t n = 0; n < steps; ++n) {
    const double a0 = w(0, 0) * x[0] + w(0, 1) * x[1] + w(0, 2) * inputs[n];
    const double a1 = w(1, 0) * x[0] + w(1, 1) * x[1] + w(1, 2) * inputs[n];
    x = {x[0] + dt * a0, x[1] + dt * a1};
    EXPECT_LT(std::abs(traj(n + 1, 0) - x[0]), 1e-9);
    EXPECT_LT(std::abs(traj(n + 1, 1) - x[1]), 1e-9);
  }
}

TEST(PhysicsLoss, VanishesOnEulerTrajectories) {
  RngStream rng(4, 4);
  for (int trial = 0; trial < 20; ++trial) {
    PinnModel model("p", 3, 2, 1, {6}, {4}, 0.01 + rng.uniform());
    model.init(rng);
    const Tensor2 inputs = random_matrix(15, 2, rng);
    const Tensor2 traj = model.rollout(random_matrix(1, 3, rng), inputs);
    EXPECT_LE(physics_loss(model, traj, inputs), 1e-12);
  }
}

TEST(PhysicsLoss, SingleUnitResidualIsOneThird) {
  PinnModel model("p", 3, 1, 1, {}, {}, 0.5);
  zero_all(model.f_net());
  // (x2 − x1)/dt − f = [1, 0, 0] with f ≡ 0.
  const Tensor2 states(2, 3, std::vector<double>{0.0, 1.0, 2.0, 0.5, 1.0, 2.0});
  EXPECT_NEAR(physics_loss(model, states, Tensor2(1, 1)), 1.0 / 3.0, 1e-15);
}

TEST(PhysicsLoss, NonNegativeAndNeedsTwoStates) {
  RngStream rng(5, 5);
  PinnModel model("p", 2, 1, 1, {4}, {}, 0.1);
  model.init(rng);
  for (int trial = 0; trial < 50; ++trial)
    EXPECT_GE(physics_loss(model, random_matrix(6, 2, rng), random_matrix(6, 1, rng)), 0.0);
  EXPECT_THROW(physics_loss(model, Tensor2(1, 2), Tensor2(1, 1)), std::invalid_argument);
}

TEST(TotalLoss, AffineInLambda) {
  RngStream rng(6, 6);
  PinnModel model("p", 3, 1, 2, {5}, {4}, 0.2);
  model.init(rng);
  const Tensor2 states = random_matrix(10, 3, rng), inputs = random_matrix(10, 1, rng), targets = random_matrix(10, 2, rng);
  const double phys = physics_loss(model, states, inputs);
  std::vector<double> totals;
  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    model.set_lambda(lambda);
    Tape tape(false);
    totals.push_back(value(tape, model.total_loss(tape, states, inputs, targets)));
  }
  EXPECT_NEAR((totals[2] - totals[1]) / 0.5, phys, 1e-9);
  EXPECT_NEAR((totals[3] - totals[2]) / 1.0, phys, 1e-9);
  EXPECT_NEAR(totals[3] - totals[2], 1.0 * phys, 1e-9); // doubling λ=1 adds λ·L_phys
  EXPECT_NEAR(totals[1] - totals[0], 0.5 * phys, 1e-9);
}

TEST(TotalLoss, RolloutGradientCheck) {
  RngStream rng(7, 7);
  for (int trial = 0; trial < 5; ++trial) {
    PinnModel model("p", 2, 1, 1, {5}, {4}, 0.1, 0.7);
    model.init(rng);
    const Tensor2 inputs = random_matrix(20, 1, rng), targets = random_matrix(20, 1, rng);
    const Tensor2 x0 = random_matrix(1, 2, rng);
    ParameterList ps;
    model.collect(ps);
    const auto report = grad_check(ps, [&](Tape &t) { return model.rollout_loss(t, x0, inputs, targets); }, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst();
  }
}

TEST(Battery, ZeroCurrentHoldsOpenCircuitVoltage) {
  BattNN model;
  RngStream rng(8, 8);
  model.init(rng);
  const std::vector<double> current(12, 0.0);
  const auto v = simulate_voltage(model, model.ecm(), current, 10.0);
  Tape tape(false);
  const Var q = tape.constant(Tensor2(1, 1, 1.0));
  const double vb = value(tape, model.open_circuit(q, model.soc(q, nullptr), nullptr));
  for (double x : v) EXPECT_EQ(x, vb);
}

TEST(Battery, ChargeConservation) {
  BattNN model;
  RngStream rng(9, 9);
  model.init(rng);
  const double dt = 30.0;
  Tensor2 currents(2, 25);
  for (double &i : currents.data()) i = 0.5 + 2.0 * rng.uniform();
  Tape tape(false);
  const auto roll = simulate_cell(tape, model, model.ecm(), currents, dt, nullptr);
  for (std::size_t b = 0; b < 2; ++b) {
    double drawn = 0.0;
    for (std::size_t n = 0; n < 25; ++n) drawn += currents(b, n) * dt;
    EXPECT_NEAR(tape.value(roll.states.back().q_b)[b], model.ecm().q_max - drawn, 1e-9);
  }
  EXPECT_LE(value(tape, cell_physics_loss(roll, dt)), 1e-20);
}

TEST(Battery, ForwardMatchesSimulatorWithSameComponents) {
  BattNN model;
  RngStream rng(10, 10);
  model.init(rng);
  DischargeProfile p;
  for (int n = 0; n < 30; ++n) {
    p.t.push_back(10.0 * n);
    p.current.push_back(1.0 + 0.5 * std::sin(0.3 * n));
    p.voltage.push_back(3.7);
  }
  const auto a = battnn_forward(model, p);
  const auto b = simulate_voltage(model, model.ecm(), p.current, 10.0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) EXPECT_LT(std::abs(a[n] - b[n]), 1e-9);
}

TEST(Battery, GeneratorIsSelfConsistent) {
  CellSpec spec;
  spec.discharges = 6;
  spec.noise = 0.0;
  spec.seed = 3;
  const auto profiles = synth_degrading_cell(spec);
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    ReferenceCell cell(spec.ecm, {spec.capacity_fade, spec.resistance_growth}, k);
    const auto v = simulate_voltage(cell, spec.ecm, profiles[k].current, spec.dt);
    for (std::size_t n = 0; n < v.size(); ++n) EXPECT_LT(std::abs(v[n] - profiles[k].voltage[n]), 1e-9);
  }
}

TEST(Battery, OutputRanges) {
  BattNN model;
  RngStream rng(11, 11);
  model.init(rng);
  for (auto *head : {&model.soc_head(), &model.vb_head(), &model.rsp_head()}) {
    for (double &v : head->mu_weight().value.data()) v *= 20.0;
    for (double &v : head->rho_weight().value.data()) v = 1.0;
  }
  Tensor2 q(401, 1);
  for (std::size_t i = 0; i < q.rows(); ++i) q[i] = -10.0 + 0.05 * static_cast<double>(i);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RngStream eps(s, 1);
    Tape tape(false);
    const Var soc = model.soc(tape.constant(q), &eps);
    for (double v : tape.value(soc).data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (double v : tape.value(model.inv_rsp(tape.constant(q), &eps)).data()) EXPECT_GT(v, 0.0);
  }
}

TEST(Battery, LambdaZeroIsDataPlusKl) {
  BattNN model({}, 0.5);
  RngStream rng(12, 12);
  model.init(rng);
  CellSpec spec;
  spec.discharges = 3;
  spec.steps = 8;
  const auto profiles = synth_degrading_cell(spec);
  std::vector<const DischargeProfile *> ptrs;
  for (const auto &p : profiles) ptrs.push_back(&p);
  model.set_lambda(0.0);
  Tape tape(false);
  const double beta = 1e-3;
  const double total = value(tape, battnn_total_loss(tape, model, ptrs, beta, {}, nullptr));
  double se = 0.0, count = 0.0;
  for (const auto &p : profiles) {
    const auto v = battnn_forward(model, p);
    for (std::size_t n = 0; n < v.size(); ++n, count += 1.0) se += (v[n] - p.voltage[n]) * (v[n] - p.voltage[n]);
  }
  const double kl = value(tape, model.kl(tape, {}));
  EXPECT_NEAR(total, se / count + beta * kl, 1e-12);
}

TEST(Discharge, ValidateRejectsNonUniformSpacing) {
  DischargeProfile p{0, {0.0, 1.0, 3.0}, {1, 1, 1}, {3.7, 3.6, 3.5}};
  EXPECT_THROW(p.validate(), std::invalid_argument);
  DischargeProfile q{0, {0.0}, {1}, {3.7}};
  EXPECT_THROW(q.validate(), std::invalid_argument);
}
