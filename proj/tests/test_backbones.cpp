// SPDX-License-Identifier: Apache-2.0
#include "vdt/backbones.hpp"
#include "vdt/gradsuite.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vdt;

namespace {

void fill_random(RnnCell &cell, RngStream &rng, double scale = 0.5) {
  ParameterList ps;
  cell.collect(ps);
  for (Parameter *p : ps)
    for (double &v : p->value.data()) v = scale * rng.normal();
}

Tensor2 random_matrix(std::size_t r, std::size_t c, RngStream &rng) {
  Tensor2 t(r, c);
  for (double &v : t.data()) v = rng.normal();
  return t;
}

} // namespace

TEST(Dense, IdentityWeightsPassInputThrough) {
  DenseLayer layer("d", 3, 3, Activation::identity);
  layer.weight().value = Tensor2::identity(3);
  const Tensor2 x(2, 3, std::vector<double>{1, -2, 3, 0.5, 4, -6});
  EXPECT_EQ(layer.forward(x), x);
}

TEST(Dense, ZeroSigmoidIsHalf) {
  DenseLayer layer("d", 4, 2, Activation::sigmoid);
  RngStream rng(1, 1);
  const auto y = layer.forward(random_matrix(5, 4, rng));
  for (double v : y.data()) EXPECT_EQ(v, 0.5);
}

TEST(Dense, ShapeMismatchNamesBothShapes) {
  DenseLayer layer("d", 4, 2, Activation::relu);
  try {
    layer.forward(Tensor2(2, 3));
    FAIL();
  } catch (const std::invalid_argument &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x4"), std::string::npos) << msg;
  }
}

TEST(Dense, RandomGradientCheck) {
  RngStream rng(3, 3);
  DenseLayer layer("d", 4, 3, Activation::tanh);
  layer.init(rng);
  const Tensor2 x = random_matrix(5, 4, rng), y = random_matrix(5, 3, rng);
  ParameterList ps;
  layer.collect(ps);
  const auto report = grad_check(ps, [&](Tape &t) { return mse(layer.forward(t, t.constant(x)), t.constant(y)); }, 1e-5);
  EXPECT_TRUE(report.passed) << report.worst();
}

TEST(Dense, IdentityQuadraticGradientIsClosedForm) {
  DenseLayer layer("d", 2, 2, Activation::identity);
  layer.weight().value = Tensor2::identity(2);
  const Tensor2 x(1, 2, std::vector<double>{0.3, -1.2});
  const Tensor2 y(1, 2, std::vector<double>{1.0, 0.5});
  Tape tape;
  const Var in = tape.constant(x);
  const Var loss = sum(square(sub(layer.forward(tape, in), tape.constant(y))));
  tape.backward(loss);
  // d/db Σ(x − y)² = 2(x − y).
  EXPECT_DOUBLE_EQ(layer.bias().grad(0, 0), 2.0 * (x(0, 0) - y(0, 0)));
  EXPECT_DOUBLE_EQ(layer.bias().grad(0, 1), 2.0 * (x(0, 1) - y(0, 1)));
  EXPECT_DOUBLE_EQ(layer.weight().grad(0, 0), 2.0 * (x(0, 0) - y(0, 0)) * x(0, 0));
  EXPECT_DOUBLE_EQ(layer.weight().grad(1, 0), 2.0 * (x(0, 1) - y(0, 1)) * x(0, 0));
}

TEST(Gru, ZeroParameters) {
  RnnCell cell("g", CellKind::gru, 3, 4);
  const std::vector<double> x{0.4, -1.0, 2.0}, h(4, 0.0);
  const auto tr = gru_step(cell, x, h);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(tr.update_gate[j], 0.5);
    EXPECT_EQ(tr.reset_gate[j], 0.5);
    EXPECT_EQ(tr.candidate[j], 0.0);
    EXPECT_EQ(tr.h[j], 0.0);
  }
}

TEST(Gru, SaturatedUpdateGateTakesCandidate) {
  RngStream rng(4, 4);
  RnnCell cell("g", CellKind::gru, 3, 4);
  fill_random(cell, rng);
  cell.block("b_z").value.fill(50.0);
  const std::vector<double> x{0.4, -1.0, 2.0}, h{0.1, -0.3, 0.7, 0.2};
  const auto tr = gru_step(cell, x, h);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(tr.h[j], tr.candidate[j], 1e-9);
}

TEST(Gru, InterpolationHoldsBitwiseAndRanges) {
  RngStream rng(5, 5);
  RnnCell cell("g", CellKind::gru, 3, 5);
  for (int trial = 0; trial < 100; ++trial) {
    fill_random(cell, rng, 1.5);
    std::vector<double> x(3), h(5);
    for (double &v : x) v = 2.0 * rng.normal();
    for (double &v : h) v = 2.0 * rng.uniform() - 1.0;
    const auto tr = gru_step(cell, x, h);
    for (std::size_t j = 0; j < 5; ++j) {
      const double z = tr.update_gate[j];
      EXPECT_EQ(tr.h[j], (1.0 - z) * h[j] + z * tr.candidate[j]);
      EXPECT_GT(z, 0.0);
      EXPECT_LT(z, 1.0);
      EXPECT_GT(tr.reset_gate[j], 0.0);
      EXPECT_LT(tr.reset_gate[j], 1.0);
      EXPECT_GT(tr.h[j], -1.0);
      EXPECT_LT(tr.h[j], 1.0);
    }
  }
}

TEST(Gru, RejectsWrongKind) {
  RnnCell cell("l", CellKind::lstm, 2, 2);
  const std::vector<double> x{0, 0}, h{0, 0};
  EXPECT_THROW(gru_step(cell, x, h), std::invalid_argument);
}

TEST(Lstm, ZeroParameters) {
  RnnCell cell("l", CellKind::lstm, 2, 3);
  const std::vector<double> x{1.0, -2.0}, h(3, 0.0), c(3, 0.0);
  const auto tr = lstm_step(cell, x, h, c);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(tr.input_gate[j], 0.5);
    EXPECT_EQ(tr.forget_gate[j], 0.5);
    EXPECT_EQ(tr.output_gate[j], 0.5);
    EXPECT_EQ(tr.candidate[j], 0.0);
    EXPECT_EQ(tr.c[j], 0.0);
    EXPECT_EQ(tr.h[j], 0.0);
  }
}

TEST(Lstm, PerfectMemoryLimit) {
  RngStream rng(6, 6);
  RnnCell cell("l", CellKind::lstm, 2, 3);
  fill_random(cell, rng);
  cell.block("b_f").value.fill(50.0);
  cell.block("b_i").value.fill(-50.0);
  const std::vector<double> x{1.0, -2.0}, h{0.2, 0.1, -0.4}, c{1.5, -0.7, 3.0};
  const auto tr = lstm_step(cell, x, h, c);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(tr.c[j], c[j], 1e-9);
}

TEST(Lstm, CellUpdateHoldsBitwiseAndRanges) {
  RngStream rng(7, 7);
  RnnCell cell("l", CellKind::lstm, 3, 4);
  for (int trial = 0; trial < 100; ++trial) {
    fill_random(cell, rng, 1.5);
    std::vector<double> x(3), h(4), c(4);
    for (double &v : x) v = 2.0 * rng.normal();
    for (double &v : h) v = 2.0 * rng.uniform() - 1.0;
    for (double &v : c) v = 3.0 * rng.normal();
    const auto tr = lstm_step(cell, x, h, c);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(tr.c[j], tr.forget_gate[j] * c[j] + tr.input_gate[j] * tr.candidate[j]);
      for (double g : {tr.input_gate[j], tr.forget_gate[j], tr.output_gate[j]}) {
        EXPECT_GT(g, 0.0);
        EXPECT_LT(g, 1.0);
      }
      EXPECT_GE(tr.candidate[j], -1.0);
      EXPECT_LE(tr.candidate[j], 1.0);
    }
  }
}

TEST(Unroll, EmptySequenceThrows) {
  RnnCell cell("v", CellKind::vanilla, 2, 3);
  try {
    unroll(cell, Tensor2(0, 2));
    FAIL();
  } catch (const std::invalid_argument &e) {
    EXPECT_STREQ(e.what(), "empty sequence");
  }
}

TEST(Unroll, SingleStepMatchesStep) {
  RngStream rng(8, 8);
  RnnCell cell("g", CellKind::gru, 3, 4);
  fill_random(cell, rng);
  const Tensor2 seq = random_matrix(1, 3, rng);
  const std::vector<double> h0{0.1, 0.2, -0.3, 0.0};
  const Tensor2 out = unroll(cell, seq, h0);
  const auto tr = gru_step(cell, seq.row_span(0), h0);
  EXPECT_EQ(out, tr.h);
}

TEST(Unroll, VanillaWithoutRecurrenceIsMemoryless) {
  RngStream rng(9, 9);
  RnnCell cell("v", CellKind::vanilla, 2, 3);
  fill_random(cell, rng);
  cell.block("W_h").value.fill(0.0);
  const Tensor2 seq = random_matrix(6, 2, rng);
  const Tensor2 out = unroll(cell, seq);
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    const Tensor2 alone = unroll(cell, seq.slice_rows(t, t + 1), std::vector<double>{5.0, -5.0, 1.0});
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out(t, j), alone(0, j));
  }
}

TEST(Unroll, CarriedStateIsAssociative) {
  RngStream rng(10, 10);
  for (CellKind kind : {CellKind::vanilla, CellKind::lstm, CellKind::gru}) {
    RnnStack stack("s", kind, 3, {4, 2});
    stack.init(rng);
    const Tensor2 seq = random_matrix(9, 3, rng);
    const Tensor2 whole = unroll(stack, seq);
    std::vector<std::pair<Tensor2, Tensor2>> state;
    const Tensor2 first = unroll(stack, seq.slice_rows(0, 4), &state);
    const Tensor2 second = unroll(stack, seq.slice_rows(4, 9), &state);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(whole(t, j), first(t, j));
    for (std::size_t t = 4; t < 9; ++t)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(whole(t, j), second(t - 4, j));
  }
}

TEST(Unroll, BackpropThroughTimeFiveSteps) {
  RngStream rng(11, 11);
  for (CellKind kind : {CellKind::vanilla, CellKind::lstm, CellKind::gru}) {
    RnnCell cell("c", kind, 2, 3);
    cell.init(rng);
    std::vector<Tensor2> xs;
    for (int t = 0; t < 5; ++t) xs.push_back(random_matrix(1, 2, rng));
    const Tensor2 target = random_matrix(5, 3, rng);
    ParameterList ps;
    cell.collect(ps);
    const auto report = grad_check(ps, [&](Tape &tape) {
      RnnState s = cell.zero_state(tape, 1);
      std::vector<Var> hs;
      for (const auto &x : xs) {
        s = cell.step(tape, tape.constant(x), s);
        hs.push_back(s.h);
      }
      return mse(stack_rows(hs), tape.constant(target));
    }, 1e-4);
    EXPECT_TRUE(report.passed) << to_string(kind) << " " << report.worst();
  }
}

TEST(GradCheck, UnitsPassOnRandomInstances) {
  for (const auto &unit : gradcheck_units())
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto report = check_unit(unit, seed, 1e-4);
      EXPECT_TRUE(report.passed) << unit << " seed " << seed << " " << report.worst();
    }
}

TEST(GradCheck, CorruptedGradientFails) {
  RngStream rng(12, 12);
  DenseLayer layer("d", 3, 2, Activation::tanh);
  layer.init(rng);
  const Tensor2 x = random_matrix(4, 3, rng), y = random_matrix(4, 2, rng);
  ParameterList ps;
  layer.collect(ps);
  const LossFn loss = [&](Tape &t) { return mse(layer.forward(t, t.constant(x)), t.constant(y)); };
  EXPECT_TRUE(grad_check(ps, loss, 1e-4).passed);
  const auto bad = grad_check(ps, loss, 1e-4, 1e-6, 1.01);
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.worst(), 1e-4);
}

TEST(Activation, ParseNames) {
  EXPECT_EQ(parse_activation("relu"), Activation::relu);
  EXPECT_EQ(parse_cell_kind("gru"), CellKind::gru);
  EXPECT_THROW(parse_activation("swish"), std::invalid_argument);
}
