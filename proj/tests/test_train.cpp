// SPDX-License-Identifier: Apache-2.0
#include "vdt/models.hpp"
#include "vdt/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace vdt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("vdt_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<unsigned char> slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path &p, const std::vector<unsigned char> &bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

struct LinearTask {
  Tensor2 x, y;
};

LinearTask linear_task(std::size_t n, double slope, double offset, std::uint64_t seed) {
  RngStream rng(seed, 5);
  LinearTask t{Tensor2(n, 1), Tensor2(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    t.x[i] = 2.0 * rng.uniform() - 1.0;
    t.y[i] = slope * t.x[i] + offset;
  }
  return t;
}

FitResult fit_dense(DenseLayer &layer, const LinearTask &task, const TrainConfig &cfg) {
  ParameterList ps;
  layer.collect(ps);
  return fit(ps, task.x.rows(), [&](Tape &tape, std::span<const std::size_t> batch, const RngStream &) {
    return mse(layer.forward(tape, tape.constant(task.x.select_rows(batch))), tape.constant(task.y.select_rows(batch)));
  }, cfg);
}

std::unique_ptr<VdtModel> small_model() {
  return std::make_unique<VariationalFnn>("m", std::vector<std::size_t>{2, 5}, 1, Activation::relu);
}

} // namespace

TEST(Adam, ZeroGradientIsFixedPoint) {
  Parameter p("w", Tensor2(2, 2, std::vector<double>{1, -2, 3, 0.5}));
  const Tensor2 before = p.value;
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step(st, {&p}, 0.1);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Parameter p("w", Tensor2(1, 4, std::vector<double>{0.2, -0.4, 1.0, 0.0}));
  p.grad = Tensor2(1, 4, std::vector<double>{3.0, -0.01, 1e-3, -250.0});
  const Tensor2 before = p.value;
  AdamState st;
  const double lr = 0.01;
  adam_step(st, {&p}, lr);
  for (std::size_t i = 0; i < 4; ++i) {
    const double g = p.grad[i];
    const double delta = p.value[i] - before[i];
    EXPECT_LT(std::abs(delta + lr * g / (std::abs(g) + 1e-8)), 1e-9);
  }
}

TEST(Adam, DecoupledDecaySkipsVariational) {
  Parameter w("w", Tensor2(1, 3, std::vector<double>{1.0, -2.0, 4.0}));
  Parameter rho("rho", Tensor2(1, 3, std::vector<double>{-3.0, -2.0, 0.5}), ParamRole::variational);
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  AdamState st(cfg);
  const Tensor2 w0 = w.value, rho0 = rho.value;
  adam_step(st, {&w, &rho}, 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w.value[i], w0[i] * (1.0 - 0.5 * 0.1));
  EXPECT_EQ(rho.value, rho0);
}

TEST(Adam, ShapeMismatchThrows) {
  Parameter p("w", Tensor2(2, 2));
  AdamState st;
  adam_step(st, {&p}, 0.1);
  p.value = Tensor2(3, 1);
  p.grad = Tensor2(3, 1);
  EXPECT_THROW(adam_step(st, {&p}, 0.1), std::invalid_argument);
}

TEST(Fit, RecoversLinearMap) {
  const auto task = linear_task(64, 2.0, 0.0, 1);
  DenseLayer layer("d", 1, 1, Activation::identity);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  fit_dense(layer, task, cfg);
  Tape tape(false);
  const double final_mse = tape.value(mse(layer.forward(tape, tape.constant(task.x)), tape.constant(task.y)))[0];
  EXPECT_LT(final_mse, 1e-6);
}

TEST(Fit, ZeroEpochsRejected) {
  const auto task = linear_task(8, 2.0, 0.0, 1);
  DenseLayer layer("d", 1, 1, Activation::identity);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(fit_dense(layer, task, cfg), std::invalid_argument);
}

TEST(Fit, EmptyDatasetRejected) {
  DenseLayer layer("d", 1, 1, Activation::identity);
  ParameterList ps;
  layer.collect(ps);
  EXPECT_THROW(fit(ps, 0, [](Tape &t, auto, const RngStream &) { return t.constant(Tensor2(1, 1)); }, TrainConfig{}),
               std::invalid_argument);
}

TEST(Fit, SameSeedSameTraceAndParameters) {
  const auto task = linear_task(100, 1.5, 0.3, 2);
  Tensor2 x(100, 2);
  for (std::size_t i = 0; i < 100; ++i) {
    x(i, 0) = task.x[i];
    x(i, 1) = task.x[i] * task.x[i];
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 7;
  cfg.lr = 1e-2;
  cfg.seed = 9;
  auto run = [&] {
    auto m = small_model();
    RngStream init(1, kInitStream);
    m->init(init);
    auto res = train_model(*m, x, task.y, cfg);
    std::vector<double> flat;
    for (Parameter *p : m->state()) flat.insert(flat.end(), p->value.data().begin(), p->value.data().end());
    return std::make_pair(res.epoch_loss, flat);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Fit, LossDropsTenfoldOnLinearTask) {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto task = linear_task(128, -1.7, 0.4, 100 + seed);
    DenseLayer layer("d", 1, 1, Activation::identity);
    RngStream init(seed, kInitStream);
    layer.init(init);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 16;
    cfg.lr = 0.02;
    cfg.seed = seed;
    const auto res = fit_dense(layer, task, cfg);
    if (res.epoch_loss.back() < 0.1 * res.epoch_loss.front()) ++good;
  }
  EXPECT_GE(good, 18);
}

TEST(Fit, WeightDecayLeavesRhoAlone) {
  const auto task = linear_task(40, 1.0, 0.0, 3);
  Tensor2 x(40, 2);
  for (std::size_t i = 0; i < 40; ++i) x(i, 0) = x(i, 1) = task.x[i];
  auto m = small_model();
  RngStream init(2, kInitStream);
  m->init(init);
  const Tensor2 rho0 = m->head().rho_weight().value;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.weight_decay = 0.5;
  cfg.beta = 0.0;
  ParameterList only_rho{&m->head().rho_weight()};
  fit(only_rho, 40, [&](Tape &t, std::span<const std::size_t>, const RngStream &) {
    return sum(mul(t.param(m->head().rho_weight()), t.constant(Tensor2(rho0.rows(), rho0.cols()))));
  }, cfg);
  EXPECT_EQ(m->head().rho_weight().value, rho0);
}

TEST(Schedule, BatteryHalvings) {
  TrainConfig cfg;
  cfg.lr = 2e-2;
  cfg.lr_schedule = {{100, 0.5}, {500, 0.5}};
  EXPECT_DOUBLE_EQ(effective_lr(cfg, 1), 2e-2);
  EXPECT_DOUBLE_EQ(effective_lr(cfg, 99), 2e-2);
  EXPECT_DOUBLE_EQ(effective_lr(cfg, 100), 1e-2);
  EXPECT_DOUBLE_EQ(effective_lr(cfg, 499), 1e-2);
  EXPECT_DOUBLE_EQ(effective_lr(cfg, 500), 5e-3);
  EXPECT_DOUBLE_EQ(effective_lr(cfg, 1000), 5e-3);
}

TEST(Clip, GlobalNormIsBounded) {
  Parameter a("a", Tensor2(1, 2)), b("b", Tensor2(1, 1));
  a.grad = Tensor2(1, 2, std::vector<double>{3.0, 0.0});
  b.grad = Tensor2(1, 1, 4.0);
  EXPECT_DOUBLE_EQ(clip_global_norm({&a, &b}, 1.0), 5.0);
  EXPECT_NEAR(std::hypot(a.grad[0], a.grad[1], b.grad[0]), 1.0, 1e-15);
}

TEST(Checkpoint, RoundTripForwardIsBitwise) {
  const auto dir = scratch_dir("roundtrip");
  auto m = small_model();
  RngStream init(4, kInitStream);
  m->init(init);
  m->head().noise().value.fill(0.25);
  RngStream rng(5, 5);
  Tensor2 x(9, 2);
  for (double &v : x.data()) v = rng.normal();
  AdamState opt;
  for (Parameter *p : m->trainable()) p->grad.fill(0.1);
  adam_step(opt, m->trainable(), 1e-3);
  save_checkpoint(dir / "a.vdtc", m->state(), &opt);

  auto n = small_model();
  AdamState opt2;
  adam_step(opt2, n->trainable(), 1e-3);
  load_checkpoint(dir / "a.vdtc", n->state(), &opt2);
  EXPECT_EQ(m->predict_mean(x), n->predict_mean(x));
  const auto sa = m->predict(x, 10, RngStream(6, 6)), sb = n->predict(x, 10, RngStream(6, 6));
  EXPECT_EQ(sa.mean, sb.mean);
  EXPECT_EQ(opt.first_moments(), opt2.first_moments());
  EXPECT_EQ(opt.second_moments(), opt2.second_moments());
  EXPECT_EQ(opt.steps(), opt2.steps());

  save_checkpoint(dir / "b.vdtc", n->state(), &opt2);
  EXPECT_EQ(slurp(dir / "a.vdtc"), slurp(dir / "b.vdtc"));
}

TEST(Checkpoint, LayoutHeader) {
  const std::vector<NamedTensor> ts{{"w", Tensor2(2, 3, 1.0)}};
  const auto bytes = encode_checkpoint(ts);
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VDTC");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  // header 12 + name (2 + 1) + rank 1 + dims 16 + data 48 + crc 4
  EXPECT_EQ(bytes.size(), 12u + 3u + 1u + 16u + 48u + 4u);
  const auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].name, "w");
  EXPECT_EQ(back[0].value, ts[0].value);
}

namespace {

CheckpointError::Kind decode_error(std::vector<unsigned char> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return CheckpointError::Kind::io;
}

} // namespace

TEST(Checkpoint, CorruptionsRaiseDistinctErrors) {
  const std::vector<NamedTensor> ts{{"layer.w", Tensor2(3, 2, 0.5)}, {"layer.b", Tensor2(1, 3, -1.0)}};
  const auto good = encode_checkpoint(ts);
  using K = CheckpointError::Kind;

  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(decode_error(magic), K::bad_magic);
  try {
    decode_checkpoint(magic);
  } catch (const CheckpointError &e) {
    EXPECT_STREQ(e.what(), "bad magic");
  }

  auto version = good;
  version[4] = 2;
  EXPECT_EQ(decode_error(version), K::version_mismatch);

  auto truncated = good;
  truncated.resize(good.size() / 2);
  EXPECT_EQ(decode_error(truncated), K::truncated);

  auto flipped = good;
  flipped[good.size() - 10] ^= 0x01;
  EXPECT_EQ(decode_error(flipped), K::checksum);
}

TEST(Checkpoint, ShapeMismatchNamesTensor) {
  const auto dir = scratch_dir("shape");
  auto m = small_model();
  save_checkpoint(dir / "m.vdtc", m->state());
  VariationalFnn other("m", {2, 6}, 1);
  try {
    load_checkpoint(dir / "m.vdtc", other.state());
    FAIL();
  } catch (const CheckpointError &e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::shape_mismatch);
    EXPECT_EQ(std::string(e.what()).rfind("shape mismatch for m.", 0), 0u) << e.what();
  }
}

TEST(Checkpoint, MissingFileAndTensor) {
  const auto dir = scratch_dir("missing");
  auto m = small_model();
  EXPECT_THROW(load_checkpoint(dir / "absent.vdtc", m->state()), CheckpointError);
  std::vector<NamedTensor> ts{{"unrelated", Tensor2(1, 1)}};
  spit(dir / "u.vdtc", encode_checkpoint(ts));
  try {
    load_checkpoint(dir / "u.vdtc", m->state());
    FAIL();
  } catch (const CheckpointError &e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::missing_tensor);
  }
}
