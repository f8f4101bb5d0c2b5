// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nert/error.hpp"
#include "nert/synthetic.hpp"
#include "nert/timeseries.hpp"
#include "nert/training.hpp"

using namespace nert;

namespace {

SignalDataset small_periodic(std::size_t features = 2) {
  PeriodicSeriesParams p;
  p.length = 120;
  p.features = features;
  p.periods = {12.0, 30.0};
  return apply_block_protocol(periodic_series(p, 1), BlockLayout::standard(10), 1);
}

ModelConfig small_nert(const SignalDataset& d) {
  ModelConfig c;
  c.nert.temporal_dim = d.coords.temporal_dim();
  c.nert.feature_count = d.features();
  c.nert.use_onehot = d.coords.use_onehot;
  c.nert.dim_psi_t = c.nert.dim_psi_f = c.nert.dim_psi_F = c.nert.dim_h_p = c.nert.dim_h_s = 8;
  c.nert.seed = 2;
  return c;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

Var cubic_at(Tape& tape, const Tensor& t) {
  const Var v = tape.constant(t);
  return mul(square(v), v);
}

}  // namespace

TEST(Stencil, ThirdOrderCoefficients) {
  const auto s = derivative_stencil(3);
  std::vector<std::pair<int, double>> expected{{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}};
  EXPECT_EQ(s, expected);
  EXPECT_THROW(derivative_stencil(4), ConfigError);
}

TEST(Penalty, CubicAndLinearExamples) {
  Tensor t({40, 1});
  for (std::size_t i = 0; i < 40; ++i) t[i] = -1.0 + 0.05 * static_cast<double>(i);
  Tape tape;
  const double cubic = derivative_penalty([&](const Tensor& x) { return cubic_at(tape, x); }, t, 3, 1e-3).value().item();
  EXPECT_NEAR(cubic, 36.0, 0.36);
  const double lin =
      derivative_penalty([&](const Tensor& x) { return add_scalar(scale(tape.constant(x), -2.0), 5.0); }, t, 3, 1e-3)
          .value()
          .item();
  EXPECT_LT(lin, 1e-6);
  EXPECT_GE(lin, 0.0);
}

TEST(Penalty, LowerOrdersMatchAnalyticDerivatives) {
  Tensor t({5, 1}, std::vector<double>{-0.5, -0.2, 0.0, 0.3, 0.8});
  Tape tape;
  const ScaleFn f = [&](const Tensor& x) { return cubic_at(tape, x); };
  double d1 = 0.0, d2 = 0.0;
  for (double x : t.data()) {
    d1 += std::pow(3 * x * x, 2) / 5.0;
    d2 += std::pow(6 * x, 2) / 5.0;
  }
  EXPECT_NEAR(derivative_penalty(f, t, 1, 1e-4).value().item(), d1, 1e-6);
  EXPECT_NEAR(derivative_penalty(f, t, 2, 1e-4).value().item(), d2, 1e-5);
}

TEST(Penalty, NonFiniteIsNumericError) {
  Tensor t({3, 1}, 0.5);
  Tape tape;
  const ScaleFn f = [&](const Tensor& x) { return cubic_at(tape, x); };
  EXPECT_THROW(derivative_penalty(f, t, 3, 1e-120), NumericError);
}

TEST(Loss, LambdaSemantics) {
  Tape tape;
  const Var pred = tape.constant(Tensor({3, 1}, std::vector<double>{1, 2, 3}));
  const Var target = tape.constant(Tensor({3, 1}, std::vector<double>{1, 2, 5}));
  const Tensor mask({3, 1}, 1.0);
  const Var pen = tape.constant(Tensor::scalar(0.7));
  const double plain = masked_mse(pred, target, mask).value().item();
  EXPECT_EQ(training_loss(pred, target, mask, pen, 0.0).value().item(), plain);
  EXPECT_EQ(training_loss(pred, pred, mask, pen, 1.0).value().item(), 0.7);
  double prev = -1.0;
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    const double v = training_loss(pred, target, mask, pen, lambda).value().item();
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_THROW(training_loss(pred, target, Tensor({3, 1}), pen, 0.0), DegenerateInputError);
}

TEST(Train, ConstantTargetConverges) {
  RawSeries s;
  s.coord_names = {"t"};
  s.feature_names = {"y"};
  s.coords = Tensor({50, 1});
  s.values = Tensor({50, 1}, 0.3);
  for (std::size_t i = 0; i < 50; ++i) s.coords[i] = static_cast<double>(i);
  const SignalDataset d = to_dataset(s);
  ModelConfig c;
  c.kind = ModelKind::ffn;
  c.ffn.hidden = 8;
  c.ffn.frequencies = 4;
  c.ffn.sigma = 0.0;
  auto model = make_model(c);
  TrainConfig tc;
  tc.epochs = 500;
  const TrainReport r = train(*model, d, tc);
  EXPECT_LT(r.train_mse.back(), 1e-6);
}

TEST(Train, LambdaZeroMatchesPlainMse) {
  const SignalDataset d = small_periodic();
  auto model = make_model(small_nert(d));
  TrainConfig tc;
  tc.epochs = 5;
  const TrainReport r = train(*model, d, tc);
  for (std::size_t e = 0; e < r.train_loss.size(); ++e) EXPECT_EQ(r.train_loss[e], r.train_mse[e]);
}

TEST(Train, PenaltyRaisesObjectiveAboveMse) {
  const SignalDataset d = small_periodic();
  auto model = make_model(small_nert(d));
  TrainConfig tc;
  tc.epochs = 3;
  tc.penalty_weight = 1.0;
  const TrainReport r = train(*model, d, tc);
  EXPECT_GT(r.train_loss[0], r.train_mse[0]);
}

TEST(Train, BestCheckpointReproducesReportedValidationMse) {
  const SignalDataset d = small_periodic();
  auto model = make_model(small_nert(d));
  TrainConfig tc;
  tc.epochs = 60;
  tc.learning_rate = 1e-2;
  const TrainReport r = train(*model, d, tc);
  ASSERT_TRUE(r.best_val_mse);
  EXPECT_EQ(*r.best_val_mse, *std::min_element(r.val_mse.begin(), r.val_mse.end()));
  EXPECT_EQ(r.val_mse[r.best_epoch], *r.best_val_mse);
  EXPECT_NEAR(*role_mse(*model, d, Role::validation), *r.best_val_mse, 1e-12);
}

TEST(Train, DeterministicReports) {
  const SignalDataset d = small_periodic();
  TrainConfig tc;
  tc.epochs = 20;
  tc.penalty_weight = 1e-3;
  auto a = make_model(small_nert(d));
  auto b = make_model(small_nert(d));
  const TrainReport ra = train(*a, d, tc), rb = train(*b, d, tc);
  EXPECT_EQ(ra.train_loss, rb.train_loss);
  EXPECT_EQ(ra.val_mse, rb.val_mse);
  EXPECT_TRUE(a->params().same_values(b->params()));
}

TEST(Train, NonTrainTargetsNeverLeak) {
  const SignalDataset d = small_periodic();
  SignalDataset zeroed = d;
  for (std::size_t c = 0; c < zeroed.cells(); ++c) {
    if (zeroed.roles[c] != Role::train) zeroed.targets[c] = 0.0;
  }
  TrainConfig tc;
  tc.epochs = 15;
  tc.use_validation = false;
  auto a = make_model(small_nert(d));
  auto b = make_model(small_nert(d));
  const TrainReport ra = train(*a, d, tc), rb = train(*b, zeroed, tc);
  EXPECT_EQ(ra.train_loss, rb.train_loss);
  EXPECT_TRUE(a->params().same_values(b->params()));
}

TEST(Train, LossDecreasesOnEveryBenchmark) {
  for (const std::string name : {"sine50", "oscillator-undamped", "helmholtz2d", "coupled-spring"}) {
    BenchmarkConfig bc;
    bc.points = name == "helmholtz2d" ? 30 : 200;
    bc.task = OscillatorTask::extrap;
    const SignalDataset d = make_benchmark(name, bc);
    auto model = make_model(small_nert(d));
    TrainConfig tc;
    tc.epochs = 201;
    const TrainReport r = train(*model, d, tc);
    const std::vector<double> early(r.train_loss.begin(), r.train_loss.begin() + 11);
    const std::vector<double> late(r.train_loss.begin() + 100, r.train_loss.begin() + 201);
    EXPECT_LT(median(late), median(early)) << name;
  }
}

TEST(Train, NoValidationUsesLastEpoch) {
  const SignalDataset d = make_benchmark("sine50");
  auto model = make_model(small_nert(d));
  TrainConfig tc;
  tc.epochs = 10;
  const TrainReport r = train(*model, d, tc);
  EXPECT_TRUE(r.val_mse.empty());
  EXPECT_EQ(r.best_epoch, 9u);
  EXPECT_TRUE(model->params().same_values(r.final_params));
}

TEST(Train, RejectsInvalidConfig) {
  const SignalDataset d = small_periodic();
  auto model = make_model(small_nert(d));
  TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(train(*model, d, tc), ConfigError);
  tc.epochs = 1;
  tc.penalty_weight = -1.0;
  EXPECT_THROW(train(*model, d, tc), ConfigError);
  tc.penalty_weight = 0.0;
  tc.fd_step = 0.0;
  EXPECT_THROW(train(*model, d, tc), ConfigError);
}

TEST(Train, DivergenceIsNumericErrorWithEpoch) {
  const SignalDataset d = small_periodic();
  auto model = make_model(small_nert(d));
  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 1e300;
  try {
    train(*model, d, tc);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GE(e.epoch(), 0);
  }
}
