// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "../support/gradcheck.hpp"
#include "nert/error.hpp"
#include "nert/models.hpp"
#include "nert/rng.hpp"

using namespace nert;

namespace {

NeRTSpec small_spec(std::size_t d = 1, std::size_t m = 3) {
  NeRTSpec s;
  s.temporal_dim = d;
  s.feature_count = m;
  s.use_onehot = m > 1;
  s.dim_psi_t = 5;
  s.dim_psi_f = 4;
  s.dim_psi_F = 6;
  s.dim_h_p = 5;
  s.dim_h_s = 5;
  s.seed = 17;
  return s;
}

CellBatch random_batch(std::size_t k, std::size_t d, std::size_t m, Rng& rng) {
  CellBatch b;
  b.temporal = Tensor({k, d});
  b.onehot = Tensor({k, m > 1 ? m : 0});
  b.target = Tensor({k, 1});
  for (double& v : b.temporal.data()) v = rng.uniform(-0.5, 1.5);
  for (std::size_t i = 0; i < k; ++i) {
    if (m > 1) b.onehot.at(i, rng.below(m)) = 1.0;
    b.target[i] = rng.uniform(-2.0, 2.0);
  }
  return b;
}

void fill(ParamSet& p, std::string_view name, double v) {
  for (double& x : p.get(name).data()) x = v;
}

}  // namespace

TEST(NeRT, DefaultLayerCounts) {
  const NeRTSpec s;
  EXPECT_EQ(s.layers_t, 2u);
  EXPECT_EQ(s.layers_f, 2u);
  EXPECT_EQ(s.layers_p, 5u);
  EXPECT_EQ(s.layers_s, 2u);
  NeRTSpec bad = small_spec();
  bad.dim_h_p = 0;
  EXPECT_THROW(NeRT{bad}, ConfigError);
}

TEST(NeRT, TemporalEncoderShapesAndZeroWeights) {
  NeRT model(small_spec());
  Tape tape;
  const auto p = BoundParams::constants(tape, model.params());
  const Var e = model.encode_temporal(p, tape.constant(Tensor({4, 1}, 0.3)));
  EXPECT_EQ(e.shape(), (Shape{4, 5}));
  for (const auto& name : model.params().names()) {
    if (name.rfind("psi_t.", 0) == 0) fill(model.params(), name, 0.0);
  }
  Tape t2;
  const auto z = model.encode_temporal(BoundParams::constants(t2, model.params()), t2.constant(Tensor({4, 1}, 0.3)));
  for (double v : z.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(model.encode_temporal(p, tape.constant(Tensor({4, 2}))), DimensionError);
}

TEST(NeRT, IdentityLayerReproducesInput) {
  NeRTSpec s = small_spec(2, 1);
  s.layers_t = 1;
  s.dim_psi_t = 2;
  NeRT model(s);
  auto& w = model.params().get("psi_t.0.weight");
  w.at(0, 0) = 1.0;
  w.at(0, 1) = 0.0;
  w.at(1, 0) = 0.0;
  w.at(1, 1) = 1.0;
  fill(model.params(), "psi_t.0.bias", 0.0);
  Tape tape;
  const Tensor in = Tensor::matrix(2, 2, {0.1, -0.4, 2.0, 3.0});
  const Var out = model.encode_temporal(BoundParams::constants(tape, model.params()), tape.constant(in));
  EXPECT_EQ(out.value().storage(), in.storage());
}

TEST(NeRT, FeatureEncoderDistinctAndContract) {
  NeRT model(small_spec());
  Tape tape;
  const auto p = BoundParams::constants(tape, model.params());
  const Var e = model.encode_feature(p, tape.constant(Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0})));
  EXPECT_EQ(e.shape(), (Shape{2, 4}));
  bool differs = false;
  for (std::size_t k = 0; k < 4; ++k) differs |= e.value().at(0, k) != e.value().at(1, k);
  EXPECT_TRUE(differs);
  EXPECT_THROW(model.encode_feature(p, tape.constant(Tensor::matrix(1, 3, {1, 1, 0}))), ContractError);
  EXPECT_THROW(model.encode_feature(p, tape.constant(Tensor::matrix(1, 3, {0.5, 0.5, 0}))), ContractError);
}

TEST(NeRT, FourierMapInitExamples) {
  NeRT model(small_spec(2, 1));
  Tape tape;
  const auto p = BoundParams::constants(tape, model.params());
  for (double v : model.fourier_map(p, tape.constant(Tensor({3, 2}))).value().data()) EXPECT_EQ(v, 0.0);
  const Tensor& omega = model.params().get("fourier.omega");
  const double c = std::numbers::pi / 2.0 / omega.at(0, 0);
  const Var out = model.fourier_map(p, tape.constant(Tensor::matrix(1, 2, {c, 0.0})));
  EXPECT_NEAR(out.value()[0], 1.0, 1e-15);
  EXPECT_EQ(out.shape(), (Shape{1, 12}));
}

TEST(NeRT, FourierFrequenciesWithinInitBoundAndFixedByDefault) {
  NeRTSpec s = small_spec();
  s.omega_init = 3.0;
  NeRT model(s);
  for (double w : model.params().get("fourier.omega").data()) EXPECT_LE(std::abs(w), 3.0);
  EXPECT_FALSE(model.params().trainable("fourier.omega"));
  EXPECT_TRUE(model.params().trainable("fourier.A"));
  s.learn_frequencies = true;
  EXPECT_TRUE(NeRT(s).params().trainable("fourier.omega"));
}

TEST(NeRT, FourierBoundHoldsForRandomParameters) {
  NeRT model(small_spec());
  Rng rng(3);
  for (int draw = 0; draw < 200; ++draw) {
    for (const char* n : {"fourier.A", "fourier.B", "fourier.delta", "fourier.omega"}) {
      for (double& v : model.params().get(n).data()) v = rng.uniform(-4, 4);
    }
    Tape tape;
    const Var out = model.fourier_map(BoundParams::constants(tape, model.params()),
                                      tape.constant(Tensor({1, 1}, rng.uniform(-9, 9))));
    const auto& A = model.params().get("fourier.A");
    const auto& B = model.params().get("fourier.B");
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_GE(out.value()[k], B[k] - std::abs(A[k]) - 1e-15);
      EXPECT_LE(out.value()[k], B[k] + std::abs(A[k]) + 1e-15);
    }
  }
}

TEST(NeRT, PeriodicDecoderBoundAndZeroPreactivation) {
  NeRT model(small_spec());
  Rng rng(4);
  for (int draw = 0; draw < 500; ++draw) {
    for (const auto& name : model.params().names()) {
      if (name.rfind("period.", 0) == 0) {
        for (double& v : model.params().get(name).data()) v = rng.uniform(-20, 20);
      }
    }
    Tensor in({3, model.periodic_input_width()});
    for (double& v : in.data()) v = rng.uniform(-50, 50);
    Tape tape;
    for (double y : model.decode_periodic(BoundParams::constants(tape, model.params()), tape.constant(in))
                        .value()
                        .data()) {
      EXPECT_LE(std::abs(y), 1.0);
    }
  }
  fill(model.params(), "period.4.weight", 0.0);
  fill(model.params(), "period.4.bias", 0.0);
  Tape tape;
  const Var y = model.decode_periodic(BoundParams::constants(tape, model.params()),
                                      tape.constant(Tensor({1, model.periodic_input_width()}, 0.7)));
  EXPECT_EQ(y.value().item(), 0.0);
}

TEST(NeRT, ScaleDecoderZeroWeightsAndUnbounded) {
  NeRT model(small_spec());
  for (const char* n : {"scale.0.weight", "scale.0.bias", "scale.1.weight"}) fill(model.params(), n, 0.0);
  fill(model.params(), "scale.1.bias", 0.25);
  Tape tape;
  const Tensor in({2, model.scale_input_width()}, 1.0);
  Var y = model.decode_scale(BoundParams::constants(tape, model.params()), tape.constant(in));
  EXPECT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y.value()[0], 0.25);
  fill(model.params(), "scale.0.bias", 1.0);
  fill(model.params(), "scale.1.weight", 200.0);
  fill(model.params(), "scale.1.bias", 0.0);
  Tape t2;
  y = model.decode_scale(BoundParams::constants(t2, model.params()), t2.constant(in));
  EXPECT_DOUBLE_EQ(y.value()[0], 1000.0);
}

TEST(NeRT, ForwardIsPeriodTimesScaleAndBatchMatchesPointwise) {
  NeRT model(small_spec());
  Rng rng(5);
  const CellBatch batch = random_batch(12, 1, 3, rng);
  const auto full = model.predict(batch);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(full.value[i], full.period[i] * full.scale[i]);
    EXPECT_LE(std::abs(full.value[i]), std::abs(full.scale[i]));
    const CellBatch one{{0}, Tensor({1, 1}, batch.temporal[i]),
                        Tensor({1, 3}, std::vector<double>(batch.onehot.data().begin() + 3 * i,
                                                           batch.onehot.data().begin() + 3 * i + 3)),
                        Tensor({1, 1})};
    EXPECT_NEAR(model.predict(one).value[0], full.value[i], 1e-12);
  }
}

TEST(NeRT, ZeroPeriodGivesZeroPrediction) {
  NeRT model(small_spec());
  fill(model.params(), "period.4.weight", 0.0);
  fill(model.params(), "period.4.bias", 0.0);
  Rng rng(6);
  for (double v : model.predict(random_batch(5, 1, 3, rng)).value) EXPECT_EQ(v, 0.0);
}

TEST(NeRT, GradientsMatchFiniteDifferences) {
  NeRTSpec s = small_spec(2, 3);
  s.learn_frequencies = true;
  s.use_compress_fc = true;
  NeRT model(s);
  Rng rng(7);
  const CellBatch batch = random_batch(10, 2, 3, rng);
  const auto r = nert::testing::check_param_gradients(model.params(), [&](Tape& tape, const BoundParams& p) {
    return mse(model.forward(tape, p, bind_inputs(tape, batch)).prediction, tape.constant(batch.target));
  });
  EXPECT_TRUE(r.ok()) << r.failures << " of " << r.checked << ", worst rel " << r.worst_rel;
}

TEST(Models, EveryParameterReceivesGradient) {
  NeRTSpec ns = small_spec(2, 3);
  ns.learn_frequencies = true;
  SirenSpec ss;
  ss.input_dim = 5;
  ss.hidden = 8;
  FfnSpec fs;
  fs.input_dim = 5;
  fs.hidden = 8;
  fs.frequencies = 4;
  std::vector<std::unique_ptr<Model>> models;
  models.push_back(std::make_unique<NeRT>(ns));
  models.push_back(std::make_unique<Siren>(ss));
  models.push_back(std::make_unique<Ffn>(fs));
  Rng rng(8);
  const CellBatch batch = random_batch(30, 2, 3, rng);
  for (auto& m : models) {
    m->params().zero_grad();
    Tape tape;
    tape.backward(mse(m->forward(tape, batch).prediction, tape.constant(batch.target)));
    for (const auto& name : m->params().names()) {
      if (!m->params().trainable(name)) continue;
      double norm = 0.0;
      for (double g : m->params().get(name).grad()) norm += std::abs(g);
      EXPECT_GT(norm, 0.0) << to_string(m->kind()) << " " << name;
    }
  }
}

TEST(Siren, OutputBoundedByLastLayerWeights) {
  SirenSpec s;
  s.input_dim = 2;
  s.hidden = 16;
  Siren model(s);
  const Tensor& w = model.params().get("siren.4.weight");
  const Tensor& b = model.params().get("siren.4.bias");
  double bound = std::abs(b[0]);
  for (double v : w.data()) bound += std::abs(v);
  Rng rng(9);
  for (double v : model.predict(random_batch(50, 2, 1, rng)).value) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(s.omega0, 30.0);
}

TEST(Siren, HiddenInitBound) {
  SirenSpec s;
  s.input_dim = 1;
  s.hidden = 32;
  Siren model(s);
  const double bound = std::sqrt(6.0 / 32.0) / 30.0;
  for (double v : model.params().get("siren.2.weight").data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Ffn, FeatureLength) {
  FfnSpec s;
  s.input_dim = 3;
  s.frequencies = 7;
  Ffn model(s);
  Tape tape;
  const Var f = model.features(BoundParams::constants(tape, model.params()), tape.constant(Tensor({4, 3}, 0.2)));
  EXPECT_EQ(f.shape(), (Shape{4, 14}));
  EXPECT_FALSE(model.params().trainable("ffn.B"));
}

TEST(Models, MatchedParameterCountsWithinTenPercent) {
  NeRTSpec ns;
  ns.temporal_dim = 3;
  ns.feature_count = 2;
  ns.use_onehot = true;
  ModelConfig nc;
  nc.nert = ns;
  const std::size_t target = parameter_count(nc);
  for (ModelKind kind : {ModelKind::siren, ModelKind::ffn}) {
    ModelConfig c;
    c.kind = kind;
    c.siren.input_dim = c.ffn.input_dim = 5;
    const std::size_t n = parameter_count(match_parameter_count(c, target));
    EXPECT_LE(std::abs(static_cast<double>(n) - static_cast<double>(target)), 0.1 * static_cast<double>(target))
        << to_string(kind);
  }
}

TEST(Models, CheckpointRoundTripIsExact) {
  NeRT model(small_spec());
  Rng rng(10);
  for (double& v : model.params().get("fourier.A").data()) v = rng.uniform(-1, 1);
  const auto back = load_checkpoint(nlohmann::json::parse(model.checkpoint().dump()));
  EXPECT_TRUE(back->params().same_values(model.params()));
  const CellBatch batch = random_batch(6, 1, 3, rng);
  EXPECT_EQ(back->predict(batch).value, model.predict(batch).value);
}

TEST(Models, DeterministicUnderSeed) {
  const NeRT a(small_spec()), b(small_spec());
  EXPECT_TRUE(a.params().same_values(b.params()));
  NeRTSpec other = small_spec();
  other.seed = 18;
  EXPECT_FALSE(NeRT(other).params().same_values(a.params()));
}
