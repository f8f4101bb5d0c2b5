// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "../support/gradcheck.hpp"
#include "nert/adam.hpp"
#include "nert/autodiff.hpp"
#include "nert/error.hpp"
#include "nert/rng.hpp"

using namespace nert;

namespace {

std::vector<double> values(const Var& v) { return {v.value().data().begin(), v.value().data().end()}; }

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0, 2.0}), DimensionError);
}

TEST(Tensor, GradBufferFollowsFlag) {
  Tensor t({2, 2});
  EXPECT_TRUE(t.grad().empty());
  t.set_requires_grad(true);
  EXPECT_EQ(t.grad().size(), 4u);
}

TEST(Matmul, IdentityAndHandProduct) {
  Tape tape;
  const Var id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(values(matmul(id, m)), (std::vector<double>{1, 2, 3, 4}));
  const Var a = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  const Var b = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  EXPECT_DOUBLE_EQ(matmul(a, b).value().item(), 11.0);
}

TEST(Matmul, InnerMismatchIsDimensionError) {
  Tape tape;
  EXPECT_THROW(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), DimensionError);
}

TEST(Matmul, GradientOfSumMatchesOnesTimesBTransposed) {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  const auto r = nert::testing::check_gradients(
      {&a, &b}, [](Tape&, const std::vector<Var>& v) { return sum(matmul(v[0], v[1])); }, 1e-5);
  EXPECT_TRUE(r.ok()) << r.failures << " failures";
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.grad()[i * 4 + k], b.at(k, 0) + b.at(k, 1), 1e-12);
  }
}

TEST(Elementwise, ReluAndSinExamples) {
  Tape tape;
  EXPECT_EQ(values(relu(tape.constant(Tensor({3}, std::vector<double>{-1, 0, 2})))), (std::vector<double>{0, 0, 2}));
  const auto s = values(sin(tape.constant(Tensor({2}, std::vector<double>{0, std::numbers::pi / 2}))));
  EXPECT_NEAR(s[0], 0.0, 1e-15);
  EXPECT_NEAR(s[1], 1.0, 1e-15);
}

TEST(Elementwise, SinDerivativeIsCos) {
  Tensor x = Tensor::scalar(1.0);
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sin(tape.leaf(x)));
  EXPECT_NEAR(x.grad()[0], std::cos(1.0), 1e-8);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  Tensor x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(relu(tape.leaf(x))));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 0, 1}));
}

TEST(Elementwise, IncompatibleShapesAreDimensionError) {
  Tape tape;
  EXPECT_THROW(add(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 2}))), DimensionError);
  EXPECT_THROW(mul(tape.constant(Tensor({3, 2})), tape.constant(Tensor({2, 2}))), DimensionError);
}

TEST(Elementwise, BroadcastGradientSumsOverBroadcastAxes) {
  Rng rng(2);
  Tensor a = random_tensor({5, 3}, rng), row = random_tensor({1, 3}, rng), col = random_tensor({5, 1}, rng);
  const auto r = nert::testing::check_gradients({&a, &row, &col}, [](Tape&, const std::vector<Var>& v) {
    return sum(square(mul(add(v[0], v[1]), v[2])));
  });
  EXPECT_TRUE(r.ok()) << r.failures << " failures, worst rel " << r.worst_rel;
}

TEST(Concat, ExamplesAndGradientRouting) {
  Tensor a = Tensor::matrix(2, 1, {1, 2}), b = Tensor::matrix(2, 1, {3, 4});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  const Var c = concat({tape.leaf(a), tape.leaf(b)}, 1);
  EXPECT_EQ(values(c), (std::vector<double>{1, 3, 2, 4}));
  tape.backward(sum(c));
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);

  const Var e = concat({tape.constant(a), tape.constant(Tensor({2, 0}))}, 1);
  EXPECT_EQ(e.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(e), (std::vector<double>{1, 2}));
  EXPECT_THROW(concat({tape.constant(Tensor({2, 1})), tape.constant(Tensor({3, 1}))}, 1), DimensionError);
}

TEST(Mse, ExamplesAndGradient) {
  Tape tape;
  const Var t = tape.constant(Tensor({2}, std::vector<double>{1, 3}));
  EXPECT_EQ(mse(t, t).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(mse(tape.constant(Tensor({2})), t).value().item(), 5.0);

  Rng rng(3);
  Tensor pred = random_tensor({6, 1}, rng);
  const Tensor target = random_tensor({6, 1}, rng);
  const auto r = nert::testing::check_gradients(
      {&pred}, [&](Tape& tp, const std::vector<Var>& v) { return mse(v[0], tp.constant(target)); }, 1e-5);
  EXPECT_TRUE(r.ok());
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(pred.grad()[i], 2.0 * (pred[i] - target[i]) / 6.0, 1e-14);
}

TEST(Mse, MaskedDividesByUnmaskedCountAndRejectsEmptyMask) {
  Tape tape;
  const Var pred = tape.constant(Tensor({3}));
  const Var target = tape.constant(Tensor({3}, std::vector<double>{1, 2, 100}));
  EXPECT_DOUBLE_EQ(masked_mse(pred, target, Tensor({3}, std::vector<double>{1, 1, 0})).value().item(), 2.5);
  EXPECT_THROW(masked_mse(pred, target, Tensor({3})), DegenerateInputError);
}

TEST(Backward, SumGivesOnesAndRepeatedCallsAccumulate) {
  Tensor w({4}, 0.3);
  w.set_requires_grad(true);
  Tape tape;
  const Var loss = sum(tape.leaf(w));
  tape.backward(loss);
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
  tape.backward(loss);
  for (double g : w.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w({3}, 1.0);
  w.set_requires_grad(true);
  Tape tape;
  EXPECT_THROW(tape.backward(tape.leaf(w)), ContractError);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
  Rng rng(4);
  Tensor x = random_tensor({5, 2}, rng), y = random_tensor({5, 1}, rng);
  Tensor w1 = random_tensor({2, 6}, rng), b1 = random_tensor({1, 6}, rng);
  Tensor w2 = random_tensor({6, 1}, rng), b2 = random_tensor({1, 1}, rng);
  const auto r = nert::testing::check_gradients({&w1, &b1, &w2, &b2}, [&](Tape& tape, const std::vector<Var>& v) {
    const Var h = relu(add(matmul(tape.constant(x), v[0]), v[1]));
    return mse(add(matmul(h, v[2]), v[3]), tape.constant(y));
  });
  EXPECT_TRUE(r.ok()) << r.failures << " failures, worst rel " << r.worst_rel;
}

TEST(Backward, RandomCompositionsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({1, 4}, rng), w = random_tensor({4, 4}, rng);
    const std::uint64_t key = rng.next_u64();
    const auto r = nert::testing::check_gradients(
        {&a, &b, &w},
        [&](Tape& tape, const std::vector<Var>& v) {
          Rng local(key);
          return nert::testing::random_composition(tape, v, local, 5);
        },
        1e-5);
    EXPECT_TRUE(r.ok()) << "trial " << trial << ": " << r.failures << " failures";
  }
}

TEST(Backward, DeterministicAcrossRepeats) {
  Rng rng(6);
  const Tensor a0 = random_tensor({3, 4}, rng), b0 = random_tensor({1, 4}, rng), w0 = random_tensor({4, 4}, rng);
  auto run = [&] {
    Tensor a = a0, b = b0, w = w0;
    for (Tensor* t : {&a, &b, &w}) t->set_requires_grad(true);
    Tape tape;
    Rng local(99);
    const Var loss = nert::testing::random_composition(tape, {tape.leaf(a), tape.leaf(b), tape.leaf(w)}, local, 8);
    tape.backward(loss);
    std::vector<double> out{loss.value().item()};
    for (Tensor* t : {&a, &b, &w}) out.insert(out.end(), t->grad().begin(), t->grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  Tensor p({2}, std::vector<double>{0.5, -0.5});
  p.set_requires_grad(true);
  AdamState state;
  Tensor* params[] = {&p};
  adam_step(params, state);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], -0.5);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, FirstStepHandValue) {
  Tensor p = Tensor::scalar(0.0);
  p.set_requires_grad(true);
  p.grad()[0] = 1.0;
  AdamState state;
  state.learning_rate = 0.001;
  Tensor* params[] = {&p};
  adam_step(params, state);
  EXPECT_NEAR(p[0], -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Adam, ParametersUpdateIndependently) {
  Tensor a = Tensor::scalar(1.0), b = Tensor::scalar(1.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  a.grad()[0] = 2.0;
  AdamState state;
  Tensor* params[] = {&a, &b};
  adam_step(params, state);
  EXPECT_LT(a[0], 1.0);
  EXPECT_EQ(b[0], 1.0);
}

TEST(Adam, MissingGradIsContractError) {
  Tensor p = Tensor::scalar(1.0);
  AdamState state;
  Tensor* params[] = {&p};
  EXPECT_THROW(adam_step(params, state), ContractError);
}
