// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nert/autodiff.hpp"
#include "nert/params.hpp"
#include "nert/rng.hpp"

namespace nert::testing {

/// Builds a scalar loss from one Var per parameter tensor.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_abs = 0.0;  // largest absolute error among failing or all entries
  double worst_rel = 0.0;
  bool ok() const { return checked > 0 && failures == 0; }
};

inline double loss_value(const LossFn& f, std::vector<Tensor*>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (Tensor* p : params) vars.push_back(tape.constant(*p));
  return f(tape, vars).value().item();
}

/// Compares reverse-mode gradients with central differences. An entry passes
/// when its absolute error is <= abs_tol or its relative error is <= rel_tol.
inline GradCheckResult check_gradients(std::vector<Tensor*> params, const LossFn& f, double h = 1e-6,
                                       double rel_tol = 1e-4, double abs_tol = 1e-7) {
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor* p : params) vars.push_back(tape.leaf(*p));
    tape.backward(f(tape, vars));
  }
  GradCheckResult r;
  for (Tensor* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    auto data = p->data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double saved = data[k];
      data[k] = saved + h;
      const double up = loss_value(f, params);
      data[k] = saved - h;
      const double down = loss_value(f, params);
      data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(analytic[k] - numeric);
      const double rel_err = abs_err / std::max(std::abs(analytic[k]), std::abs(numeric));
      ++r.checked;
      const bool pass = abs_err <= abs_tol || rel_err <= rel_tol;
      if (!pass) ++r.failures;
      r.worst_abs = std::max(r.worst_abs, abs_err);
      if (abs_err > abs_tol) r.worst_rel = std::max(r.worst_rel, rel_err);
    }
  }
  return r;
}

/// Loss over a parameter set bound onto a tape.
using ParamLossFn = std::function<Var(Tape&, const BoundParams&)>;

/// Gradient check over every trainable tensor of `params`.
inline GradCheckResult check_param_gradients(ParamSet& params, const ParamLossFn& f, double h = 1e-6,
                                             double rel_tol = 1e-4, double abs_tol = 1e-7) {
  params.zero_grad();
  {
    Tape tape;
    const BoundParams bound = BoundParams::leaves(tape, params);
    tape.backward(f(tape, bound));
  }
  auto value = [&] {
    Tape tape;
    return f(tape, BoundParams::constants(tape, params)).value().item();
  };
  GradCheckResult r;
  for (Tensor* p : params.trainable_tensors()) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    auto data = p->data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double saved = data[k];
      data[k] = saved + h;
      const double up = value();
      data[k] = saved - h;
      const double down = value();
      data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(analytic[k] - numeric);
      const double rel_err = abs_err / std::max(std::abs(analytic[k]), std::abs(numeric));
      ++r.checked;
      if (!(abs_err <= abs_tol || rel_err <= rel_tol)) ++r.failures;
      r.worst_abs = std::max(r.worst_abs, abs_err);
      if (abs_err > abs_tol) r.worst_rel = std::max(r.worst_rel, rel_err);
    }
  }
  return r;
}

/// Random composition of tape operations over three leaves: a (3x4), b (1x4)
/// broadcast row, w (4x4). Returns a scalar.
inline Var random_composition(Tape& tape, const std::vector<Var>& leaves, Rng& rng, std::size_t steps) {
  (void)tape;
  std::vector<Var> pool{leaves[0], add(leaves[0], leaves[1])};
  const Var w = leaves[2];
  const Var row = leaves[1];
  for (std::size_t s = 0; s < steps; ++s) {
    const Var x = pool[rng.below(pool.size())];
    const Var y = pool[rng.below(pool.size())];
    Var out;
    switch (rng.below(12)) {
      case 0: out = add(x, y); break;
      case 1: out = sub(x, y); break;
      case 2: out = mul(x, y); break;
      case 3: out = matmul(x, w); break;
      case 4: out = sin(x); break;
      case 5: out = cos(x); break;
      case 6: out = square(scale(x, 0.5)); break;
      case 7: out = scale(x, rng.uniform(-2.0, 2.0)); break;
      case 8: out = add_scalar(x, rng.uniform(-1.0, 1.0)); break;
      case 9: out = relu(add_scalar(x, 0.1)); break;
      case 10: out = mul(x, row); break;
      default: out = concat({slice(x, 1, 0, 2), slice(y, 1, 2, 4)}, 1); break;
    }
    pool.push_back(out);
  }
  Var loss = mean(square(pool.back()));
  return add(loss, scale(sum(mul(pool[pool.size() / 2], row)), 0.1));
}

}  // namespace nert::testing
