// SPDX-License-Identifier: Apache-2.0
#include "nert/adam.hpp"

#include <cmath>
#include <string>

#include "nert/error.hpp"

namespace nert {

void adam_step(std::span<Tensor* const> params, AdamState& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->requires_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient buffer");
    }
  }
  if (state.first_moment.empty() && state.step_count == 0) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: parameter list changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i]->size()) {
      throw ContractError("adam_step: moment buffer does not match parameter " + std::to_string(i));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i]->data();
    auto grad = params[i]->grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      data[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    params[i]->zero_grad();
  }
}

}  // namespace nert
