// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nert/tensor.hpp"

namespace nert {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update over `params`, then zeroes their gradients.
/// Moment buffers are allocated on the first step and must keep matching the
/// parameter sizes afterwards.
void adam_step(std::span<Tensor* const> params, AdamState& state);

}  // namespace nert
