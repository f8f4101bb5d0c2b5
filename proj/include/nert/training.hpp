// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/autodiff.hpp"
#include "nert/dataset.hpp"
#include "nert/models.hpp"
#include "nert/params.hpp"

namespace nert {

struct TrainConfig {
  std::size_t epochs = 2000;
  double learning_rate = 1e-3;
  double penalty_weight = 0.0;  // lambda
  int penalty_order = 3;
  double fd_step = 1e-3;  // in scaled coordinate units
  std::uint64_t seed = 0;
  bool use_validation = true;  // ignored when the dataset has no validation cells
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainReport {
  std::vector<double> train_loss;  // objective incl. penalty
  std::vector<double> train_mse;
  std::vector<double> val_mse;  // empty without validation cells
  std::size_t best_epoch = 0;
  std::optional<double> best_val_mse;
  double wall_seconds = 0.0;
  ParamSet final_params;
  ParamSet best_params;
};

nlohmann::json report_to_json(const TrainReport& report);

/// Scale factor evaluated at a batch of temporal coordinates (K x D) -> K x 1.
using ScaleFn = std::function<Var(const Tensor& temporal)>;

/// Mean over the sample rows of (d^n scale / dt^n)^2, where t is the first
/// temporal component and the derivative is a central finite difference with
/// step `h`. The stencil evaluations are recorded on the tape, so the penalty
/// is differentiable w.r.t. whatever `scale_at` depends on.
Var derivative_penalty(const ScaleFn& scale_at, const Tensor& temporal, int order, double h);

/// Finite-difference stencil (offset multiples of h, coefficient) for order n.
std::vector<std::pair<int, double>> derivative_stencil(int order);

/// Masked MSE plus lambda * penalty.
Var training_loss(Var pred, Var target, const Tensor& mask, std::optional<Var> penalty, double lambda);

struct EpochLog {
  std::size_t epoch;
  double train_loss;
  std::optional<double> val_mse;
};

/// Full-batch Adam training on train-role cells with best-validation
/// checkpointing. On return the model holds the best parameters (the last
/// epoch's when there is no validation data).
TrainReport train(Model& model, const SignalDataset& data, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// MSE of the model's predictions over observed cells of `role`, or nullopt
/// when the role is empty.
std::optional<double> role_mse(const Model& model, const SignalDataset& data, Role role);

}  // namespace nert
