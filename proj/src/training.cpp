// SPDX-License-Identifier: Apache-2.0
#include "nert/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "nert/adam.hpp"
#include "nert/error.hpp"

namespace nert {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},           {"learning_rate", c.learning_rate}, {"penalty_weight", c.penalty_weight},
       {"penalty_order", c.penalty_order}, {"fd_step", c.fd_step},          {"seed", c.seed},
       {"use_validation", c.use_validation}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.penalty_weight = j.value("penalty_weight", d.penalty_weight);
  c.penalty_order = j.value("penalty_order", d.penalty_order);
  c.fd_step = j.value("fd_step", d.fd_step);
  c.seed = j.value("seed", d.seed);
  c.use_validation = j.value("use_validation", d.use_validation);
}

nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["train_loss"] = r.train_loss;
  j["train_mse"] = r.train_mse;
  j["val_mse"] = r.val_mse;
  j["best_epoch"] = r.best_epoch;
  j["best_val_mse"] = r.best_val_mse ? nlohmann::json(*r.best_val_mse) : nlohmann::json(nullptr);
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

std::vector<std::pair<int, double>> derivative_stencil(int order) {
  switch (order) {
    case 1:
      return {{-1, -0.5}, {1, 0.5}};
    case 2:
      return {{-1, 1.0}, {0, -2.0}, {1, 1.0}};
    case 3:
      return {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}};
    default:
      throw ConfigError("derivative penalty order must be 1, 2 or 3");
  }
}

Var derivative_penalty(const ScaleFn& scale_at, const Tensor& temporal, int order, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (temporal.rank() != 2 || temporal.shape()[0] == 0) throw DegenerateInputError("penalty needs sample points");
  const auto stencil = derivative_stencil(order);
  const std::size_t rows = temporal.shape()[0];
  const std::size_t d = temporal.shape()[1];
  std::optional<Var> deriv;
  for (auto [offset, coeff] : stencil) {
    Tensor shifted = temporal;
    for (std::size_t i = 0; i < rows; ++i) shifted[i * d] += offset * h;
    Var term = scale(scale_at(shifted), coeff);
    deriv = deriv ? add(*deriv, term) : term;
  }
  Var d_n = scale(*deriv, 1.0 / std::pow(h, order));
  Var penalty = mean(square(d_n));
  if (!std::isfinite(penalty.value().item())) throw NumericError("derivative penalty is not finite");
  return penalty;
}

Var training_loss(Var pred, Var target, const Tensor& mask, std::optional<Var> penalty, double lambda) {
  Var loss = masked_mse(pred, target, mask);
  if (lambda < 0.0) throw ConfigError("penalty weight must be >= 0");
  if (penalty && lambda > 0.0) loss = add(loss, scale(*penalty, lambda));
  return loss;
}

std::optional<double> role_mse(const Model& model, const SignalDataset& data, Role role) {
  auto cells = data.cells_with(role);
  if (cells.empty()) return std::nullopt;
  const CellBatch batch = make_batch(data, std::move(cells));
  const auto pred = model.predict(batch);
  double acc = 0.0;
  for (std::size_t r = 0; r < pred.value.size(); ++r) {
    const double diff = pred.value[r] - batch.target[r];
    acc += diff * diff;
  }
  return acc / static_cast<double>(pred.value.size());
}

TrainReport train(Model& model, const SignalDataset& data, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (config.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (config.penalty_weight < 0.0) throw ConfigError("penalty weight must be >= 0");
  if (!(config.fd_step > 0.0)) throw ConfigError("fd_step must be > 0");
  const bool use_penalty = config.penalty_weight > 0.0;
  if (use_penalty && !model.has_scale()) throw ConfigError("derivative penalty needs a model with a scale factor");
  if (use_penalty) derivative_stencil(config.penalty_order);

  const auto start = std::chrono::steady_clock::now();
  const CellBatch batch = make_batch(data, data.cells_with(Role::train));
  if (batch.cells.empty()) throw DegenerateInputError("dataset has no train cells");
  const Tensor mask(batch.target.shape(), 1.0);
  const bool use_validation = config.use_validation && data.count(Role::validation) > 0;

  TrainReport report;
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  auto params = model.params().trainable_tensors();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_value = 0.0;
    double mse_value = 0.0;
    std::optional<double> val;
    try {
      Tape tape;
      const BoundParams p = BoundParams::leaves(tape, model.params());
      const ModelInputs in = bind_inputs(tape, batch);
      const ModelOutput out = model.forward(tape, p, in);
      const Var target = tape.constant(batch.target);
      std::optional<Var> penalty;
      if (use_penalty) {
        const ScaleFn scale_at = [&](const Tensor& t) {
          return model.scale_only(tape, p, ModelInputs{tape.constant(t), in.onehot});
        };
        penalty = derivative_penalty(scale_at, batch.temporal, config.penalty_order, config.fd_step);
      }
      const Var loss = training_loss(out.prediction, target, mask, penalty, config.penalty_weight);
      loss_value = loss.value().item();
      mse_value = penalty ? masked_mse(out.prediction, target, mask).value().item() : loss_value;
      tape.backward(loss);
      if (!std::isfinite(loss_value)) throw NumericError("training loss is not finite");
      adam_step(params, adam);
      if (use_validation) val = role_mse(model, data, Role::validation);
    } catch (const NumericError& e) {
      throw NumericError(std::string("training diverged: ") + e.what(), static_cast<long>(epoch));
    }
    report.train_loss.push_back(loss_value);
    report.train_mse.push_back(mse_value);

    if (val) {
      report.val_mse.push_back(*val);
      if (*val < best) {
        best = *val;
        report.best_epoch = epoch;
        report.best_params = model.params();
      }
    }
    if (on_epoch) on_epoch({epoch, loss_value, val});
  }

  report.final_params = model.params();
  if (use_validation) {
    report.best_val_mse = best;
    model.params().assign_values(report.best_params);
  } else {
    report.best_epoch = config.epochs - 1;
    report.best_params = model.params();
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace nert
