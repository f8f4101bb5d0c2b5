// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/dataset.hpp"
#include "nert/evaluation.hpp"
#include "nert/models.hpp"
#include "nert/params.hpp"

namespace nert {

struct ModulationSpec {
  std::size_t latent_dim = 256;
  ModulationTarget target = ModulationTarget::scale;
  std::size_t inner_steps = 3;
  double inner_lr = 0.01;
  double outer_lr = 1e-3;
  std::size_t epochs = 500;
  double map_init = 1.0;  // latent maps start at U(+-map_init / sqrt(latent_dim))
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ModulationSpec& s);
void from_json(const nlohmann::json& j, ModulationSpec& s);

/// Shared model plus per-layer dense maps from a latent vector to bias shifts.
class ModulatedModel {
 public:
  ModulatedModel(std::unique_ptr<Model> base, const ModulationSpec& spec);

  Model& base() { return *base_; }
  const Model& base() const { return *base_; }
  ParamSet& maps() { return maps_; }
  const ParamSet& maps() const { return maps_; }
  const ModulationSpec& spec() const { return spec_; }

  /// z is 1 x latent_dim.
  BiasShifts shifts(const BoundParams& maps, Var z) const;
  ModelOutput forward(Tape& tape, const BoundParams& base, const BoundParams& maps, Var z,
                      const ModelInputs& in) const;
  /// Gradient-free prediction with latent `z` (empty span means z = 0).
  Model::Prediction predict(std::span<const double> z, const CellBatch& batch) const;

  /// Per-sample latents from meta-training, keyed by sample name.
  std::map<std::string, std::vector<double>> registry;

  nlohmann::json checkpoint() const;
  static ModulatedModel load(const nlohmann::json& j);

 private:
  std::unique_ptr<Model> base_;
  ModulationSpec spec_;
  ParamSet maps_;
};

struct InnerResult {
  std::vector<double> z;              // final latent
  std::vector<double> best_z;         // latent with the lowest train MSE along the trajectory
  std::vector<double> trajectory;     // train MSE at z_0 .. z_steps
  double best_mse = 0.0;
};

/// Gradient steps on z only, starting at z = 0, on the train cells of `batch`.
/// Shared parameters are read as constants and never modified.
InnerResult inner_loop(const ModulatedModel& model, const CellBatch& batch, std::size_t steps, double lr);

struct MetaTrainReport {
  std::vector<double> pre_loss;   // mean train MSE at z = 0, per epoch
  std::vector<double> post_loss;  // mean train MSE after the inner loop, per epoch
  double wall_seconds = 0.0;
};

/// First-order meta-learning: per epoch, adapt z on every sample, then one Adam
/// step on shared and map parameters using the mean post-adaptation loss.
MetaTrainReport meta_train(ModulatedModel& model, const std::vector<SignalDataset>& samples,
                           const std::function<void(std::size_t, double, double)>& on_epoch = {});

struct AdaptResult {
  std::vector<double> z;  // best-of-trajectory latent
  std::vector<double> trajectory;
  double zero_train_mse = 0.0;
  double adapted_train_mse = 0.0;
  EvalResult zero;     // metrics at z = 0
  EvalResult adapted;  // metrics at z
};

/// Adapts z on the unseen sample's train cells and scores all roles.
AdaptResult adapt(const ModulatedModel& model, const SignalDataset& sample, std::optional<std::size_t> steps = {},
                  const EvalOptions& options = {});

}  // namespace nert
