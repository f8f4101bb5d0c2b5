// SPDX-License-Identifier: Apache-2.0
#include "nert/modulation.hpp"

#include <chrono>
#include <cmath>

#include "nert/adam.hpp"
#include "nert/error.hpp"
#include "nert/rng.hpp"

namespace nert {

namespace {

std::string map_name(const std::string& layer) { return "latent." + layer; }

Tensor latent_tensor(std::span<const double> z, std::size_t dim) {
  if (z.empty()) return Tensor({1, dim}, 0.0);
  if (z.size() != dim) throw DimensionError("latent has " + std::to_string(z.size()) + " entries, expected " +
                                            std::to_string(dim));
  return Tensor({1, dim}, std::vector<double>(z.begin(), z.end()));
}

}  // namespace

void to_json(nlohmann::json& j, const ModulationSpec& s) {
  j = {{"latent_dim", s.latent_dim}, {"target", std::string(to_string(s.target))},
       {"inner_steps", s.inner_steps}, {"inner_lr", s.inner_lr},
       {"outer_lr", s.outer_lr},       {"epochs", s.epochs},
       {"map_init", s.map_init},       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ModulationSpec& s) {
  ModulationSpec d;
  s.latent_dim = j.value("latent_dim", d.latent_dim);
  s.target = j.contains("target") ? modulation_target_from_string(j.at("target").get<std::string>()) : d.target;
  s.inner_steps = j.value("inner_steps", d.inner_steps);
  s.inner_lr = j.value("inner_lr", d.inner_lr);
  s.outer_lr = j.value("outer_lr", d.outer_lr);
  s.epochs = j.value("epochs", d.epochs);
  s.map_init = j.value("map_init", d.map_init);
  s.seed = j.value("seed", d.seed);
}

ModulatedModel::ModulatedModel(std::unique_ptr<Model> base, const ModulationSpec& spec)
    : base_(std::move(base)), spec_(spec) {
  if (!base_) throw ContractError("modulated model needs a base model");
  if (spec_.latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (spec_.inner_lr < 0.0) throw ConfigError("inner_lr must be >= 0");
  const auto layers = base_->modulated_layers(spec_.target);
  if (layers.empty()) throw ConfigError("modulation target selects no layers");
  const Rng root = Rng(spec_.seed).split("latent-maps");
  const double bound = spec_.map_init / std::sqrt(static_cast<double>(spec_.latent_dim));
  for (const auto& [layer, width] : layers) {
    Tensor w({spec_.latent_dim, width});
    Rng rng = root.split(layer);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    maps_.add(map_name(layer), std::move(w));
  }
}

BiasShifts ModulatedModel::shifts(const BoundParams& maps, Var z) const {
  if (z.shape() != Shape{1, spec_.latent_dim}) throw DimensionError("latent must be 1 x latent_dim");
  BiasShifts out;
  for (const auto& [layer, width] : base_->modulated_layers(spec_.target)) {
    out.emplace(layer, matmul(z, maps(map_name(layer))));
  }
  return out;
}

ModelOutput ModulatedModel::forward(Tape& tape, const BoundParams& base, const BoundParams& maps, Var z,
                                    const ModelInputs& in) const {
  const BiasShifts s = shifts(maps, z);
  return base_->forward(tape, base, in, &s);
}

Model::Prediction ModulatedModel::predict(std::span<const double> z, const CellBatch& batch) const {
  Tape tape;
  const BoundParams base = BoundParams::constants(tape, base_->params());
  const BoundParams maps = BoundParams::constants(tape, maps_);
  const Var zv = tape.constant(latent_tensor(z, spec_.latent_dim));
  const ModelOutput out = forward(tape, base, maps, zv, bind_inputs(tape, batch));
  Model::Prediction pred;
  const auto v = out.prediction.value().data();
  pred.value.assign(v.begin(), v.end());
  if (out.period) {
    const auto pv = out.period->value().data();
    pred.period.assign(pv.begin(), pv.end());
  }
  if (out.scale) {
    const auto sv = out.scale->value().data();
    pred.scale.assign(sv.begin(), sv.end());
  }
  return pred;
}

nlohmann::json ModulatedModel::checkpoint() const {
  nlohmann::json reg = nlohmann::json::object();
  for (const auto& [name, z] : registry) reg[name] = z;
  return {{"format", "nert-modulated-checkpoint"},
          {"version", 1},
          {"base", base_->checkpoint()},
          {"modulation", spec_},
          {"maps", maps_.to_json()},
          {"registry", reg}};
}

ModulatedModel ModulatedModel::load(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "nert-modulated-checkpoint") {
    throw ParseError("not a modulated-model checkpoint");
  }
  if (j.value("version", 0) != 1) throw ParseError("unsupported checkpoint version");
  ModulatedModel m(load_checkpoint(j.at("base")), j.at("modulation").get<ModulationSpec>());
  m.maps_.assign_values(ParamSet::from_json(j.at("maps")));
  for (const auto& [name, z] : j.at("registry").items()) m.registry[name] = z.get<std::vector<double>>();
  return m;
}

InnerResult inner_loop(const ModulatedModel& model, const CellBatch& batch, std::size_t steps, double lr) {
  const std::size_t dim = model.spec().latent_dim;
  Tensor z({1, dim}, 0.0);
  z.set_requires_grad(true);
  InnerResult result;
  result.best_z.assign(dim, 0.0);
  result.best_mse = std::numeric_limits<double>::infinity();
  const Tensor mask(batch.target.shape(), 1.0);
  for (std::size_t s = 0; s <= steps; ++s) {
    Tape tape;
    const BoundParams base = BoundParams::constants(tape, model.base().params());
    const BoundParams maps = BoundParams::constants(tape, model.maps());
    const Var zv = tape.leaf(z);
    const ModelOutput out = model.forward(tape, base, maps, zv, bind_inputs(tape, batch));
    const Var loss = masked_mse(out.prediction, tape.constant(batch.target), mask);
    const double value = loss.value().item();
    if (!std::isfinite(value)) throw NumericError("inner loop diverged");
    result.trajectory.push_back(value);
    if (value < result.best_mse) {
      result.best_mse = value;
      result.best_z.assign(z.data().begin(), z.data().end());
    }
    if (s == steps) break;
    tape.backward(loss);
    auto g = z.grad();
    auto zd = z.data();
    for (std::size_t k = 0; k < dim; ++k) zd[k] -= lr * g[k];
    z.zero_grad();
  }
  result.z.assign(z.data().begin(), z.data().end());
  return result;
}

MetaTrainReport meta_train(ModulatedModel& model, const std::vector<SignalDataset>& samples,
                           const std::function<void(std::size_t, double, double)>& on_epoch) {
  if (samples.size() < 2) throw ConfigError("meta-training needs at least two samples");
  const ModulationSpec& spec = model.spec();
  if (spec.epochs == 0) throw ConfigError("epochs must be >= 1");
  std::vector<CellBatch> batches;
  for (const auto& s : samples) {
    if (s.features() != samples.front().features() ||
        s.coords.temporal_dim() != samples.front().coords.temporal_dim()) {
      throw ConfigError("meta-training samples must share one coordinate layout");
    }
    batches.push_back(make_batch(s, s.cells_with(Role::train)));
    if (batches.back().cells.empty()) throw DegenerateInputError("sample '" + s.name + "' has no train cells");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<Tensor*> params = model.base().params().trainable_tensors();
  for (Tensor* t : model.maps().trainable_tensors()) params.push_back(t);
  AdamState adam;
  adam.learning_rate = spec.outer_lr;
  MetaTrainReport report;
  const double weight = 1.0 / static_cast<double>(samples.size());

  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    double pre = 0.0;
    double post = 0.0;
    std::vector<std::vector<double>> latents;
    try {
      for (const auto& batch : batches) {
        const InnerResult inner = inner_loop(model, batch, spec.inner_steps, spec.inner_lr);
        pre += weight * inner.trajectory.front();
        latents.push_back(inner.z);
      }
      for (std::size_t s = 0; s < batches.size(); ++s) {
        const CellBatch& batch = batches[s];
        Tape tape;
        const BoundParams base = BoundParams::leaves(tape, model.base().params());
        const BoundParams maps = BoundParams::leaves(tape, model.maps());
        const Var zv = tape.constant(latent_tensor(latents[s], spec.latent_dim));
        const ModelOutput out = model.forward(tape, base, maps, zv, bind_inputs(tape, batch));
        const Var loss = scale(mse(out.prediction, tape.constant(batch.target)), weight);
        post += loss.value().item();
        tape.backward(loss);
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string("meta-training diverged: ") + e.what(), static_cast<long>(epoch));
    }
    if (!std::isfinite(post)) throw NumericError("meta-training loss is not finite", static_cast<long>(epoch));
    adam_step(params, adam);
    report.pre_loss.push_back(pre);
    report.post_loss.push_back(post);
    if (on_epoch) on_epoch(epoch, pre, post);
  }

  model.registry.clear();
  for (std::size_t s = 0; s < batches.size(); ++s) {
    const InnerResult inner = inner_loop(model, batches[s], spec.inner_steps, spec.inner_lr);
    std::string key = samples[s].name;
    if (key.empty() || model.registry.count(key)) key = "sample-" + std::to_string(s);
    model.registry[key] = inner.best_z;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

AdaptResult adapt(const ModulatedModel& model, const SignalDataset& sample, std::optional<std::size_t> steps,
                  const EvalOptions& options) {
  const CellBatch train = make_batch(sample, sample.cells_with(Role::train));
  if (train.cells.empty()) throw DegenerateInputError("sample has no train cells");
  const InnerResult inner =
      inner_loop(model, train, steps.value_or(model.spec().inner_steps), model.spec().inner_lr);
  AdaptResult result;
  result.z = inner.best_z;
  result.trajectory = inner.trajectory;
  result.zero_train_mse = inner.trajectory.front();
  result.adapted_train_mse = inner.best_mse;
  const CellBatch full = make_full_batch(sample);
  result.zero = evaluate_predictions(sample, model.predict({}, full).value, options);
  result.adapted = evaluate_predictions(sample, model.predict(result.z, full).value, options);
  return result;
}

}  // namespace nert
