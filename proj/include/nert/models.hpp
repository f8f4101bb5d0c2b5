// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/autodiff.hpp"
#include "nert/dataset.hpp"
#include "nert/params.hpp"

namespace nert {

enum class ModelKind { nert, siren, ffn };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

/// Which layers receive latent bias shifts.
enum class ModulationTarget { scale, scale_and_period, hidden };

std::string_view to_string(ModulationTarget target);
ModulationTarget modulation_target_from_string(std::string_view name);

struct NeRTSpec {
  std::size_t temporal_dim = 1;
  std::size_t feature_count = 1;
  bool use_onehot = false;  // feature encoder present
  std::size_t dim_psi_t = 30;
  std::size_t dim_psi_f = 10;
  std::size_t dim_psi_F = 30;  // frequencies per temporal component (and compressed width)
  std::size_t dim_h_p = 30;
  std::size_t dim_h_s = 30;
  std::size_t layers_t = 2;
  std::size_t layers_f = 2;
  std::size_t layers_p = 5;
  std::size_t layers_s = 2;
  double omega_init = 10.0;   // frequencies drawn from U[-omega_init, omega_init]
  double omega_inner = 1.0;   // sine activation frequency of the periodic decoder
  bool use_compress_fc = false;
  bool learn_frequencies = false;
  std::uint64_t seed = 0;
};

struct SirenSpec {
  std::size_t input_dim = 1;
  std::size_t hidden = 64;
  std::size_t layers = 4;  // sine layers; a linear output layer follows
  double omega0 = 30.0;
  std::uint64_t seed = 0;
};

struct FfnSpec {
  std::size_t input_dim = 1;
  std::size_t frequencies = 32;
  double sigma = 10.0;  // std of the Gaussian frequency matrix
  std::size_t hidden = 64;
  std::size_t layers = 3;  // ReLU layers; a linear output layer follows
  std::uint64_t seed = 0;
};

struct ModelConfig {
  ModelKind kind = ModelKind::nert;
  NeRTSpec nert;
  SirenSpec siren;
  FfnSpec ffn;
};

void to_json(nlohmann::json& j, const NeRTSpec& s);
void from_json(const nlohmann::json& j, NeRTSpec& s);
void to_json(nlohmann::json& j, const SirenSpec& s);
void from_json(const nlohmann::json& j, SirenSpec& s);
void to_json(nlohmann::json& j, const FfnSpec& s);
void from_json(const nlohmann::json& j, FfnSpec& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Tape inputs of one forward pass.
struct ModelInputs {
  Var temporal;  // K x D
  Var onehot;    // K x M (K x 0 without feature coordinates)
};

ModelInputs bind_inputs(Tape& tape, const CellBatch& batch);

struct ModelOutput {
  Var prediction;             // K x 1
  std::optional<Var> period;  // NeRT only
  std::optional<Var> scale;   // NeRT only
};

/// Common interface of NeRT, SIREN and FFN.
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual ModelConfig config() const = 0;
  virtual ModelOutput forward(Tape& tape, const BoundParams& p, const ModelInputs& in,
                              const BiasShifts* shifts = nullptr) const = 0;
  /// Layers (name, width) that receive latent bias shifts for `target`.
  virtual std::vector<std::pair<std::string, std::size_t>> modulated_layers(ModulationTarget target) const = 0;
  /// True if the model exposes a scale factor (scale_only is usable).
  virtual bool has_scale() const { return false; }
  virtual Var scale_only(Tape& tape, const BoundParams& p, const ModelInputs& in,
                         const BiasShifts* shifts = nullptr) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.trainable_count(); }

  /// Forward over `batch` with parameters bound as trainable leaves.
  ModelOutput forward(Tape& tape, const CellBatch& batch, const BiasShifts* shifts = nullptr);
  /// Gradient-free evaluation; returns (prediction, period, scale) columns.
  struct Prediction {
    std::vector<double> value;
    std::vector<double> period;
    std::vector<double> scale;
  };
  Prediction predict(const CellBatch& batch) const;

  nlohmann::json checkpoint() const;

 protected:
  ParamSet params_;
};

class NeRT final : public Model {
 public:
  using Model::forward;
  explicit NeRT(const NeRTSpec& spec);

  ModelKind kind() const override { return ModelKind::nert; }
  ModelConfig config() const override;
  const NeRTSpec& spec() const { return spec_; }

  ModelOutput forward(Tape& tape, const BoundParams& p, const ModelInputs& in,
                      const BiasShifts* shifts = nullptr) const override;
  std::vector<std::pair<std::string, std::size_t>> modulated_layers(ModulationTarget target) const override;
  bool has_scale() const override { return true; }
  Var scale_only(Tape& tape, const BoundParams& p, const ModelInputs& in,
                 const BiasShifts* shifts = nullptr) const override;

  // Building blocks, exposed for testing and analysis.
  Var encode_temporal(const BoundParams& p, Var temporal) const;
  /// Throws ContractError if a row of `onehot` is not one-hot.
  Var encode_feature(const BoundParams& p, Var onehot) const;
  /// Learnable Fourier mapping, optionally followed by the compression layer.
  Var fourier_map(const BoundParams& p, Var temporal) const;
  Var decode_periodic(const BoundParams& p, Var input, const BiasShifts* shifts = nullptr) const;
  Var decode_scale(const BoundParams& p, Var input, const BiasShifts* shifts = nullptr) const;

  std::size_t fourier_width() const;
  std::size_t periodic_input_width() const;
  std::size_t scale_input_width() const;

 private:
  NeRTSpec spec_;
};

class Siren final : public Model {
 public:
  using Model::forward;
  explicit Siren(const SirenSpec& spec);

  ModelKind kind() const override { return ModelKind::siren; }
  ModelConfig config() const override;
  const SirenSpec& spec() const { return spec_; }
  ModelOutput forward(Tape& tape, const BoundParams& p, const ModelInputs& in,
                      const BiasShifts* shifts = nullptr) const override;
  std::vector<std::pair<std::string, std::size_t>> modulated_layers(ModulationTarget target) const override;

 private:
  SirenSpec spec_;
};

class Ffn final : public Model {
 public:
  using Model::forward;
  explicit Ffn(const FfnSpec& spec);

  ModelKind kind() const override { return ModelKind::ffn; }
  ModelConfig config() const override;
  const FfnSpec& spec() const { return spec_; }
  ModelOutput forward(Tape& tape, const BoundParams& p, const ModelInputs& in,
                      const BiasShifts* shifts = nullptr) const override;
  std::vector<std::pair<std::string, std::size_t>> modulated_layers(ModulationTarget target) const override;
  /// Fixed Fourier features [sin(2 pi c B), cos(2 pi c B)].
  Var features(const BoundParams& p, Var coords) const;

 private:
  FfnSpec spec_;
};

std::unique_ptr<Model> make_model(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

/// Returns `config` with the hidden width of a SIREN/FFN adjusted so its
/// parameter count is as close as possible to `target_count`.
ModelConfig match_parameter_count(ModelConfig config, std::size_t target_count);

/// Checkpoint round trip. load_checkpoint restores the exact parameter values.
std::unique_ptr<Model> load_checkpoint(const nlohmann::json& j);

}  // namespace nert
