// SPDX-License-Identifier: Apache-2.0
#include "nert/models.hpp"

#include <cmath>
#include <numbers>

#include "nert/error.hpp"
#include "nert/rng.hpp"

namespace nert {
namespace {

void init_linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng rng,
                 double weight_bound, double bias_bound) {
  Tensor w({in, out});
  for (double& v : w.data()) v = rng.uniform(-weight_bound, weight_bound);
  Tensor b({1, out});
  if (bias_bound > 0.0) {
    Rng brng = rng.split("bias");
    for (double& v : b.data()) v = brng.uniform(-bias_bound, bias_bound);
  }
  params.add(name + ".weight", std::move(w));
  params.add(name + ".bias", std::move(b));
}

// Uniform +-sqrt(6 / fan_in), zero bias.
void init_relu_layer(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, const Rng& root) {
  init_linear(params, name, in, out, root.split(name), std::sqrt(6.0 / static_cast<double>(in)), 0.0);
}

std::string layer_name(std::string_view prefix, std::size_t i) { return std::string(prefix) + "." + std::to_string(i); }

// ReLU MLP with `layers` FC layers of width `width` (last one `out`), ReLU
// between layers and a linear output.
Var relu_mlp(const BoundParams& p, std::string_view prefix, std::size_t layers, Var x, const BiasShifts* shifts) {
  for (std::size_t i = 0; i < layers; ++i) {
    x = linear(p, layer_name(prefix, i), x, shifts);
    if (i + 1 < layers) x = relu(x);
  }
  return x;
}

void check_width(Var v, std::size_t expected, std::string_view what) {
  if (v.shape().size() != 2 || v.shape()[1] != expected) {
    throw DimensionError(std::string(what) + ": expected width " + std::to_string(expected) + ", got " +
                         shape_str(v.shape()));
  }
}

Var join_inputs(const ModelInputs& in) {
  if (in.onehot.shape()[1] == 0) return in.temporal;
  return concat({in.temporal, in.onehot}, 1);
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::nert:
      return "nert";
    case ModelKind::siren:
      return "siren";
    case ModelKind::ffn:
      return "ffn";
  }
  return "unknown";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "nert") return ModelKind::nert;
  if (name == "siren") return ModelKind::siren;
  if (name == "ffn") return ModelKind::ffn;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

std::string_view to_string(ModulationTarget target) {
  switch (target) {
    case ModulationTarget::scale:
      return "scale";
    case ModulationTarget::scale_and_period:
      return "scale-and-period";
    case ModulationTarget::hidden:
      return "hidden";
  }
  return "unknown";
}

ModulationTarget modulation_target_from_string(std::string_view name) {
  if (name == "scale") return ModulationTarget::scale;
  if (name == "scale-and-period") return ModulationTarget::scale_and_period;
  if (name == "hidden") return ModulationTarget::hidden;
  throw ConfigError("unknown modulation target '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const NeRTSpec& s) {
  j = {{"temporal_dim", s.temporal_dim}, {"feature_count", s.feature_count},
       {"use_onehot", s.use_onehot},     {"dim_psi_t", s.dim_psi_t},
       {"dim_psi_f", s.dim_psi_f},       {"dim_psi_F", s.dim_psi_F},
       {"dim_h_p", s.dim_h_p},           {"dim_h_s", s.dim_h_s},
       {"layers_t", s.layers_t},         {"layers_f", s.layers_f},
       {"layers_p", s.layers_p},         {"layers_s", s.layers_s},
       {"omega_init", s.omega_init},     {"omega_inner", s.omega_inner},
       {"use_compress_fc", s.use_compress_fc}, {"learn_frequencies", s.learn_frequencies},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, NeRTSpec& s) {
  NeRTSpec d;
  s.temporal_dim = j.value("temporal_dim", d.temporal_dim);
  s.feature_count = j.value("feature_count", d.feature_count);
  s.use_onehot = j.value("use_onehot", d.use_onehot);
  s.dim_psi_t = j.value("dim_psi_t", d.dim_psi_t);
  s.dim_psi_f = j.value("dim_psi_f", d.dim_psi_f);
  s.dim_psi_F = j.value("dim_psi_F", d.dim_psi_F);
  s.dim_h_p = j.value("dim_h_p", d.dim_h_p);
  s.dim_h_s = j.value("dim_h_s", d.dim_h_s);
  s.layers_t = j.value("layers_t", d.layers_t);
  s.layers_f = j.value("layers_f", d.layers_f);
  s.layers_p = j.value("layers_p", d.layers_p);
  s.layers_s = j.value("layers_s", d.layers_s);
  s.omega_init = j.value("omega_init", d.omega_init);
  s.omega_inner = j.value("omega_inner", d.omega_inner);
  s.use_compress_fc = j.value("use_compress_fc", d.use_compress_fc);
  s.learn_frequencies = j.value("learn_frequencies", d.learn_frequencies);
  s.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const SirenSpec& s) {
  j = {{"input_dim", s.input_dim}, {"hidden", s.hidden}, {"layers", s.layers}, {"omega0", s.omega0}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SirenSpec& s) {
  SirenSpec d;
  s.input_dim = j.value("input_dim", d.input_dim);
  s.hidden = j.value("hidden", d.hidden);
  s.layers = j.value("layers", d.layers);
  s.omega0 = j.value("omega0", d.omega0);
  s.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const FfnSpec& s) {
  j = {{"input_dim", s.input_dim}, {"frequencies", s.frequencies}, {"sigma", s.sigma},
       {"hidden", s.hidden},       {"layers", s.layers},           {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, FfnSpec& s) {
  FfnSpec d;
  s.input_dim = j.value("input_dim", d.input_dim);
  s.frequencies = j.value("frequencies", d.frequencies);
  s.sigma = j.value("sigma", d.sigma);
  s.hidden = j.value("hidden", d.hidden);
  s.layers = j.value("layers", d.layers);
  s.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"kind", std::string(to_string(c.kind))}, {"nert", c.nert}, {"siren", c.siren}, {"ffn", c.ffn}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.kind = model_kind_from_string(j.value("kind", std::string("nert")));
  if (j.contains("nert")) c.nert = j.at("nert").get<NeRTSpec>();
  if (j.contains("siren")) c.siren = j.at("siren").get<SirenSpec>();
  if (j.contains("ffn")) c.ffn = j.at("ffn").get<FfnSpec>();
}

// ---------------------------------------------------------------------------
// Model

ModelInputs bind_inputs(Tape& tape, const CellBatch& batch) {
  return {tape.constant(batch.temporal), tape.constant(batch.onehot)};
}

Var Model::scale_only(Tape&, const BoundParams&, const ModelInputs&, const BiasShifts*) const {
  throw ContractError(std::string(to_string(kind())) + " has no scale factor");
}

ModelOutput Model::forward(Tape& tape, const CellBatch& batch, const BiasShifts* shifts) {
  const BoundParams p = BoundParams::leaves(tape, params_);
  return forward(tape, p, bind_inputs(tape, batch), shifts);
}

Model::Prediction Model::predict(const CellBatch& batch) const {
  Tape tape;
  const BoundParams p = BoundParams::constants(tape, params_);
  const ModelOutput out = forward(tape, p, bind_inputs(tape, batch));
  Prediction pred;
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

nlohmann::json Model::checkpoint() const {
  return {{"format", "nert-checkpoint"}, {"version", 1}, {"config", config()}, {"params", params_.to_json()}};
}

// ---------------------------------------------------------------------------
// NeRT

NeRT::NeRT(const NeRTSpec& spec) : spec_(spec) {
  const auto& s = spec_;
  if (s.temporal_dim == 0 || s.feature_count == 0 || s.dim_psi_t == 0 || s.dim_psi_f == 0 || s.dim_psi_F == 0 ||
      s.dim_h_p == 0 || s.dim_h_s == 0 || s.layers_t == 0 || s.layers_f == 0 || s.layers_p == 0 || s.layers_s == 0) {
    throw ConfigError("NeRT dimensions and layer counts must be >= 1");
  }
  const Rng root = Rng(s.seed).split("nert");

  for (std::size_t i = 0; i < s.layers_t; ++i) {
    init_relu_layer(params_, layer_name("psi_t", i), i == 0 ? s.temporal_dim : s.dim_psi_t, s.dim_psi_t, root);
  }
  if (s.use_onehot) {
    for (std::size_t i = 0; i < s.layers_f; ++i) {
      init_relu_layer(params_, layer_name("psi_f", i), i == 0 ? s.feature_count : s.dim_psi_f, s.dim_psi_f, root);
    }
  }

  Tensor omega({s.temporal_dim, s.dim_psi_F});
  Rng frng = root.split("fourier.omega");
  for (double& w : omega.data()) w = frng.uniform(-s.omega_init, s.omega_init);
  params_.add("fourier.omega", std::move(omega), s.learn_frequencies);
  params_.add("fourier.A", Tensor({s.temporal_dim, s.dim_psi_F}, 1.0));
  params_.add("fourier.B", Tensor({s.temporal_dim, s.dim_psi_F}, 0.0));
  params_.add("fourier.delta", Tensor({s.temporal_dim, s.dim_psi_F}, 0.0));
  if (s.use_compress_fc) init_relu_layer(params_, "compress", s.temporal_dim * s.dim_psi_F, s.dim_psi_F, root);

  for (std::size_t i = 0; i < s.layers_p; ++i) {
    const std::size_t in = i == 0 ? periodic_input_width() : s.dim_h_p;
    const std::size_t out = i + 1 == s.layers_p ? 1 : s.dim_h_p;
    const double fan = static_cast<double>(in);
    init_linear(params_, layer_name("period", i), in, out, root.split(layer_name("period", i)),
                std::sqrt(6.0 / fan) / s.omega_inner, 1.0 / std::sqrt(fan));
  }
  for (std::size_t i = 0; i < s.layers_s; ++i) {
    const std::size_t in = i == 0 ? scale_input_width() : s.dim_h_s;
    const std::size_t out = i + 1 == s.layers_s ? 1 : s.dim_h_s;
    init_relu_layer(params_, layer_name("scale", i), in, out, root);
  }
}

ModelConfig NeRT::config() const {
  ModelConfig c;
  c.kind = ModelKind::nert;
  c.nert = spec_;
  return c;
}

std::size_t NeRT::fourier_width() const {
  return spec_.use_compress_fc ? spec_.dim_psi_F : spec_.temporal_dim * spec_.dim_psi_F;
}

std::size_t NeRT::periodic_input_width() const { return fourier_width() + (spec_.use_onehot ? spec_.dim_psi_f : 0); }

std::size_t NeRT::scale_input_width() const { return periodic_input_width() + spec_.dim_psi_t; }

Var NeRT::encode_temporal(const BoundParams& p, Var temporal) const {
  check_width(temporal, spec_.temporal_dim, "temporal coordinate");
  return relu_mlp(p, "psi_t", spec_.layers_t, temporal, nullptr);
}

Var NeRT::encode_feature(const BoundParams& p, Var onehot) const {
  check_width(onehot, spec_.feature_count, "feature coordinate");
  const Tensor& v = onehot.value();
  const std::size_t m = spec_.feature_count;
  for (std::size_t r = 0; r < v.shape()[0]; ++r) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = v[r * m + j];
      if (x == 1.0) {
        ++ones;
      } else if (x != 0.0) {
        ones = 2;
      }
    }
    if (ones != 1) throw ContractError("feature coordinate row " + std::to_string(r) + " is not one-hot");
  }
  return relu_mlp(p, "psi_f", spec_.layers_f, onehot, nullptr);
}

Var NeRT::fourier_map(const BoundParams& p, Var temporal) const {
  check_width(temporal, spec_.temporal_dim, "temporal coordinate");
  const std::size_t d = spec_.temporal_dim;
  std::vector<Var> parts;
  parts.reserve(d);
  for (std::size_t m = 0; m < d; ++m) {
    Var c = d == 1 ? temporal : slice(temporal, 1, m, m + 1);
    auto row = [&](std::string_view name) { return d == 1 ? p(name) : slice(p(name), 0, m, m + 1); };
    Var arg = add(mul(c, row("fourier.omega")), row("fourier.delta"));
    parts.push_back(add(mul(row("fourier.A"), sin(arg)), row("fourier.B")));
  }
  Var out = d == 1 ? parts.front() : concat(parts, 1);
  if (spec_.use_compress_fc) out = linear(p, "compress", out);
  return out;
}

Var NeRT::decode_periodic(const BoundParams& p, Var input, const BiasShifts* shifts) const {
  check_width(input, periodic_input_width(), "periodic decoder input");
  Var x = input;
  for (std::size_t i = 0; i < spec_.layers_p; ++i) {
    x = linear(p, layer_name("period", i), x, shifts);
    x = sin(spec_.omega_inner == 1.0 ? x : scale(x, spec_.omega_inner));
  }
  return x;
}

Var NeRT::decode_scale(const BoundParams& p, Var input, const BiasShifts* shifts) const {
  check_width(input, scale_input_width(), "scale decoder input");
  return relu_mlp(p, "scale", spec_.layers_s, input, shifts);
}

ModelOutput NeRT::forward(Tape&, const BoundParams& p, const ModelInputs& in, const BiasShifts* shifts) const {
  const Var psi_t = encode_temporal(p, in.temporal);
  const Var psi_F = fourier_map(p, in.temporal);
  std::vector<Var> periodic_parts{psi_F};
  if (spec_.use_onehot) periodic_parts.push_back(encode_feature(p, in.onehot));
  std::vector<Var> scale_parts = periodic_parts;
  scale_parts.push_back(psi_t);

  ModelOutput out;
  out.period = decode_periodic(p, periodic_parts.size() == 1 ? psi_F : concat(periodic_parts, 1), shifts);
  out.scale = decode_scale(p, concat(scale_parts, 1), shifts);
  out.prediction = mul(*out.period, *out.scale);
  return out;
}

Var NeRT::scale_only(Tape&, const BoundParams& p, const ModelInputs& in, const BiasShifts* shifts) const {
  const Var psi_t = encode_temporal(p, in.temporal);
  const Var psi_F = fourier_map(p, in.temporal);
  std::vector<Var> parts{psi_F};
  if (spec_.use_onehot) parts.push_back(encode_feature(p, in.onehot));
  parts.push_back(psi_t);
  return decode_scale(p, concat(parts, 1), shifts);
}

std::vector<std::pair<std::string, std::size_t>> NeRT::modulated_layers(ModulationTarget target) const {
  std::vector<std::pair<std::string, std::size_t>> out;
  if (target == ModulationTarget::hidden) throw ConfigError("NeRT modulates 'scale' or 'scale-and-period'");
  for (std::size_t i = 0; i < spec_.layers_s; ++i) {
    out.emplace_back(layer_name("scale", i), i + 1 == spec_.layers_s ? 1 : spec_.dim_h_s);
  }
  if (target == ModulationTarget::scale_and_period) {
    for (std::size_t i = 0; i < spec_.layers_p; ++i) {
      out.emplace_back(layer_name("period", i), i + 1 == spec_.layers_p ? 1 : spec_.dim_h_p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SIREN

Siren::Siren(const SirenSpec& spec) : spec_(spec) {
  if (spec_.input_dim == 0 || spec_.hidden == 0 || spec_.layers == 0) throw ConfigError("SIREN sizes must be >= 1");
  const Rng root = Rng(spec_.seed).split("siren");
  for (std::size_t i = 0; i <= spec_.layers; ++i) {
    const std::size_t in = i == 0 ? spec_.input_dim : spec_.hidden;
    const std::size_t out = i == spec_.layers ? 1 : spec_.hidden;
    const double fan = static_cast<double>(in);
    const double bound = i == 0 ? 1.0 / fan : std::sqrt(6.0 / fan) / spec_.omega0;
    init_linear(params_, layer_name("siren", i), in, out, root.split(layer_name("siren", i)), bound,
                1.0 / std::sqrt(fan));
  }
}

ModelConfig Siren::config() const {
  ModelConfig c;
  c.kind = ModelKind::siren;
  c.siren = spec_;
  return c;
}

ModelOutput Siren::forward(Tape&, const BoundParams& p, const ModelInputs& in, const BiasShifts* shifts) const {
  Var x = join_inputs(in);
  check_width(x, spec_.input_dim, "SIREN input");
  for (std::size_t i = 0; i < spec_.layers; ++i) x = sin(scale(linear(p, layer_name("siren", i), x, shifts), spec_.omega0));
  ModelOutput out;
  out.prediction = linear(p, layer_name("siren", spec_.layers), x, shifts);
  return out;
}

std::vector<std::pair<std::string, std::size_t>> Siren::modulated_layers(ModulationTarget) const {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t i = 1; i < spec_.layers; ++i) out.emplace_back(layer_name("siren", i), spec_.hidden);
  return out;
}

// ---------------------------------------------------------------------------
// FFN

Ffn::Ffn(const FfnSpec& spec) : spec_(spec) {
  if (spec_.input_dim == 0 || spec_.frequencies == 0 || spec_.hidden == 0 || spec_.layers == 0) {
    throw ConfigError("FFN sizes must be >= 1");
  }
  const Rng root = Rng(spec_.seed).split("ffn");
  Tensor b({spec_.input_dim, spec_.frequencies});
  Rng brng = root.split("ffn.B");
  for (double& v : b.data()) v = spec_.sigma * brng.normal();
  params_.add("ffn.B", std::move(b), false);
  for (std::size_t i = 0; i <= spec_.layers; ++i) {
    const std::size_t in = i == 0 ? 2 * spec_.frequencies : spec_.hidden;
    const std::size_t out = i == spec_.layers ? 1 : spec_.hidden;
    init_relu_layer(params_, layer_name("ffn", i), in, out, root);
  }
}

ModelConfig Ffn::config() const {
  ModelConfig c;
  c.kind = ModelKind::ffn;
  c.ffn = spec_;
  return c;
}

Var Ffn::features(const BoundParams& p, Var coords) const {
  check_width(coords, spec_.input_dim, "FFN input");
  const Var z = scale(matmul(coords, p("ffn.B")), 2.0 * std::numbers::pi);
  return concat({sin(z), cos(z)}, 1);
}

ModelOutput Ffn::forward(Tape&, const BoundParams& p, const ModelInputs& in, const BiasShifts* shifts) const {
  ModelOutput out;
  out.prediction = relu_mlp(p, "ffn", spec_.layers + 1, features(p, join_inputs(in)), shifts);
  return out;
}

std::vector<std::pair<std::string, std::size_t>> Ffn::modulated_layers(ModulationTarget) const {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t i = 1; i < spec_.layers; ++i) out.emplace_back(layer_name("ffn", i), spec_.hidden);
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(const ModelConfig& config) {
  switch (config.kind) {
    case ModelKind::nert:
      return std::make_unique<NeRT>(config.nert);
    case ModelKind::siren:
      return std::make_unique<Siren>(config.siren);
    case ModelKind::ffn:
      return std::make_unique<Ffn>(config.ffn);
  }
  throw ConfigError("unknown model kind");
}

std::size_t parameter_count(const ModelConfig& config) { return make_model(config)->parameter_count(); }

ModelConfig match_parameter_count(ModelConfig config, std::size_t target_count) {
  if (config.kind == ModelKind::nert) return config;
  std::size_t best_width = 1;
  std::size_t best_gap = SIZE_MAX;
  for (std::size_t width = 1; width <= 1024; ++width) {
    (config.kind == ModelKind::siren ? config.siren.hidden : config.ffn.hidden) = width;
    const std::size_t count = parameter_count(config);
    const std::size_t gap = count > target_count ? count - target_count : target_count - count;
    if (gap < best_gap) {
      best_gap = gap;
      best_width = width;
    }
    if (count > target_count) break;
  }
  (config.kind == ModelKind::siren ? config.siren.hidden : config.ffn.hidden) = best_width;
  return config;
}

std::unique_ptr<Model> load_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "nert-checkpoint") throw ParseError("not a model checkpoint");
  if (j.value("version", 0) != 1) throw ParseError("unsupported checkpoint version");
  auto model = make_model(j.at("config").get<ModelConfig>());
  const ParamSet stored = ParamSet::from_json(j.at("params"));
  model->params().assign_values(stored);
  for (const auto& name : stored.names()) model->params().set_trainable(name, stored.trainable(name));
  return model;
}

}  // namespace nert
