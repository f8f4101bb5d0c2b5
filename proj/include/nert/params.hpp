// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/autodiff.hpp"
#include "nert/tensor.hpp"

namespace nert {

/// Named parameter collection in registration order. Entries marked
/// non-trainable are fixed buffers (e.g. sampled frequencies); they are saved
/// in checkpoints but never handed to the optimizer.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  bool trainable(std::string_view name) const;
  void set_trainable(std::string_view name, bool trainable);

  const std::vector<std::string>& names() const { return order_; }
  std::vector<Tensor*> trainable_tensors();
  std::size_t trainable_count() const;
  void zero_grad();

  /// Copies values (not gradients) from `other`, which must have the same layout.
  void assign_values(const ParamSet& other);
  bool same_values(const ParamSet& other) const;

  nlohmann::json to_json() const;
  static ParamSet from_json(const nlohmann::json& j);

 private:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };
  const Entry& entry(std::string_view name) const;
  std::map<std::string, Entry, std::less<>> entries_;
  std::vector<std::string> order_;
};

/// Parameters of one forward pass, bound onto a tape either as trainable
/// leaves (gradients flow into the ParamSet) or as constants.
class BoundParams {
 public:
  static BoundParams leaves(Tape& tape, ParamSet& params);
  static BoundParams constants(Tape& tape, const ParamSet& params);

  Var operator()(std::string_view name) const;

 private:
  std::map<std::string, Var, std::less<>> vars_;
};

/// Additive bias shifts per layer name (latent modulation).
using BiasShifts = std::map<std::string, Var, std::less<>>;

/// x * W + b (+ shift), with parameters "<name>.weight" (in x out) and
/// "<name>.bias" (1 x out).
Var linear(const BoundParams& p, const std::string& name, Var x, const BiasShifts* shifts = nullptr);

}  // namespace nert
