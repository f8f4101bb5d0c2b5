// SPDX-License-Identifier: Apache-2.0
#include "nert/params.hpp"

#include "nert/error.hpp"

namespace nert {

Tensor& ParamSet::add(const std::string& name, Tensor value, bool trainable) {
  if (entries_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
  value.set_requires_grad(trainable);
  auto [it, ok] = entries_.emplace(name, Entry{std::move(value), trainable});
  order_.push_back(name);
  return it->second.value;
}

bool ParamSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const ParamSet::Entry& ParamSet::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IndexError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamSet::get(std::string_view name) { return const_cast<Entry&>(entry(name)).value; }
const Tensor& ParamSet::get(std::string_view name) const { return entry(name).value; }
bool ParamSet::trainable(std::string_view name) const { return entry(name).trainable; }

void ParamSet::set_trainable(std::string_view name, bool trainable) {
  auto& e = const_cast<Entry&>(entry(name));
  e.trainable = trainable;
  e.value.set_requires_grad(trainable);
}

std::vector<Tensor*> ParamSet::trainable_tensors() {
  std::vector<Tensor*> out;
  for (const auto& name : order_) {
    auto& e = entries_.find(name)->second;
    if (e.trainable) out.push_back(&e.value);
  }
  return out;
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, e] : entries_) e.value.zero_grad();
}

void ParamSet::assign_values(const ParamSet& other) {
  if (other.order_ != order_) throw ContractError("parameter layouts differ");
  for (auto& [name, e] : entries_) {
    const Tensor& src = other.get(name);
    if (src.shape() != e.value.shape()) throw DimensionError("parameter '" + name + "' changed shape");
    std::copy(src.data().begin(), src.data().end(), e.value.data().begin());
  }
}

bool ParamSet::same_values(const ParamSet& other) const {
  if (other.order_ != order_) return false;
  for (const auto& [name, e] : entries_) {
    const Tensor& o = other.get(name);
    if (o.shape() != e.value.shape() || o.storage() != e.value.storage()) return false;
  }
  return true;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& name : order_) {
    const Entry& e = entries_.find(name)->second;
    arr.push_back({{"name", name}, {"shape", e.value.shape()}, {"trainable", e.trainable}, {"data", e.value.storage()}});
  }
  return arr;
}

ParamSet ParamSet::from_json(const nlohmann::json& j) {
  ParamSet out;
  for (const auto& item : j) {
    Shape shape = item.at("shape").get<Shape>();
    std::vector<double> data = item.at("data").get<std::vector<double>>();
    out.add(item.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)),
            item.at("trainable").get<bool>());
  }
  return out;
}

BoundParams BoundParams::leaves(Tape& tape, ParamSet& params) {
  BoundParams b;
  for (const auto& name : params.names()) b.vars_.emplace(name, tape.leaf(params.get(name)));
  return b;
}

BoundParams BoundParams::constants(Tape& tape, const ParamSet& params) {
  BoundParams b;
  for (const auto& name : params.names()) {
    const Tensor& t = params.get(name);
    b.vars_.emplace(name, tape.constant(Tensor(t.shape(), t.storage())));
  }
  return b;
}

Var BoundParams::operator()(std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw IndexError("parameter '" + std::string(name) + "' is not bound");
  return it->second;
}

Var linear(const BoundParams& p, const std::string& name, Var x, const BiasShifts* shifts) {
  Var y = add(matmul(x, p(name + ".weight")), p(name + ".bias"));
  if (shifts) {
    if (auto it = shifts->find(name); it != shifts->end()) y = add(y, it->second);
  }
  return y;
}

}  // namespace nert
