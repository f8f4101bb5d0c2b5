// SPDX-License-Identifier: Apache-2.0
#include "nert/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "nert/error.hpp"

namespace nert {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(*this);
}

void Tape::check_owner(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = Tensor(value.shape(), std::move(value.storage()));
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor& param) {
  Node node;
  node.value = Tensor(param.shape(), param.storage());
  node.bound = &param;
  node.needs_grad = param.requires_grad();
  node.op = "leaf";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op) {
  Node node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.id());
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  value.check_finite(op);
  node.value = std::move(value);
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return nodes_[v.id()].value;
}

std::span<const double> Tape::grad(Var v) const {
  check_owner(v);
  if (v.id() >= grads_.size()) return {};
  return grads_[v.id()];
}

bool Tape::needs_grad(Var v) const {
  check_owner(v);
  return nodes_[v.id()].needs_grad;
}

std::string_view Tape::op_name(Var v) const {
  check_owner(v);
  return nodes_[v.id()].op;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(nodes_[loss.id()].value.shape()));
  }
  grads_.assign(nodes_.size(), {});
  grads_[loss.id()].assign(1, 1.0);

  BackwardContext ctx;
  for (std::size_t idx = loss.id() + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (grads_[idx].empty() || !node.needs_grad) continue;
    if (node.bound && node.bound->requires_grad()) {
      auto dst = node.bound->grad();
      const auto& src = grads_[idx];
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
    if (!node.backward) continue;
    ctx.output_ = &node.value;
    ctx.output_grad_ = grads_[idx];
    ctx.inputs_.clear();
    ctx.input_grads_.clear();
    for (auto in : node.inputs) {
      ctx.inputs_.push_back(&nodes_[in].value);
      if (nodes_[in].needs_grad) {
        if (grads_[in].empty()) grads_[in].assign(nodes_[in].value.size(), 0.0);
        ctx.input_grads_.push_back(&grads_[in]);
      } else {
        ctx.input_grads_.push_back(nullptr);
      }
    }
    node.backward(ctx);
  }
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

}  // namespace nert
