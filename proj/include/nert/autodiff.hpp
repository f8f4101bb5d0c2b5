// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nert/tensor.hpp"

namespace nert {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives and has not been cleared.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// What a backward rule sees: the node's output value and incoming gradient,
/// plus each input's value and gradient accumulator. An accumulator is null
/// when that input does not lead to any trainable leaf.
class BackwardContext {
 public:
  const Tensor& output() const { return *output_; }
  std::span<const double> output_grad() const { return output_grad_; }
  std::size_t arity() const { return inputs_.size(); }
  const Tensor& input(std::size_t i) const { return *inputs_[i]; }
  std::vector<double>* input_grad(std::size_t i) const { return input_grads_[i]; }

 private:
  friend class Tape;
  const Tensor* output_ = nullptr;
  std::span<const double> output_grad_;
  std::vector<const Tensor*> inputs_;
  std::vector<std::vector<double>*> input_grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Define-by-run reverse-mode tape. Operations append nodes in execution
/// order, so node order is a topological order and backward() walks it once
/// in reverse. A Tape is single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a value that never receives a gradient.
  Var constant(Tensor value);
  /// Records a parameter. Its data is copied onto the tape; backward() adds
  /// d(loss)/d(param) into param.grad() when param.requires_grad() is set.
  Var leaf(Tensor& param);
  /// Appends an operation node. `backward` may be empty for non-differentiable
  /// nodes.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() loss w.r.t. `v`; empty if none reached it.
  std::span<const double> grad(Var v) const;
  bool needs_grad(Var v) const;
  std::string_view op_name(Var v) const;

  /// Populates gradients for every node reachable from `loss` (a one-element
  /// tensor) and accumulates into bound parameter buffers.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    Tensor* bound = nullptr;
    bool needs_grad = false;
    std::string_view op;
  };

  void check_owner(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Binary elementwise ops broadcast over trailing
// dimensions and extent-1 axes; gradients of broadcast operands are summed
// over the broadcast axes.

Shape broadcast_shape(const Shape& a, const Shape& b);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var a);
Var sin(Var a);
Var cos(Var a);
Var square(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var sum(Var a);
Var mean(Var a);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);

/// (1/K) * sum((pred - target)^2). `target` must not carry a gradient.
Var mse(Var pred, Var target);
/// Mean of squared error over entries where mask != 0.
Var masked_mse(Var pred, Var target, const Tensor& mask);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double k, Var a) { return scale(a, k); }
inline Var operator-(Var a) { return scale(a, -1.0); }

}  // namespace nert
