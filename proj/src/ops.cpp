// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "nert/autodiff.hpp"
#include "nert/error.hpp"

namespace nert {
namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
  return a.tape();
}

// Strides of `in` viewed in the (right-aligned) broadcast shape `out`; a
// broadcast axis gets stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t k = in.size(); k-- > 0;) {
    strides[offset + k] = in[k] == 1 ? 0 : stride;
    stride *= in[k];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) for every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        Fn&& fn) {
  const std::size_t total = shape_numel(out);
  if (total == 0) return;
  if (out.empty()) {
    fn(0, 0, 0);
    return;
  }
  const std::size_t rank = out.size();
  const std::size_t inner = out[rank - 1];
  const std::size_t ia = sa[rank - 1];
  const std::size_t ib = sb[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t base_a = 0;
  std::size_t base_b = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) fn(o + j, base_a + j * ia, base_b + j * ib);
    // advance the outer multi-index
    for (std::size_t k = rank - 1; k-- > 0;) {
      ++idx[k];
      base_a += sa[k];
      base_b += sb[k];
      if (idx[k] < out[k]) break;
      base_a -= sa[k] * out[k];
      base_b -= sb[k] * out[k];
      idx[k] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul };

Var binary(Var a, Var b, BinaryKind kind, std::string_view name) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(av.shape(), bv.shape());
  Tensor out(out_shape);
  auto o = out.data();
  auto x = av.data();
  auto y = bv.data();

  const bool same = av.shape() == bv.shape();
  const auto sa = broadcast_strides(av.shape(), out_shape);
  const auto sb = broadcast_strides(bv.shape(), out_shape);

  switch (kind) {
    case BinaryKind::add:
      if (same) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
      } else {
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t p, std::size_t q) { o[i] = x[p] + y[q]; });
      }
      break;
    case BinaryKind::sub:
      if (same) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
      } else {
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t p, std::size_t q) { o[i] = x[p] - y[q]; });
      }
      break;
    case BinaryKind::mul:
      if (same) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
      } else {
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t p, std::size_t q) { o[i] = x[p] * y[q]; });
      }
      break;
  }

  auto backward = [kind, same, sa, sb, out_shape](const BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto x = ctx.input(0).data();
    auto y = ctx.input(1).data();
    std::vector<double>* ga = ctx.input_grad(0);
    std::vector<double>* gb = ctx.input_grad(1);
    const double sign_b = kind == BinaryKind::sub ? -1.0 : 1.0;
    if (same) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (kind == BinaryKind::mul) {
          if (ga) (*ga)[i] += g[i] * y[i];
          if (gb) (*gb)[i] += g[i] * x[i];
        } else {
          if (ga) (*ga)[i] += g[i];
          if (gb) (*gb)[i] += sign_b * g[i];
        }
      }
      return;
    }
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t p, std::size_t q) {
      if (kind == BinaryKind::mul) {
        if (ga) (*ga)[p] += g[i] * y[q];
        if (gb) (*gb)[q] += g[i] * x[p];
      } else {
        if (ga) (*ga)[p] += g[i];
        if (gb) (*gb)[q] += sign_b * g[i];
      }
    });
  };
  return tape.record(std::move(out), {a, b}, std::move(backward), name);
}

template <typename Fwd, typename Deriv>
Var unary(Var a, std::string_view name, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  auto o = out.data();
  auto x = av.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i]);
  auto backward = [deriv](const BackwardContext& ctx) {
    auto* ga = ctx.input_grad(0);
    if (!ga) return;
    auto g = ctx.output_grad();
    auto x = ctx.input(0).data();
    auto y = ctx.output().data();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * deriv(x[i], y[i]);
  };
  return a.tape().record(std::move(out), {a}, std::move(backward), name);
}

// Splits a shape around `axis` into (outer, axis extent, inner) element counts.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 0;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t k = 0; k < axis; ++k) v.outer *= shape[k];
  v.extent = shape[axis];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) v.inner *= shape[k];
  return v;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ea = k < rank - a.size() ? 1 : a[k - (rank - a.size())];
    const std::size_t eb = k < rank - b.size() ? 1 : b[k - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[k] = ea == 1 ? eb : ea;
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw DimensionError("matmul shape mismatch: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.shape()[0];
  const std::size_t k = av.shape()[1];
  const std::size_t n = bv.shape()[1];
  Tensor out({m, n});
  const double* x = av.data().data();
  const double* y = bv.data().data();
  double* c = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = x[i * k + p];
      const double* brow = y + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  auto backward = [m, k, n](const BackwardContext& ctx) {
    const double* g = ctx.output_grad().data();
    const double* x = ctx.input(0).data().data();
    const double* y = ctx.input(1).data().data();
    if (auto* ga = ctx.input_grad(0)) {
      // dA = dC * B^T
      double* da = ga->data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = y + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          da[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = ctx.input_grad(1)) {
      // dB = A^T * dC
      double* db = gb->data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = x[i * k + p];
          double* drow = db + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
        }
      }
    }
  };
  return tape.record(std::move(out), {a, b}, std::move(backward), "matmul");
}

Var add(Var a, Var b) { return binary(a, b, BinaryKind::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinaryKind::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinaryKind::mul, "mul"); }

Var relu(Var a) {
  // subgradient 0 at 0
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sin(Var a) {
  return unary(
      a, "sin", [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(
      a, "cos", [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var sum(Var a) {
  const auto x = a.value().data();
  double total = 0.0;
  for (double v : x) total += v;
  auto backward = [](const BackwardContext& ctx) {
    auto* ga = ctx.input_grad(0);
    if (!ga) return;
    const double g = ctx.output_grad()[0];
    for (double& v : *ga) v += g;
  };
  return a.tape().record(Tensor::scalar(total), {a}, std::move(backward), "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DegenerateInputError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Tape& tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<AxisView> views;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k != axis && s[k] != first[k]) {
        throw DimensionError("concat extent mismatch: " + shape_str(first) + " vs " + shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
    views.push_back(axis_view(s, axis));
  }
  const AxisView ov = axis_view(out_shape, axis);
  const std::size_t out_row = ov.extent * ov.inner;
  Tensor out(out_shape);
  auto o = out.data();
  std::size_t col = 0;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    const auto x = parts[t].value().data();
    const std::size_t chunk = views[t].extent * views[t].inner;
    for (std::size_t r = 0; r < ov.outer; ++r) {
      std::copy_n(x.begin() + r * chunk, chunk, o.begin() + r * out_row + col);
    }
    col += chunk;
  }
  auto backward = [views, ov, out_row](const BackwardContext& ctx) {
    auto g = ctx.output_grad();
    std::size_t col = 0;
    for (std::size_t t = 0; t < views.size(); ++t) {
      const std::size_t chunk = views[t].extent * views[t].inner;
      if (auto* gt = ctx.input_grad(t)) {
        for (std::size_t r = 0; r < ov.outer; ++r) {
          for (std::size_t j = 0; j < chunk; ++j) (*gt)[r * chunk + j] += g[r * out_row + col + j];
        }
      }
      col += chunk;
    }
  };
  return tape.record(std::move(out), parts, std::move(backward), "concat");
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                         shape_str(s));
  }
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const AxisView v = axis_view(s, axis);
  const std::size_t in_row = v.extent * v.inner;
  const std::size_t chunk = (end - begin) * v.inner;
  const std::size_t offset = begin * v.inner;
  Tensor out(out_shape);
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < v.outer; ++r) {
    std::copy_n(x.begin() + r * in_row + offset, chunk, o.begin() + r * chunk);
  }
  auto backward = [v, in_row, chunk, offset](const BackwardContext& ctx) {
    auto* ga = ctx.input_grad(0);
    if (!ga) return;
    auto g = ctx.output_grad();
    for (std::size_t r = 0; r < v.outer; ++r) {
      for (std::size_t j = 0; j < chunk; ++j) (*ga)[r * in_row + offset + j] += g[r * chunk + j];
    }
  };
  return a.tape().record(std::move(out), {a}, std::move(backward), "slice");
}

Var mse(Var pred, Var target) {
  Tensor mask(pred.shape(), 1.0);
  return masked_mse(pred, target, mask);
}

Var masked_mse(Var pred, Var target, const Tensor& mask) {
  Tape& tape = same_tape(pred, target);
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse shape mismatch: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  if (mask.shape() != pred.shape()) {
    throw DimensionError("mse mask shape " + shape_str(mask.shape()) + " vs " + shape_str(pred.shape()));
  }
  if (tape.needs_grad(target)) throw ContractError("mse target must not require a gradient");
  auto p = pred.value().data();
  auto t = target.value().data();
  auto m = mask.data();
  std::size_t count = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (m[i] == 0.0) continue;
    const double d = p[i] - t[i];
    acc += d * d;
    ++count;
  }
  if (count == 0) throw DegenerateInputError("mse over an empty mask");
  const double inv = 1.0 / static_cast<double>(count);
  auto backward = [inv, m = std::vector<double>(m.begin(), m.end())](const BackwardContext& ctx) {
    auto* gp = ctx.input_grad(0);
    if (!gp) return;
    const double g = ctx.output_grad()[0];
    auto p = ctx.input(0).data();
    auto t = ctx.input(1).data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (m[i] != 0.0) (*gp)[i] += g * 2.0 * (p[i] - t[i]) * inv;
    }
  };
  return tape.record(Tensor::scalar(acc * inv), {pred, target}, std::move(backward), "mse");
}

}  // namespace nert
