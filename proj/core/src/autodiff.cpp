// Copyright 2026 The UltraDP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ultradp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <Eigen/Core>

namespace ultradp::ad {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(std::span<const Real> v, Shape s) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}
MutMap as_matrix(std::span<Real> v, Shape s) {
  return MutMap(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ArgumentError("operands recorded on different tapes");
}

void require_shape(bool ok, std::string_view op, Shape a, Shape b) {
  if (!ok) throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs) {
    if (t.needs_grad(v.id())) return true;
  }
  return false;
}

/// Elementwise unary op given f(x) and f'(x, y).
template <typename F, typename DF>
Var unary(Var a, std::string_view name, F f, DF df) {
  Tape& t = a.tape();
  const auto in = a.value();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const auto id = a.id();
  const bool g = t.needs_grad(id);
  return t.record(name, a.shape(), std::move(out), g,
                  g ? Tape::Backprop([id, df](Tape& tp, std::span<const Real> og) {
                        const auto x = tp.value(id);
                        auto gx = tp.grad(id);
                        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += og[i] * df(x[i]);
                      })
                    : Tape::Backprop{});
}

}  // namespace

std::string to_string(Shape s) { return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]"; }

// --- Tensor ---------------------------------------------------------------------

Tensor::Tensor(Shape shape, Real fill, bool requires_grad)
    : shape_(shape), values_(shape.size(), fill), requires_grad_(requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad)
    : shape_(shape), values_(std::move(values)), requires_grad_(requires_grad) {
  if (values_.size() != shape_.size()) {
    throw DimensionError("Tensor: " + std::to_string(values_.size()) + " values for shape " + to_string(shape_));
  }
}

std::span<Real> Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

// --- Var / Tape -------------------------------------------------------------

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const Real> Var::value() const { return tape_->value(id_); }
Real Var::item() const {
  if (shape().size() != 1) throw ArgumentError("item() on non-scalar " + to_string(shape()));
  return value()[0];
}

Var Tape::record(std::string_view op, Shape shape, std::vector<Real> value, bool needs_grad, Backprop backprop) {
  Node node;
  node.op = op;
  node.shape = shape;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::param(Tensor& tensor) {
  std::vector<Real> v(tensor.values().begin(), tensor.values().end());
  Var out = record("param", tensor.shape(), std::move(v), tensor.requires_grad(), {});
  nodes_.back().param = &tensor;
  return out;
}

Var Tape::constant(Shape shape, std::vector<Real> values) {
  if (values.size() != shape.size()) throw DimensionError("constant: value count mismatch for " + to_string(shape));
  return record("constant", shape, std::move(values), false, {});
}

Var Tape::constant(const DenseMatrix& m) { return constant({m.rows, m.cols}, m.data); }

Var Tape::constant(const Tensor& t) {
  return constant(t.shape(), std::vector<Real>(t.values().begin(), t.values().end()));
}

std::span<Real> Tape::grad(std::uint32_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ArgumentError("backward: loss belongs to another tape");
  if (loss.shape() != Shape{1, 1}) throw ArgumentError("backward: loss must be scalar, got " + to_string(loss.shape()));
  for (auto& n : nodes_) n.grad.clear();
  grad(loss.id())[0] = 1.0;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.backprop) {
      // Inputs always have smaller ids, so this buffer is not resized below.
      node.backprop(*this, node.grad);
    }
    if (node.param != nullptr) {
      auto pg = node.param->grad();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += node.grad[k];
    }
  }
}

// --- primitives -------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
  Tape& t = a.tape();
  const Shape out_shape{a.rows(), b.cols()};
  std::vector<Real> out(out_shape.size());
  as_matrix(std::span<Real>(out), out_shape).noalias() = as_matrix(a.value(), a.shape()) * as_matrix(b.value(), b.shape());
  const auto ia = a.id(), ib = b.id();
  const bool g = any_grad(t, {a, b});
  return t.record("matmul", out_shape, std::move(out), g, [ia, ib, out_shape](Tape& tp, std::span<const Real> og) {
    const auto G = as_matrix(og, out_shape);
    if (tp.needs_grad(ia)) {
      as_matrix(tp.grad(ia), tp.shape(ia)).noalias() += G * as_matrix(tp.value(ib), tp.shape(ib)).transpose();
    }
    if (tp.needs_grad(ib)) {
      as_matrix(tp.grad(ib), tp.shape(ib)).noalias() += as_matrix(tp.value(ia), tp.shape(ia)).transpose() * G;
    }
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  const Shape s{a.cols(), a.rows()};
  std::vector<Real> out(s.size());
  as_matrix(std::span<Real>(out), s) = as_matrix(a.value(), a.shape()).transpose();
  const auto ia = a.id();
  return t.record("transpose", s, std::move(out), t.needs_grad(ia), [ia, s](Tape& tp, std::span<const Real> og) {
    as_matrix(tp.grad(ia), tp.shape(ia)) += as_matrix(og, s).transpose();
  });
}

namespace {

Var binary_same_shape(Var a, Var b, std::string_view name, Real sign_b) {
  require_same_tape(a, b);
  require_shape(a.shape() == b.shape(), name, a.shape(), b.shape());
  Tape& t = a.tape();
  const auto va = a.value(), vb = b.value();
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + sign_b * vb[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(name, a.shape(), std::move(out), any_grad(t, {a, b}),
                  [ia, ib, sign_b](Tape& tp, std::span<const Real> og) {
                    if (tp.needs_grad(ia)) {
                      auto g = tp.grad(ia);
                      for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
                    }
                    if (tp.needs_grad(ib)) {
                      auto g = tp.grad(ib);
                      for (std::size_t i = 0; i < og.size(); ++i) g[i] += sign_b * og[i];
                    }
                  });
}

}  // namespace

Var add(Var a, Var b) { return binary_same_shape(a, b, "add", 1.0); }
Var sub(Var a, Var b) { return binary_same_shape(a, b, "sub", -1.0); }

Var add_bias(Var a, Var bias) {
  require_same_tape(a, bias);
  require_shape(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias", a.shape(), bias.shape());
  Tape& t = a.tape();
  const auto va = a.value(), vb = bias.value();
  const std::size_t n = a.cols();
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i % n];
  const auto ia = a.id(), ib = bias.id();
  return t.record("add_bias", a.shape(), std::move(out), any_grad(t, {a, bias}),
                  [ia, ib, n](Tape& tp, std::span<const Real> og) {
                    if (tp.needs_grad(ia)) {
                      auto g = tp.grad(ia);
                      for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
                    }
                    if (tp.needs_grad(ib)) {
                      auto g = tp.grad(ib);
                      for (std::size_t i = 0; i < og.size(); ++i) g[i % n] += og[i];
                    }
                  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  Tape& t = a.tape();
  const auto va = a.value(), vb = b.value();
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  const auto ia = a.id(), ib = b.id();
  return t.record("mul", a.shape(), std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::span<const Real> og) {
    if (tp.needs_grad(ia)) {
      auto g = tp.grad(ia);
      const auto vb = tp.value(ib);
      for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * vb[i];
    }
    if (tp.needs_grad(ib)) {
      auto g = tp.grad(ib);
      const auto va = tp.value(ia);
      for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * va[i];
    }
  });
}

Var scale(Var a, Real s) {
  return unary(a, "scale", [s](Real x) { return s * x; }, [s](Real) { return s; });
}

Var add_scalar(Var a, Real s) {
  return unary(a, "add_scalar", [s](Real x) { return x + s; }, [](Real) { return 1.0; });
}

Var reshape(Var a, Shape shape) {
  if (shape.size() != a.shape().size()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  Tape& t = a.tape();
  std::vector<Real> out(a.value().begin(), a.value().end());
  const auto ia = a.id();
  return t.record("reshape", shape, std::move(out), t.needs_grad(ia), [ia](Tape& tp, std::span<const Real> og) {
    auto g = tp.grad(ia);
    for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
  });
}

Var softmax_rows(Var a) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  const auto in = a.value();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < m; ++i) {
    const Real* x = in.data() + i * n;
    Real* y = out.data() + i * n;
    const Real mx = *std::max_element(x, x + n);
    Real z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  const auto ia = a.id();
  std::vector<Real> y_copy = out;
  return t.record("softmax_rows", a.shape(), std::move(out), t.needs_grad(ia),
                  [ia, m = m, n = n, y = std::move(y_copy)](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    for (std::size_t i = 0; i < m; ++i) {
                      Real dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j) dot += og[i * n + j] * y[i * n + j];
                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (og[i * n + j] - dot);
                    }
                  });
}

Var log(Var a) {
  for (Real x : a.value()) {
    if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
  }
  return unary(a, "log", [](Real x) { return std::log(x); }, [](Real x) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, "exp", [](Real x) { return std::exp(x); }, [](Real x) { return std::exp(x); });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](Real x) { return std::tanh(x); },
               [](Real x) {
                 const Real y = std::tanh(x);
                 return 1.0 - y * y;
               });
}

// Kinks take the right-hand derivative: d/dx at exactly 0 uses the x > 0 branch.
Var leaky_relu(Var a, Real negative_slope) {
  return unary(a, "leaky_relu", [negative_slope](Real x) { return x >= 0.0 ? x : negative_slope * x; },
               [negative_slope](Real x) { return x >= 0.0 ? 1.0 : negative_slope; });
}

Var elu(Var a, Real alpha) {
  return unary(a, "elu", [alpha](Real x) { return x >= 0.0 ? x : alpha * std::expm1(x); },
               [alpha](Real x) { return x >= 0.0 ? 1.0 : alpha * std::exp(x); });
}

Var relu(Var a) {
  return unary(a, "relu", [](Real x) { return x >= 0.0 ? x : 0.0; }, [](Real x) { return x >= 0.0 ? 1.0 : 0.0; });
}

Var square(Var a) {
  return unary(a, "square", [](Real x) { return x * x; }, [](Real x) { return 2.0 * x; });
}

Var sum(Var a) {
  Tape& t = a.tape();
  Real s = 0.0;
  for (Real x : a.value()) s += x;
  const auto ia = a.id();
  return t.record("sum", {1, 1}, {s}, t.needs_grad(ia), [ia](Tape& tp, std::span<const Real> og) {
    for (auto& g : tp.grad(ia)) g += og[0];
  });
}

Var mean(Var a) {
  const auto n = a.shape().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<Real>(n));
}

Var row_sum(Var a) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  const auto in = a.value();
  std::vector<Real> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += in[i * n + j];
  }
  const auto ia = a.id();
  return t.record("row_sum", {m, 1}, std::move(out), t.needs_grad(ia), [ia, n = n](Tape& tp, std::span<const Real> og) {
    auto g = tp.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += og[k / n];
  });
}

Var l2_norm_rows(Var a) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  const auto in = a.value();
  std::vector<Real> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    Real s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += in[i * n + j] * in[i * n + j];
    out[i] = std::sqrt(s);
  }
  const auto ia = a.id();
  std::vector<Real> norms = out;
  return t.record("l2_norm_rows", {m, 1}, std::move(out), t.needs_grad(ia),
                  [ia, n = n, norms = std::move(norms)](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    const auto x = tp.value(ia);
                    for (std::size_t i = 0; i < norms.size(); ++i) {
                      if (norms[i] == 0.0) throw DomainError("gradient of a zero-norm row");
                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += og[i] * x[i * n + j] / norms[i];
                    }
                  });
}

Var normalize_rows(Var a) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  const auto in = a.value();
  std::vector<Real> norms(m, 0.0);
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < m; ++i) {
    Real s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += in[i * n + j] * in[i * n + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw DomainError("normalize_rows: zero-norm row " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = in[i * n + j] / norms[i];
  }
  const auto ia = a.id();
  std::vector<Real> y = out;
  return t.record("normalize_rows", a.shape(), std::move(out), t.needs_grad(ia),
                  [ia, n = n, norms = std::move(norms), y = std::move(y)](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    for (std::size_t i = 0; i < norms.size(); ++i) {
                      Real dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j) dot += og[i * n + j] * y[i * n + j];
                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (og[i * n + j] - dot * y[i * n + j]) / norms[i];
                    }
                  });
}

Var cosine_similarity(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.shape() == b.shape(), "cosine_similarity", a.shape(), b.shape());
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  const auto va = a.value(), vb = b.value();
  std::vector<Real> na(m), nb(m), out(m);
  for (std::size_t i = 0; i < m; ++i) {
    Real saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const Real x = va[i * n + j], y = vb[i * n + j];
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
    na[i] = std::sqrt(saa);
    nb[i] = std::sqrt(sbb);
    if (na[i] == 0.0 || nb[i] == 0.0) throw DomainError("cosine_similarity: zero-norm representation in row " + std::to_string(i));
    out[i] = sab / (na[i] * nb[i]);
  }
  const auto ia = a.id(), ib = b.id();
  std::vector<Real> s = out;
  return t.record(
      "cosine_similarity", {m, 1}, std::move(out), any_grad(t, {a, b}),
      [ia, ib, n = n, na = std::move(na), nb = std::move(nb), s = std::move(s)](Tape& tp, std::span<const Real> og) {
        const auto va = tp.value(ia), vb = tp.value(ib);
        // dS/da = b / (|a||b|) - S a / |a|^2
        if (tp.needs_grad(ia)) {
          auto g = tp.grad(ia);
          for (std::size_t i = 0; i < s.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const auto k = i * n + j;
              g[k] += og[i] * (vb[k] / (na[i] * nb[i]) - s[i] * va[k] / (na[i] * na[i]));
            }
          }
        }
        if (tp.needs_grad(ib)) {
          auto g = tp.grad(ib);
          for (std::size_t i = 0; i < s.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const auto k = i * n + j;
              g[k] += og[i] * (va[k] / (na[i] * nb[i]) - s[i] * vb[k] / (nb[i] * nb[i]));
            }
          }
        }
      });
}

Var log_sum_exp_rows(Var a) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  if (n == 0) throw DimensionError("log_sum_exp_rows over zero columns");
  const auto in = a.value();
  std::vector<Real> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* x = in.data() + i * n;
    const Real mx = *std::max_element(x, x + n);
    Real z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    out[i] = mx + std::log(z);
  }
  const auto ia = a.id();
  std::vector<Real> lse = out;
  return t.record("log_sum_exp_rows", {m, 1}, std::move(out), t.needs_grad(ia),
                  [ia, n = n, lse = std::move(lse)](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    const auto x = tp.value(ia);
                    for (std::size_t i = 0; i < lse.size(); ++i) {
                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += og[i] * std::exp(x[i * n + j] - lse[i]);
                    }
                  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> index) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  const auto in = a.value();
  std::vector<Real> out(index.size() * n);
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= m) throw ArgumentError("gather_rows: index " + std::to_string(index[e]) + " >= " + std::to_string(m));
    std::copy_n(in.data() + index[e] * n, n, out.data() + e * n);
  }
  const auto ia = a.id();
  return t.record("gather_rows", {index.size(), n}, std::move(out), t.needs_grad(ia),
                  [ia, n = n, idx = std::vector<std::uint32_t>(index.begin(), index.end())](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    for (std::size_t e = 0; e < idx.size(); ++e) {
                      Real* dst = g.data() + idx[e] * n;
                      const Real* src = og.data() + e * n;
                      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                    }
                  });
}

Var scatter_add_rows(Var a, std::span<const std::uint32_t> index, std::size_t out_rows) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  if (index.size() != m) throw DimensionError("scatter_add_rows: index length != row count");
  const auto in = a.value();
  std::vector<Real> out(out_rows * n, 0.0);
  for (std::size_t e = 0; e < m; ++e) {
    if (index[e] >= out_rows) throw ArgumentError("scatter_add_rows: index out of range");
    Real* dst = out.data() + index[e] * n;
    const Real* src = in.data() + e * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
  }
  const auto ia = a.id();
  return t.record("scatter_add_rows", {out_rows, n}, std::move(out), t.needs_grad(ia),
                  [ia, n = n, idx = std::vector<std::uint32_t>(index.begin(), index.end())](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    for (std::size_t e = 0; e < idx.size(); ++e) {
                      const Real* src = og.data() + idx[e] * n;
                      Real* dst = g.data() + e * n;
                      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                    }
                  });
}

Var edge_aggregate(Var a, std::span<const std::uint32_t> src, std::span<const std::uint32_t> dst,
                   std::span<const Real> weights, std::size_t out_rows) {
  Tape& t = a.tape();
  const std::size_t n = a.cols(), edges = src.size();
  if (dst.size() != edges || weights.size() != edges) throw DimensionError("edge_aggregate: index/weight length mismatch");
  const auto in = a.value();
  std::vector<Real> out(out_rows * n, 0.0);
  for (std::size_t e = 0; e < edges; ++e) {
    if (src[e] >= a.rows() || dst[e] >= out_rows) throw ArgumentError("edge_aggregate: index out of range");
    const Real w = weights[e];
    const Real* from = in.data() + src[e] * n;
    Real* to = out.data() + dst[e] * n;
    for (std::size_t j = 0; j < n; ++j) to[j] += w * from[j];
  }
  const auto ia = a.id();
  return t.record("edge_aggregate", {out_rows, n}, std::move(out), t.needs_grad(ia),
                  [ia, n, s = std::vector<std::uint32_t>(src.begin(), src.end()),
                   d = std::vector<std::uint32_t>(dst.begin(), dst.end()),
                   w = std::vector<Real>(weights.begin(), weights.end())](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    for (std::size_t e = 0; e < s.size(); ++e) {
                      const Real* from = og.data() + d[e] * n;
                      Real* to = g.data() + s[e] * n;
                      for (std::size_t j = 0; j < n; ++j) to[j] += w[e] * from[j];
                    }
                  });
}

Var concat_rows(Var top, Var bottom) {
  require_same_tape(top, bottom);
  require_shape(top.cols() == bottom.cols(), "concat_rows", top.shape(), bottom.shape());
  Tape& t = top.tape();
  std::vector<Real> out(top.value().begin(), top.value().end());
  out.insert(out.end(), bottom.value().begin(), bottom.value().end());
  const auto it = top.id(), ib = bottom.id();
  const auto split = top.shape().size();
  return t.record("concat_rows", {top.rows() + bottom.rows(), top.cols()}, std::move(out), any_grad(t, {top, bottom}),
                  [it, ib, split](Tape& tp, std::span<const Real> og) {
                    if (tp.needs_grad(it)) {
                      auto g = tp.grad(it);
                      for (std::size_t k = 0; k < split; ++k) g[k] += og[k];
                    }
                    if (tp.needs_grad(ib)) {
                      auto g = tp.grad(ib);
                      for (std::size_t k = 0; k < g.size(); ++k) g[k] += og[split + k];
                    }
                  });
}

Var concat_cols(Var left, Var right) {
  require_same_tape(left, right);
  require_shape(left.rows() == right.rows(), "concat_cols", left.shape(), right.shape());
  Tape& t = left.tape();
  const std::size_t m = left.rows(), nl = left.cols(), nr = right.cols(), n = nl + nr;
  std::vector<Real> out(m * n);
  const auto vl = left.value(), vr = right.value();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(vl.data() + i * nl, nl, out.data() + i * n);
    std::copy_n(vr.data() + i * nr, nr, out.data() + i * n + nl);
  }
  const auto il = left.id(), ir = right.id();
  return t.record("concat_cols", {m, n}, std::move(out), any_grad(t, {left, right}),
                  [il, ir, m, nl, nr, n](Tape& tp, std::span<const Real> og) {
                    if (tp.needs_grad(il)) {
                      auto g = tp.grad(il);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < nl; ++j) g[i * nl + j] += og[i * n + j];
                    }
                    if (tp.needs_grad(ir)) {
                      auto g = tp.grad(ir);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < nr; ++j) g[i * nr + j] += og[i * n + nl + j];
                    }
                  });
}

Var scale_rows(Var a, std::span<const Real> weights) {
  Tape& t = a.tape();
  const auto [m, n] = a.shape();
  if (weights.size() != m) throw DimensionError("scale_rows: weight count != row count");
  const auto in = a.value();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = weights[i] * in[i * n + j];
  const auto ia = a.id();
  return t.record("scale_rows", a.shape(), std::move(out), t.needs_grad(ia),
                  [ia, n = n, w = std::vector<Real>(weights.begin(), weights.end())](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(ia);
                    for (std::size_t i = 0; i < w.size(); ++i)
                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += w[i] * og[i * n + j];
                  });
}

Var head_dot(Var z, Var att) {
  require_same_tape(z, att);
  const std::size_t heads = att.rows(), width = att.cols();
  require_shape(z.cols() == heads * width, "head_dot", z.shape(), att.shape());
  Tape& t = z.tape();
  const std::size_t m = z.rows();
  const auto vz = z.value(), va = att.value();
  std::vector<Real> out(m * heads, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      Real s = 0.0;
      for (std::size_t f = 0; f < width; ++f) s += vz[i * heads * width + h * width + f] * va[h * width + f];
      out[i * heads + h] = s;
    }
  const auto iz = z.id(), ia = att.id();
  return t.record("head_dot", {m, heads}, std::move(out), any_grad(t, {z, att}),
                  [iz, ia, m, heads, width](Tape& tp, std::span<const Real> og) {
                    const auto vz = tp.value(iz), va = tp.value(ia);
                    const std::size_t hw = heads * width;
                    if (tp.needs_grad(iz)) {
                      auto g = tp.grad(iz);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t h = 0; h < heads; ++h)
                          for (std::size_t f = 0; f < width; ++f) g[i * hw + h * width + f] += og[i * heads + h] * va[h * width + f];
                    }
                    if (tp.needs_grad(ia)) {
                      auto g = tp.grad(ia);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t h = 0; h < heads; ++h)
                          for (std::size_t f = 0; f < width; ++f) g[h * width + f] += og[i * heads + h] * vz[i * hw + h * width + f];
                    }
                  });
}

Var head_scale(Var m, Var coef) {
  require_same_tape(m, coef);
  const std::size_t rows = m.rows(), heads = coef.cols();
  require_shape(coef.rows() == rows && heads > 0 && m.cols() % heads == 0, "head_scale", m.shape(), coef.shape());
  const std::size_t width = m.cols() / heads, hw = m.cols();
  Tape& t = m.tape();
  const auto vm = m.value(), vc = coef.value();
  std::vector<Real> out(vm.size());
  for (std::size_t e = 0; e < rows; ++e)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t f = 0; f < width; ++f) out[e * hw + h * width + f] = vc[e * heads + h] * vm[e * hw + h * width + f];
  const auto im = m.id(), ic = coef.id();
  return t.record("head_scale", m.shape(), std::move(out), any_grad(t, {m, coef}),
                  [im, ic, rows, heads, width, hw](Tape& tp, std::span<const Real> og) {
                    const auto vm = tp.value(im), vc = tp.value(ic);
                    if (tp.needs_grad(im)) {
                      auto g = tp.grad(im);
                      for (std::size_t e = 0; e < rows; ++e)
                        for (std::size_t h = 0; h < heads; ++h)
                          for (std::size_t f = 0; f < width; ++f) g[e * hw + h * width + f] += vc[e * heads + h] * og[e * hw + h * width + f];
                    }
                    if (tp.needs_grad(ic)) {
                      auto g = tp.grad(ic);
                      for (std::size_t e = 0; e < rows; ++e)
                        for (std::size_t h = 0; h < heads; ++h) {
                          Real s = 0.0;
                          for (std::size_t f = 0; f < width; ++f) s += og[e * hw + h * width + f] * vm[e * hw + h * width + f];
                          g[e * heads + h] += s;
                        }
                    }
                  });
}

Var head_aggregate(Var z, Var coef, std::span<const std::uint32_t> src, std::span<const std::uint32_t> dst,
                   std::size_t out_rows) {
  require_same_tape(z, coef);
  const std::size_t edges = coef.rows(), heads = coef.cols();
  require_shape(heads > 0 && z.cols() % heads == 0, "head_aggregate", z.shape(), coef.shape());
  if (src.size() != edges || dst.size() != edges) throw DimensionError("head_aggregate: index length != coefficient rows");
  const std::size_t width = z.cols() / heads, hw = z.cols();
  for (std::size_t e = 0; e < edges; ++e) {
    if (src[e] >= z.rows() || dst[e] >= out_rows) throw ArgumentError("head_aggregate: index out of range");
  }
  Tape& t = z.tape();
  const auto vz = z.value(), vc = coef.value();
  std::vector<Real> out(out_rows * hw, 0.0);
  for (std::size_t e = 0; e < edges; ++e) {
    const Real* zs = vz.data() + src[e] * hw;
    Real* o = out.data() + dst[e] * hw;
    for (std::size_t h = 0; h < heads; ++h) {
      const Real c = vc[e * heads + h];
      for (std::size_t f = 0; f < width; ++f) o[h * width + f] += c * zs[h * width + f];
    }
  }
  const auto iz = z.id(), ic = coef.id();
  return t.record("head_aggregate", {out_rows, hw}, std::move(out), any_grad(t, {z, coef}),
                  [iz, ic, heads, width, hw, s = std::vector<std::uint32_t>(src.begin(), src.end()),
                   d = std::vector<std::uint32_t>(dst.begin(), dst.end())](Tape& tp, std::span<const Real> og) {
                    const auto vz = tp.value(iz), vc = tp.value(ic);
                    const bool gz = tp.needs_grad(iz), gc = tp.needs_grad(ic);
                    std::span<Real> dz = gz ? tp.grad(iz) : std::span<Real>();
                    std::span<Real> dc = gc ? tp.grad(ic) : std::span<Real>();
                    for (std::size_t e = 0; e < s.size(); ++e) {
                      const Real* go = og.data() + d[e] * hw;
                      for (std::size_t h = 0; h < heads; ++h) {
                        if (gz) {
                          const Real c = vc[e * heads + h];
                          Real* g = dz.data() + s[e] * hw + h * width;
                          for (std::size_t f = 0; f < width; ++f) g[f] += c * go[h * width + f];
                        }
                        if (gc) {
                          const Real* zs = vz.data() + s[e] * hw + h * width;
                          Real acc = 0.0;
                          for (std::size_t f = 0; f < width; ++f) acc += zs[f] * go[h * width + f];
                          dc[e * heads + h] += acc;
                        }
                      }
                    }
                  });
}

Var head_mean(Var z, std::size_t heads) {
  if (heads == 0 || z.cols() % heads != 0) throw DimensionError("head_mean: width not divisible by head count");
  Tape& t = z.tape();
  const std::size_t m = z.rows(), width = z.cols() / heads, hw = z.cols();
  const auto vz = z.value();
  std::vector<Real> out(m * width, 0.0);
  const Real inv = 1.0 / static_cast<Real>(heads);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t f = 0; f < width; ++f) out[i * width + f] += inv * vz[i * hw + h * width + f];
  const auto iz = z.id();
  return t.record("head_mean", {m, width}, std::move(out), t.needs_grad(iz),
                  [iz, m, heads, width, hw, inv](Tape& tp, std::span<const Real> og) {
                    auto g = tp.grad(iz);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t f = 0; f < width; ++f) g[i * hw + h * width + f] += inv * og[i * width + f];
                  });
}

Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t num_segments) {
  Tape& t = scores.tape();
  const auto [rows, cols] = scores.shape();
  if (segment.size() != rows) throw DimensionError("segment_softmax: segment length != row count");
  const auto in = scores.value();
  std::vector<Real> mx(num_segments * cols, -std::numeric_limits<Real>::infinity());
  for (std::size_t e = 0; e < rows; ++e) {
    if (segment[e] >= num_segments) throw ArgumentError("segment_softmax: segment id out of range");
    for (std::size_t c = 0; c < cols; ++c) mx[segment[e] * cols + c] = std::max(mx[segment[e] * cols + c], in[e * cols + c]);
  }
  std::vector<Real> out(in.size());
  std::vector<Real> z(num_segments * cols, 0.0);
  for (std::size_t e = 0; e < rows; ++e)
    for (std::size_t c = 0; c < cols; ++c) {
      out[e * cols + c] = std::exp(in[e * cols + c] - mx[segment[e] * cols + c]);
      z[segment[e] * cols + c] += out[e * cols + c];
    }
  for (std::size_t e = 0; e < rows; ++e)
    for (std::size_t c = 0; c < cols; ++c) out[e * cols + c] /= z[segment[e] * cols + c];
  const auto is = scores.id();
  std::vector<Real> y = out;
  return t.record("segment_softmax", scores.shape(), std::move(out), t.needs_grad(is),
                  [is, cols = cols, num_segments, seg = std::vector<std::uint32_t>(segment.begin(), segment.end()),
                   y = std::move(y)](Tape& tp, std::span<const Real> og) {
                    std::vector<Real> dot(num_segments * cols, 0.0);
                    for (std::size_t e = 0; e < seg.size(); ++e)
                      for (std::size_t c = 0; c < cols; ++c) dot[seg[e] * cols + c] += og[e * cols + c] * y[e * cols + c];
                    auto g = tp.grad(is);
                    for (std::size_t e = 0; e < seg.size(); ++e)
                      for (std::size_t c = 0; c < cols; ++c)
                        g[e * cols + c] += y[e * cols + c] * (og[e * cols + c] - dot[seg[e] * cols + c]);
                  });
}

// --- gradient check ---------------------------------------------------------

Real grad_check(const ScalarFunction& f, const Tensor& point, Real h) {
  Tensor x = point;
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    Var loss = f(tape, tape.param(x));
    if (!std::isfinite(loss.item())) throw DomainError("grad_check: non-finite function value");
    tape.backward(loss);
  }
  const std::vector<Real> analytic(x.grad().begin(), x.grad().end());

  auto eval = [&](const Tensor& at) {
    Tensor copy = at;
    copy.set_requires_grad(false);
    Tape tape;
    const Real v = f(tape, tape.param(copy)).item();
    if (!std::isfinite(v)) throw DomainError("grad_check: non-finite function value");
    return v;
  };

  Real worst = 0.0;
  Tensor probe = point;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const Real orig = probe.values()[k];
    probe.values()[k] = orig + h;
    const Real fp = eval(probe);
    probe.values()[k] = orig - h;
    const Real fm = eval(probe);
    probe.values()[k] = orig;
    const Real numeric = (fp - fm) / (2.0 * h);
    const Real denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace ultradp::ad
