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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ultradp/common.hpp"
#include "ultradp/graph.hpp"

namespace ultradp::ad {

/// Every tensor is two-dimensional; scalars are 1x1 and vectors 1xn.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

/// Value tensor that lives outside any tape. Model parameters are Tensors;
/// backward() accumulates into their gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0, bool requires_grad = true);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = true);

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return values_.size(); }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  Real& operator()(std::size_t i, std::size_t j) { return values_[i * shape_.cols + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return values_[i * shape_.cols + j]; }

  /// Gradient buffer, materialized with zeros on first access.
  std::span<Real> grad();
  std::span<const Real> grad() const { return grad_; }
  bool has_grad() const { return !grad_.empty(); }
  void zero_grad();

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  /// Value equality (shape + bit-identical values); gradients ignored.
  bool operator==(const Tensor& other) const { return shape_ == other.shape_ && values_ == other.values_; }

 private:
  Shape shape_;
  std::vector<Real> values_;
  std::vector<Real> grad_;
  bool requires_grad_ = true;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::span<const Real> value() const;
  Real item() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Ordered record of executed primitives. Node ids are assigned in execution
/// order, so every node's inputs precede it and reverse iteration is a valid
/// topological order for backpropagation. Single-threaded.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::span<const Real> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf bound to a parameter tensor. If the tensor requires grad,
  /// backward() adds d(loss)/d(param) into param.grad().
  Var param(Tensor& tensor);
  Var constant(Shape shape, std::vector<Real> values);
  Var constant(const DenseMatrix& m);
  Var constant(const Tensor& t);
  Var scalar(Real value) { return constant({1, 1}, {value}); }

  /// Reverse sweep from a 1x1 loss. Throws ArgumentError for non-scalar loss.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(Var v) const { return nodes_[v.id()].op; }

  // --- used by primitive implementations ---
  const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
  std::span<const Real> value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  /// Gradient accumulator of a node (allocated on demand during backward).
  std::span<Real> grad(std::uint32_t id);

  Var record(std::string_view op, Shape shape, std::vector<Real> value, bool needs_grad, Backprop backprop);

 private:
  struct Node {
    std::string_view op;
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool needs_grad = false;
    Tensor* param = nullptr;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

// --- primitives ---------------------------------------------------------------
//
// Shapes must conform exactly (no implicit broadcasting) except where noted.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a[m x n] + bias[1 x n] broadcast over rows.
Var add_bias(Var a, Var bias);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, Real s);
Var add_scalar(Var a, Real s);
Var reshape(Var a, Shape shape);

Var softmax_rows(Var a);
Var log(Var a);
Var exp(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, Real negative_slope = 0.2);
Var elu(Var a, Real alpha = 1.0);
/// max(x, 0) elementwise.
Var relu(Var a);
Var square(Var a);

/// Sum / mean of all entries -> 1x1.
Var sum(Var a);
Var mean(Var a);
/// Row sums -> [m x 1].
Var row_sum(Var a);

/// Euclidean norm of every row -> [m x 1].
Var l2_norm_rows(Var a);
/// Every row divided by its norm. Zero rows raise DomainError.
Var normalize_rows(Var a);
/// Row-wise cosine similarity of equally shaped a, b -> [m x 1].
Var cosine_similarity(Var a, Var b);
/// Numerically stable log(sum(exp(row))) per row -> [m x 1].
Var log_sum_exp_rows(Var a);

Var gather_rows(Var a, std::span<const std::uint32_t> index);
/// out[index[e]] += a[e]; result has `out_rows` rows.
Var scatter_add_rows(Var a, std::span<const std::uint32_t> index, std::size_t out_rows);
Var concat_rows(Var top, Var bottom);
Var concat_cols(Var left, Var right);
/// Row i scaled by the constant weights[i].
Var scale_rows(Var a, std::span<const Real> weights);
/// out[dst[e]] += weights[e] * a[src[e]]; fused gather/scale/scatter.
Var edge_aggregate(Var a, std::span<const std::uint32_t> src, std::span<const std::uint32_t> dst,
                   std::span<const Real> weights, std::size_t out_rows);

// Multi-head helpers; columns are grouped as `heads` contiguous blocks.

/// z[n x H*F], att[H x F] -> [n x H] with out(i,h) = <z(i, block h), att(h)>.
Var head_dot(Var z, Var att);
/// m[E x H*F], coef[E x H] -> block h of row e scaled by coef(e,h).
Var head_scale(Var m, Var coef);
/// z[n x H*F] -> [n x F], average of the H blocks.
Var head_mean(Var z, std::size_t heads);
/// z[n x H*F], coef[E x H]: out[dst[e], block h] += coef(e,h) * z[src[e], block h].
Var head_aggregate(Var z, Var coef, std::span<const std::uint32_t> src, std::span<const std::uint32_t> dst,
                   std::size_t out_rows);
/// Softmax over the rows sharing a segment id, independently per column.
Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t num_segments);

// --- gradient checking -----------------------------------------------------

/// f maps a leaf built from `point` to a 1x1 loss.
using ScalarFunction = std::function<Var(Tape&, Var)>;

/// Worst relative error between reverse-mode and central-difference
/// gradients, |a - b| / max(|a|, |b|, 1e-8). Throws DomainError when a
/// function value is not finite.
Real grad_check(const ScalarFunction& f, const Tensor& point, Real h = 1e-5);

}  // namespace ultradp::ad
