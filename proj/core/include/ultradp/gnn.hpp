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
#include <string>
#include <utility>
#include <vector>

#include "ultradp/autodiff.hpp"
#include "ultradp/graph.hpp"

namespace ultradp {

enum class Backbone { kAttention, kConvolutional, kAggregate };
enum class Activation { kDefault, kElu, kRelu };

Backbone parse_backbone(std::string_view name);
std::string_view to_string(Backbone b);

struct GnnConfig {
  Backbone backbone = Backbone::kAttention;
  std::size_t num_layers = 3;
  std::size_t hidden_dim = 64;
  std::size_t heads = 8;
  /// kDefault resolves to ELU for attention, ReLU otherwise.
  Activation activation = Activation::kDefault;

  void validate() const;
  Activation resolved_activation() const;
};

struct GnnLayerParams {
  ad::Tensor weight;
  ad::Tensor bias;
  ad::Tensor att_src;  // attention only, [heads x head_width]
  ad::Tensor att_dst;  // attention only
  std::size_t heads = 1;
  bool concat_heads = false;
};

struct GnnParams {
  std::vector<GnnLayerParams> layers;

  /// Stable (name, tensor) listing, e.g. "gnn.0.weight".
  std::vector<std::pair<std::string, ad::Tensor*>> named_tensors();
};

/// Uniform initialization bounded by 1/sqrt(fan_in); biases start at zero.
GnnParams init_gnn_params(const GnnConfig& config, std::uint64_t seed);

/// Message-passing index sets derived once per graph structure.
struct MessageIndex {
  std::size_t num_nodes = 0;
  // Edges src -> dst including one self-connection per node, grouped by dst.
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::vector<Real> sym_norm;  // 1/sqrt(deg'(src) deg'(dst)), deg' = deg + 1
  // Neighbor-only edges (no self-connection) with 1/deg(dst) weights.
  std::vector<std::uint32_t> nbr_src;
  std::vector<std::uint32_t> nbr_dst;
  std::vector<Real> mean_weight;

  static MessageIndex build(const Graph& graph);
};

/// Attention coefficients recorded by forward(): one [E x heads] block per
/// attention layer, rows aligned with MessageIndex::src/dst.
struct ForwardTrace {
  std::vector<std::vector<Real>> attention;
};

/// L rounds of neighborhood aggregation over h0 ([n x hidden_dim]).
ad::Var gnn_forward(ad::Tape& tape, const MessageIndex& index, ad::Var h0, GnnParams& params,
                    const GnnConfig& config, ForwardTrace* trace = nullptr);

}  // namespace ultradp
