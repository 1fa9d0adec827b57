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
#include <span>

#include "ultradp/autodiff.hpp"
#include "ultradp/gnn.hpp"
#include "ultradp/graph.hpp"
#include "ultradp/optimizer.hpp"
#include "ultradp/prompt.hpp"
#include "ultradp/reachability.hpp"

namespace ultradp {

/// Everything needed to rebuild a model's parameter shapes.
struct ModelSpec {
  GnnConfig gnn;
  std::size_t feature_dim = 0;
  std::size_t num_tasks = 1;
  std::size_t num_anchors = 1;
  Real w_pos = 0.1;
  /// When false no prompt nodes are attached and only the normal alignment
  /// map is used (ablation).
  bool use_prompts = true;
};

/// GNN weights plus prompt parameters.
struct Model {
  ModelSpec spec;
  GnnParams gnn;
  PromptParams prompt;

  NamedTensors named_tensors();
};

Model init_model(const ModelSpec& spec, std::uint64_t seed);

/// Differentiable encoder over `graph` (a subgraph of the cached graph when
/// `original_ids` is given). Each node in `prompt_targets` gets a prompt node
/// carrying task_row + w_pos * position embedding; the alignment maps and the
/// GNN then run on the augmented graph. Returns [n + |prompt_targets| x d_h];
/// the first n rows belong to the input nodes.
ad::Var encode(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const Graph& graph,
               std::span<const NodeId> original_ids, std::span<const NodeId> prompt_targets, ad::Var task_row,
               const ReachabilityCache& cache, const AnchorSet& anchors);

/// Non-differentiable encoding of every node of `graph` (no sampling),
/// prompting `prompt_targets` with `task_row`. Rows follow node ids.
DenseMatrix embed_graph(Model& model, const Graph& graph, std::span<const NodeId> prompt_targets,
                        std::span<const Real> task_row, const ReachabilityCache& cache, const AnchorSet& anchors);

}  // namespace ultradp
