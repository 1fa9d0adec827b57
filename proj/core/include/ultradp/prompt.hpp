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
#include <string>
#include <utility>
#include <vector>

#include "ultradp/autodiff.hpp"
#include "ultradp/graph.hpp"
#include "ultradp/reachability.hpp"

namespace ultradp {

/// Top-m nodes by total reachability at walk step `step`, in descending
/// order of total reachability with ties broken by ascending id.
struct AnchorSet {
  std::vector<NodeId> ids;
  std::size_t step = 0;

  std::size_t size() const { return ids.size(); }
  bool operator==(const AnchorSet&) const = default;
};

AnchorSet select_anchors(const ReachabilityCache& cache, std::size_t step, std::size_t count);

/// Reachabilities from node i to each anchor: reach(i, anchors[k], t).
std::vector<Real> position_encoding(const ReachabilityCache& cache, const AnchorSet& anchors, NodeId i, std::size_t t);

/// Encodings for many nodes at anchors.step, one row per node.
DenseMatrix position_encodings(const ReachabilityCache& cache, const AnchorSet& anchors, std::span<const NodeId> nodes);

/// Each row divided by (population standard deviation of the row + epsilon).
DenseMatrix standardize_encodings(const DenseMatrix& encodings, Real epsilon);

/// Trainable prompt parameters plus the two fixed scalars.
struct PromptParams {
  ad::Tensor task_table;        // [N x d], one row per pretext task
  ad::Tensor pos_weight;        // W_pos [d x m]
  ad::Tensor pos_bias;          // b_pos [1 x d]
  ad::Tensor align_prompt_weight;  // [d x d_h]
  ad::Tensor align_prompt_bias;    // [1 x d_h]
  ad::Tensor align_normal_weight;  // [d x d_h]
  ad::Tensor align_normal_bias;    // [1 x d_h]
  Real w_pos = 0.1;
  Real epsilon = 1e-6;

  std::size_t num_tasks() const { return task_table.rows(); }
  std::size_t feature_dim() const { return task_table.cols(); }
  std::size_t num_anchors() const { return pos_weight.cols(); }
  std::size_t hidden_dim() const { return align_normal_weight.cols(); }

  std::vector<std::pair<std::string, ad::Tensor*>> named_tensors();
};

PromptParams init_prompt_params(std::size_t num_tasks, std::size_t feature_dim, std::size_t num_anchors,
                                std::size_t hidden_dim, Real w_pos, std::uint64_t seed);

/// Prompt parameters bound onto a tape, either as trainable leaves or as
/// constants.
struct BoundPrompt {
  ad::Var task_table;
  ad::Var pos_weight;
  ad::Var pos_bias;
  ad::Var align_prompt_weight;
  ad::Var align_prompt_bias;
  ad::Var align_normal_weight;
  ad::Var align_normal_bias;
  Real w_pos = 0.0;
  Real epsilon = 0.0;
};

BoundPrompt bind_prompt(ad::Tape& tape, PromptParams& params);
BoundPrompt bind_prompt_constant(ad::Tape& tape, const PromptParams& params);

/// tanh(W_pos * enc / (sigma + eps) + b_pos) for each encoding row -> [k x d].
ad::Var position_embedding(ad::Tape& tape, const DenseMatrix& encodings, const BoundPrompt& prompt);
/// Value form for a single encoding.
std::vector<Real> position_embedding(std::span<const Real> encoding, const PromptParams& params);

/// task_row + w_pos * pos_emb.
std::vector<Real> prompt_feature(std::span<const Real> task_row, std::span<const Real> pos_emb, Real w_pos);
/// Broadcast task row [1 x d] over the position-embedding rows [k x d].
ad::Var prompt_features(ad::Var task_row, ad::Var pos_emb, Real w_pos);

/// Rows flagged as prompt go through the prompt map, the rest through the
/// normal map -> [n' x d_h].
ad::Var align_features(ad::Var features, std::span<const char> is_prompt, const BoundPrompt& prompt);
DenseMatrix align_features(const DenseMatrix& features, std::span<const char> is_prompt, const PromptParams& params);

/// Prompt node n+i is attached to targets[i]. Prompt feature rows come from
/// `prompt_rows` ([|targets| x d]) or are zero. Labels are dropped.
Graph attach_prompt_nodes(const Graph& graph, std::span<const NodeId> targets,
                          const DenseMatrix* prompt_rows = nullptr);

struct PromptedGraph {
  Graph graph;
  std::vector<NodeId> prompt_ids;
};

/// Adds one prompt node per target with the dual-prompt feature. When
/// `original_ids` is non-empty, graph ids are translated through it before
/// looking up reachabilities (graph is then a subgraph of the cached one).
PromptedGraph prompt_graph(const Graph& graph, std::span<const NodeId> targets, std::span<const Real> task_row,
                           const ReachabilityCache& cache, const AnchorSet& anchors, const PromptParams& params,
                           std::span<const NodeId> original_ids = {});

}  // namespace ultradp
