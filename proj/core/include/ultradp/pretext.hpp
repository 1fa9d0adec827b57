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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ultradp/autodiff.hpp"
#include "ultradp/graph.hpp"
#include "ultradp/reachability.hpp"

namespace ultradp {

enum class TaskKind { kEdge, kKnn, kContrastive };

/// Registry keys: "edge", "knn", "cl".
TaskKind parse_task(std::string_view key);
std::string_view task_key(TaskKind kind);

// --- edge prediction -------------------------------------------------------

struct EdgeTriplet {
  NodeId node;
  NodeId positive;
  NodeId negative;
  bool operator==(const EdgeTriplet&) const = default;
};

struct EdgeBatch {
  std::vector<EdgeTriplet> triplets;
  Real margin = 0.5;
};

/// Triplets (v, v+, v-): v uniform among nodes of degree >= 1 (restricted
/// to `pool` when non-empty), v+ a uniform neighbor, v- a uniform non-neighbor
/// other than v. Throws SamplingError when no valid triplet exists.
EdgeBatch sample_edge_batch(const Graph& graph, std::size_t batch_size, std::uint64_t seed,
                            std::span<const NodeId> pool = {}, Real margin = 0.5);

/// -S(h, h+) + max(0, S(h, h-) - margin), averaged over rows.
ad::Var edge_loss(ad::Var h, ad::Var h_pos, ad::Var h_neg, Real margin);
Real edge_loss(std::span<const Real> h, std::span<const Real> h_pos, std::span<const Real> h_neg, Real margin);

// --- k-NN similarity ---------------------------------------------------------

struct KnnBatch {
  NodeId anchor = 0;
  std::vector<NodeId> positives;
  std::vector<NodeId> negatives;
  Real margin = 1.0;
  std::size_t step = 1;
};

/// Smoothing added to reachabilities before taking reciprocals for negative
/// sampling weights: 1e-4 / n.
Real negative_smoothing(std::size_t num_nodes);

/// Positives ~ Cat(reach(i, ., t')) with replacement; negatives ~
/// Cat(1 / (reach(i, ., t') + lambda)) over non-isolated nodes other than i.
KnnBatch sample_knn_batch(const ReachabilityCache& cache, NodeId anchor, std::size_t k, std::size_t step,
                          std::uint64_t seed, Real margin = 1.0);

/// Smooth triplet bound plus center loss. h is [B x d]; positives and
/// negatives are [B*k x d] with anchor b owning rows b*k .. b*k+k-1.
/// Returns the mean over the B anchors.
ad::Var knn_loss(ad::Var h, ad::Var positives, ad::Var negatives, std::size_t k, Real margin);

/// Per-anchor pieces of the k-NN objective (value form, for tests/diagnostics).
struct KnnLossTerms {
  Real smooth_j = 0.0;    // log-sum-exp form
  Real hard_j = 0.0;      // max form
  Real triplet = 0.0;     // max(0, smooth_j)^2
  Real center = 0.0;
  Real total() const { return triplet + center; }
};
KnnLossTerms knn_loss_terms(std::span<const Real> h, const std::vector<std::vector<Real>>& positives,
                            const std::vector<std::vector<Real>>& negatives, Real margin);

// --- contrastive ---------------------------------------------------------------

/// A stochastic view: each undirected edge dropped and each feature column
/// zeroed independently with probability `ratio`.
Graph augment_view(const Graph& graph, Real ratio, std::uint64_t seed);

/// Cross-view InfoNCE with cosine similarity / temperature; row b of z1 and
/// z2 form the positive pair. Mean over rows.
ad::Var contrastive_loss(ad::Var z1, ad::Var z2, Real temperature);

}  // namespace ultradp
