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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ultradp/common.hpp"

namespace ultradp {

/// Row-major dense matrix of reals. Used for node features and anywhere a
/// plain value matrix is needed outside the differentiable region.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, Real fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  DenseMatrix(std::size_t r, std::size_t c, std::vector<Real> values);

  std::span<Real> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const Real> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  Real& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool operator==(const DenseMatrix&) const = default;
};

using Edge = std::pair<NodeId, NodeId>;

/// Undirected graph in CSR form with dense node features and optional labels.
///
/// The adjacency is symmetric, row-sorted, duplicate-free and carries no
/// self-loops. Instances are immutable after construction.
class Graph {
 public:
  Graph() = default;

  /// Builds from a raw edge list: symmetrizes, sorts, deduplicates and
  /// strips self-loops. The node count is the feature row count.
  static Graph from_edges(std::span<const Edge> edges, DenseMatrix features,
                          std::optional<std::vector<int>> labels = std::nullopt);

  /// Adopts already-normalized CSR arrays; throws MalformedInputError when
  /// any structural invariant is violated.
  static Graph from_csr(std::vector<std::uint64_t> offsets, std::vector<NodeId> targets,
                        DenseMatrix features, std::optional<std::vector<int>> labels = std::nullopt);

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  /// Stored (directed) adjacency entries; twice the undirected edge count.
  std::size_t num_adjacency_entries() const { return targets_.size(); }
  std::size_t num_edges() const { return targets_.size() / 2; }
  std::size_t feature_dim() const { return features_.cols; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {targets_.data() + offsets_[v], static_cast<std::size_t>(offsets_[v + 1] - offsets_[v])};
  }
  std::size_t degree(NodeId v) const { return static_cast<std::size_t>(offsets_[v + 1] - offsets_[v]); }
  bool has_edge(NodeId u, NodeId v) const;

  std::span<const std::uint64_t> csr_offsets() const { return offsets_; }
  std::span<const NodeId> csr_targets() const { return targets_; }
  const DenseMatrix& features() const { return features_; }

  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const;
  int num_classes() const { return num_classes_; }

  /// Each undirected edge once, as (u, v) with u < v, in CSR order.
  std::vector<Edge> undirected_edges() const;

  bool operator==(const Graph&) const = default;

 private:
  void validate() const;

  std::vector<std::uint64_t> offsets_;
  std::vector<NodeId> targets_;
  DenseMatrix features_;
  std::optional<std::vector<int>> labels_;
  int num_classes_ = 0;
};

// --- on-disk formats -------------------------------------------------------

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::optional<std::filesystem::path>& label_path = std::nullopt);

/// Writes the edge TSV (each undirected edge once), the binary feature file
/// and, when labels are present and a path is given, the label file.
void save_graph(const Graph& graph, const std::filesystem::path& edge_path,
                const std::filesystem::path& feature_path,
                const std::optional<std::filesystem::path>& label_path = std::nullopt);

DenseMatrix read_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix(const DenseMatrix& m, const std::filesystem::path& path);

// --- splits ----------------------------------------------------------------

struct SplitSpec {
  std::vector<NodeId> pretrain_nodes;
  std::vector<NodeId> train_pool;
  std::vector<NodeId> val_pool;
  std::vector<NodeId> test_nodes;
};

/// 70/10/10 split of a seeded permutation; flooring remainder goes to test.
SplitSpec make_split(const Graph& graph, std::uint64_t seed);

struct ClassDeficit {
  int label = 0;
  std::size_t requested = 0;
  std::size_t available = 0;
  bool validation = false;
};

struct KShotSample {
  std::size_t shots = 0;
  std::vector<NodeId> train_nodes;
  std::vector<NodeId> val_nodes;
  std::uint64_t seed = 0;
  std::vector<ClassDeficit> deficits;
};

KShotSample sample_kshot(const SplitSpec& split, const Graph& graph, std::size_t shots, std::uint64_t seed);

// --- subgraphs -------------------------------------------------------------

enum class SamplerKind { kLadies, kNeighborhood };

struct Subgraph {
  Graph graph;
  /// original_ids[sub_id] is the id in the source graph. Targets occupy the
  /// first |targets| slots in the order they were given.
  std::vector<NodeId> original_ids;
};

/// Induced subgraph around `targets`, grown for `layers` rounds by
/// layer-dependent importance sampling (or plain capped neighborhood
/// expansion for SamplerKind::kNeighborhood).
Subgraph sample_subgraph(const Graph& graph, std::span<const NodeId> targets, std::size_t layers,
                         std::size_t budget_per_layer, std::uint64_t seed,
                         SamplerKind kind = SamplerKind::kLadies);

/// Induced subgraph on an explicit node list (in the given order).
Subgraph induced_subgraph(const Graph& graph, std::span<const NodeId> nodes);

struct EdgeHoldout {
  Graph train_graph;
  std::vector<Edge> held_out;
};

/// Removes a seeded `fraction` of undirected edges for link-prediction probing.
EdgeHoldout hold_out_edges(const Graph& graph, double fraction, std::uint64_t seed);

}  // namespace ultradp
