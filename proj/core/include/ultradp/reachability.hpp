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
#include <filesystem>
#include <span>
#include <vector>

#include "ultradp/common.hpp"
#include "ultradp/graph.hpp"

namespace ultradp {

/// Square sparse matrix in compressed-row form with sorted column ids.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::uint64_t> offsets;  // n + 1
  std::vector<std::uint64_t> columns;
  std::vector<Real> values;

  std::size_t nnz() const { return values.size(); }
  Real at(std::size_t i, std::size_t j) const;
  std::span<const std::uint64_t> row_columns(std::size_t i) const {
    return {columns.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::span<const Real> row_values(std::size_t i) const {
    return {values.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }

  bool operator==(const CsrMatrix&) const = default;
};

/// Entries with |value| below this are dropped after every product.
inline constexpr Real kPruneThreshold = 1e-15;

/// Sparse product a * b (Gustavson, row-parallel), pruning tiny entries.
CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b, Real prune = kPruneThreshold);

/// Row-stochastic random-walk matrix D^-1 A; isolated nodes get empty rows.
CsrMatrix build_transition(const Graph& graph);

/// Stack of transition powers P^1 .. P^T.
class ReachabilityCache {
 public:
  ReachabilityCache() = default;
  ReachabilityCache(std::size_t n, std::vector<CsrMatrix> powers);

  std::size_t num_nodes() const { return n_; }
  std::size_t max_step() const { return powers_.size(); }
  const CsrMatrix& power(std::size_t t) const;

  /// Probability that a t-step uniform walk from i ends at j.
  Real reach(NodeId i, NodeId j, std::size_t t) const;
  /// Column sums of P^t: total reachability into every node.
  std::vector<Real> total_reach(std::size_t t) const;

  bool operator==(const ReachabilityCache&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<CsrMatrix> powers_;
};

ReachabilityCache build_cache(const CsrMatrix& transition, std::size_t max_step);

void save_cache(const ReachabilityCache& cache, const std::filesystem::path& path);
ReachabilityCache load_cache(const std::filesystem::path& path);

/// Independent estimate of reach(i, j, t) from `walks` simulated walks.
Real monte_carlo_reach(const Graph& graph, NodeId i, NodeId j, std::size_t t, std::size_t walks,
                       std::uint64_t seed);

}  // namespace ultradp
