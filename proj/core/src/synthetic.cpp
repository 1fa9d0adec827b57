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

#include "ultradp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ultradp {

Graph make_sbm(const SbmConfig& config) {
  const std::size_t n = config.num_nodes;
  const std::size_t b = config.num_blocks;
  if (n < 1 || b < 1 || b > n) throw ArgumentError("make_sbm: need 1 <= blocks <= nodes");
  if (config.p_in < 0.0 || config.p_in > 1.0 || config.p_out < 0.0 || config.p_out > 1.0) {
    throw ArgumentError("make_sbm: edge probabilities outside [0, 1]");
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i * b / n);

  Rng edge_rng(config.seed, "sbm-edges");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Real p = labels[i] == labels[j] ? config.p_in : config.p_out;
      if (edge_rng.bernoulli(p)) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }

  const std::size_t d = config.feature_dim;
  Rng feature_rng(config.seed, "sbm-features");
  const std::size_t informative = config.informative_dims == 0 ? d : std::min(config.informative_dims, d);
  DenseMatrix means(b, d);
  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t q = 0; q < informative; ++q) means(c, q) = config.feature_signal * feature_rng.normal();
  }
  DenseMatrix features(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mu = means.row(static_cast<std::size_t>(labels[i]));
    for (std::size_t q = 0; q < d; ++q) features(i, q) = mu[q] + config.feature_noise * feature_rng.normal();
  }
  return Graph::from_edges(edges, std::move(features), std::move(labels));
}

}  // namespace ultradp
