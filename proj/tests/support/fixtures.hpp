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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "ultradp/common.hpp"
#include "ultradp/graph.hpp"

namespace ultradp::fixtures {

inline DenseMatrix constant_features(std::size_t n, std::size_t d, Real fill = 1.0) { return DenseMatrix(n, d, fill); }

inline DenseMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed, "test-features");
  DenseMatrix m(n, d);
  for (Real& x : m.data) x = rng.normal();
  return m;
}

inline Graph make_graph(std::size_t n, const std::vector<Edge>& edges, std::size_t d = 1) {
  return Graph::from_edges(edges, constant_features(n, d));
}

/// 0 - 1 - 2
inline Graph path3() { return make_graph(3, {{0, 1}, {1, 2}}); }
inline Graph triangle() { return make_graph(3, {{0, 1}, {1, 2}, {0, 2}}); }
/// Center 0 with leaves 1..4.
inline Graph star5() { return make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}); }

inline Graph cycle(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>((i + 1) % n));
  return make_graph(n, edges);
}

/// Erdos-Renyi G(n, p) with Gaussian features.
inline Graph erdos_renyi(std::size_t n, double p, std::uint64_t seed, std::size_t d = 4) {
  Rng rng(seed, "test-er");
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) edges.emplace_back(i, j);
    }
  }
  return Graph::from_edges(edges, random_features(n, d, seed));
}

/// Six nodes, two triangles joined by a bridge; the standard small graph for
/// full-model gradient checks.
inline Graph six_node_graph(std::size_t d = 3, std::uint64_t seed = 7) {
  const std::vector<Edge> edges = {{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}, {4, 5}, {3, 5}};
  return Graph::from_edges(edges, random_features(6, d, seed), std::vector<int>{0, 0, 0, 1, 1, 1});
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ultradp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ultradp::fixtures
