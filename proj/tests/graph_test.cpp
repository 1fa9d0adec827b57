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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ultradp/graph.hpp"

namespace ultradp {
namespace {

using namespace fixtures;

std::vector<std::uint64_t> offsets_of(const Graph& g) { return {g.csr_offsets().begin(), g.csr_offsets().end()}; }
std::vector<NodeId> targets_of(const Graph& g) { return {g.csr_targets().begin(), g.csr_targets().end()}; }

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

TEST(GraphBuild, SingleUndirectedEdge) {
  const Graph g = make_graph(2, {{0, 1}});
  EXPECT_EQ(offsets_of(g), (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(targets_of(g), (std::vector<NodeId>{1, 0}));
}

TEST(GraphBuild, DuplicatesAndSelfLoopsAreNormalized) {
  EXPECT_EQ(make_graph(2, {{0, 1}, {1, 0}, {0, 0}}), make_graph(2, {{0, 1}}));
}

TEST(GraphBuild, DegreesOfPath) {
  const Graph g = make_graph(3, {{0, 1}, {1, 2}});
  // Oracle: count the rows of the CSR directly.
  std::vector<std::size_t> from_rows;
  for (std::size_t i = 0; i + 1 < g.csr_offsets().size(); ++i) from_rows.push_back(g.csr_offsets()[i + 1] - g.csr_offsets()[i]);
  EXPECT_EQ(from_rows, (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_EQ(g.degree(0), 1u);
  EXPECT_EQ(g.degree(1), 2u);
  EXPECT_EQ(g.degree(2), 1u);
}

TEST(GraphBuild, AdjacencyIsSymmetricSortedAndLoopFree) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = erdos_renyi(40, 0.15, seed);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      const auto nbrs = g.neighbors(v);
      EXPECT_TRUE(std::is_sorted(nbrs.begin(), nbrs.end()));
      EXPECT_EQ(std::adjacent_find(nbrs.begin(), nbrs.end()), nbrs.end());
      for (NodeId u : nbrs) {
        EXPECT_NE(u, v);
        EXPECT_TRUE(g.has_edge(u, v));
      }
    }
  }
}

TEST(GraphBuild, OutOfRangeEndpointIsMalformed) {
  EXPECT_THROW(make_graph(2, {{0, 2}}), MalformedInputError);
}

TEST(GraphBuild, LabelCountMismatchIsDimensionError) {
  EXPECT_THROW(Graph::from_edges(std::vector<Edge>{{0, 1}}, constant_features(2, 1), std::vector<int>{0}), DimensionError);
}

TEST(GraphBuild, CsrAdoptionValidatesStructure) {
  EXPECT_NO_THROW(Graph::from_csr({0, 1, 2}, {1, 0}, constant_features(2, 1)));
  EXPECT_THROW(Graph::from_csr({0, 1, 1}, {1}, constant_features(2, 1)), MalformedInputError);  // asymmetric
  EXPECT_THROW(Graph::from_csr({0, 1, 2}, {0, 1}, constant_features(2, 1)), MalformedInputError);  // self-loops
}

TEST(GraphIo, LoadNormalizesEdgeFile) {
  TempDir dir;
  write_text(dir / "edges.tsv", "0\t1\n1\t0\n0\t0\n");
  write_feature_matrix(constant_features(2, 1), dir / "x.bin");
  EXPECT_EQ(load_graph(dir / "edges.tsv", dir / "x.bin"), make_graph(2, {{0, 1}}));
}

TEST(GraphIo, LoadRejectsNodeBeyondFeatureRows) {
  TempDir dir;
  write_text(dir / "edges.tsv", "0\t1\n1\t5\n");
  write_feature_matrix(constant_features(3, 2), dir / "x.bin");
  EXPECT_THROW(load_graph(dir / "edges.tsv", dir / "x.bin"), MalformedInputError);
}

TEST(GraphIo, LoadRejectsGarbageLines) {
  TempDir dir;
  write_text(dir / "edges.tsv", "0\tone\n");
  write_feature_matrix(constant_features(2, 1), dir / "x.bin");
  EXPECT_THROW(load_graph(dir / "edges.tsv", dir / "x.bin"), MalformedInputError);
}

TEST(GraphIo, LabelRowMismatchIsDimensionError) {
  TempDir dir;
  write_text(dir / "edges.tsv", "0\t1\n");
  write_text(dir / "labels.txt", "0\n1\n1\n");
  write_feature_matrix(constant_features(2, 1), dir / "x.bin");
  EXPECT_THROW(load_graph(dir / "edges.tsv", dir / "x.bin", dir / "labels.txt"), DimensionError);
}

TEST(GraphIo, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(load_graph(dir / "absent.tsv", dir / "absent.bin"), IoError);
}

TEST(GraphIo, FeatureMatrixRejectsBadMagicAndTruncation) {
  TempDir dir;
  write_text(dir / "bad.bin", "NOPE0000000000000000");
  EXPECT_THROW(read_feature_matrix(dir / "bad.bin"), FormatError);

  write_feature_matrix(random_features(4, 3, 1), dir / "x.bin");
  std::filesystem::resize_file(dir / "x.bin", std::filesystem::file_size(dir / "x.bin") - 8);
  EXPECT_THROW(read_feature_matrix(dir / "x.bin"), FormatError);
}

TEST(GraphIo, RoundTripIsBitExact) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Graph g = erdos_renyi(30, 0.1, seed, 5);
    std::vector<int> labels(g.num_nodes());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
    g = Graph::from_edges(g.undirected_edges(), g.features(), labels);
    save_graph(g, dir / "e.tsv", dir / "x.bin", dir / "y.txt");
    EXPECT_EQ(load_graph(dir / "e.tsv", dir / "x.bin", dir / "y.txt"), g);
  }
}

TEST(Split, HundredNodesGivesSeventyTenTenTen) {
  const Graph g = make_graph(100, {});
  const SplitSpec s = make_split(g, 42);
  EXPECT_EQ(s.pretrain_nodes.size(), 70u);
  EXPECT_EQ(s.train_pool.size(), 10u);
  EXPECT_EQ(s.val_pool.size(), 10u);
  EXPECT_EQ(s.test_nodes.size(), 10u);
}

TEST(Split, RemainderGoesToTest) {
  const SplitSpec s = make_split(make_graph(103, {}), 1);
  // Oracle: floor(0.7 * 103) = 72, floor(0.1 * 103) = 10, rest = 103 - 92.
  EXPECT_EQ(s.pretrain_nodes.size(), 72u);
  EXPECT_EQ(s.train_pool.size(), 10u);
  EXPECT_EQ(s.val_pool.size(), 10u);
  EXPECT_EQ(s.test_nodes.size(), 11u);
}

TEST(Split, IsAPartitionAndPureInSeed) {
  const Graph g = make_graph(57, {});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SplitSpec a = make_split(g, seed);
    const SplitSpec b = make_split(g, seed);
    EXPECT_EQ(a.pretrain_nodes, b.pretrain_nodes);
    EXPECT_EQ(a.test_nodes, b.test_nodes);
    std::set<NodeId> all;
    for (const auto* part : {&a.pretrain_nodes, &a.train_pool, &a.val_pool, &a.test_nodes}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), g.num_nodes());
  }
  EXPECT_NE(make_split(g, 1).pretrain_nodes, make_split(g, 2).pretrain_nodes);
}

TEST(Split, TooSmallGraphIsRejected) {
  EXPECT_THROW(make_split(make_graph(9, {}), 0), ArgumentError);
}

Graph labeled_graph(std::size_t n, int classes) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  return Graph::from_edges(std::vector<Edge>{}, constant_features(n, 1), labels);
}

TEST(KShot, CountsAreKTimesC) {
  const Graph g = labeled_graph(3000, 3);
  const SplitSpec s = make_split(g, 0);
  const KShotSample k = sample_kshot(s, g, 8, 0);
  EXPECT_EQ(k.train_nodes.size(), 24u);
  EXPECT_EQ(k.val_nodes.size(), 24u);
  EXPECT_TRUE(k.deficits.empty());
  std::vector<int> per_class(3, 0);
  for (NodeId v : k.train_nodes) per_class[g.labels()[v]]++;
  EXPECT_EQ(per_class, (std::vector<int>{8, 8, 8}));
}

TEST(KShot, LargeKTakesWholePoolAndRecordsDeficit) {
  const Graph g = labeled_graph(100, 2);
  const SplitSpec s = make_split(g, 3);
  const KShotSample k = sample_kshot(s, g, 50, 3);
  EXPECT_EQ(k.train_nodes.size(), s.train_pool.size());
  EXPECT_EQ(k.val_nodes.size(), s.val_pool.size());
  EXPECT_FALSE(k.deficits.empty());
}

TEST(KShot, DrawsComeFromTheRightPoolsWithoutReplacement) {
  const Graph g = labeled_graph(200, 4);
  const SplitSpec s = make_split(g, 9);
  const std::set<NodeId> train(s.train_pool.begin(), s.train_pool.end());
  const std::set<NodeId> val(s.val_pool.begin(), s.val_pool.end());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const KShotSample k = sample_kshot(s, g, 3, seed);
    EXPECT_EQ(std::set<NodeId>(k.train_nodes.begin(), k.train_nodes.end()).size(), k.train_nodes.size());
    for (NodeId v : k.train_nodes) EXPECT_TRUE(train.count(v));
    for (NodeId v : k.val_nodes) EXPECT_TRUE(val.count(v));
    const KShotSample again = sample_kshot(s, g, 3, seed);
    EXPECT_EQ(k.train_nodes, again.train_nodes);
    EXPECT_EQ(k.val_nodes, again.val_nodes);
  }
}

TEST(KShot, EnumeratedTwoClassDraw) {
  // Pools: class 0 = {a, b}, class 1 = {c}; K = 1.
  const Graph g = Graph::from_edges(std::vector<Edge>{}, constant_features(4, 1), std::vector<int>{0, 0, 1, 1});
  SplitSpec s;
  s.train_pool = {0, 1, 2};
  s.val_pool = {3};
  std::set<NodeId> seen_class0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const KShotSample k = sample_kshot(s, g, 1, seed);
    ASSERT_EQ(k.train_nodes.size(), 2u);
    const std::set<NodeId> drawn(k.train_nodes.begin(), k.train_nodes.end());
    EXPECT_TRUE(drawn == std::set<NodeId>({0, 2}) || drawn == std::set<NodeId>({1, 2}));
    seen_class0.insert(drawn.count(0) ? 0 : 1);
  }
  EXPECT_EQ(seen_class0.size(), 2u);
}

TEST(KShot, RequiresLabels) {
  const Graph g = make_graph(20, {});
  EXPECT_THROW(sample_kshot(make_split(g, 0), g, 1, 0), ArgumentError);
}

// Every subgraph edge must exist in the source graph, and every source edge
// between retained nodes must be kept (the subgraph is induced).
void expect_induced(const Graph& g, const Subgraph& sub) {
  const auto& ids = sub.original_ids;
  for (NodeId a = 0; a < sub.graph.num_nodes(); ++a) {
    for (NodeId b = 0; b < sub.graph.num_nodes(); ++b) {
      if (a == b) continue;
      EXPECT_EQ(sub.graph.has_edge(a, b), g.has_edge(ids[a], ids[b]));
    }
  }
}

TEST(Subgraph, SaturatedBudgetReturnsWholeGraph) {
  const Graph g = erdos_renyi(10, 0.4, 4);
  std::vector<NodeId> all(10);
  for (NodeId i = 0; i < 10; ++i) all[i] = i;
  const Subgraph sub = sample_subgraph(g, all, 2, 10, 0);
  EXPECT_EQ(sub.graph.num_nodes(), 10u);
  EXPECT_EQ(sub.graph.num_edges(), g.num_edges());
  expect_induced(g, sub);
}

TEST(Subgraph, IsolatedTargetYieldsSingleton) {
  const Graph g = make_graph(4, {{0, 1}, {1, 2}});
  const std::vector<NodeId> targets = {3};
  const Subgraph sub = sample_subgraph(g, targets, 3, 8, 0);
  EXPECT_EQ(sub.graph.num_nodes(), 1u);
  EXPECT_EQ(sub.graph.num_edges(), 0u);
  EXPECT_EQ(sub.original_ids, (std::vector<NodeId>{3}));
}

TEST(Subgraph, TriangleBudgetOneAddsOneNeighbor) {
  const Graph g = triangle();
  const std::vector<NodeId> targets = {0};
  std::set<NodeId> added;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Subgraph sub = sample_subgraph(g, targets, 1, 1, seed);
    ASSERT_EQ(sub.graph.num_nodes(), 2u);
    EXPECT_EQ(sub.graph.num_edges(), 1u);
    EXPECT_EQ(sub.original_ids[0], 0u);
    added.insert(sub.original_ids[1]);
  }
  EXPECT_EQ(added, (std::set<NodeId>{1, 2}));
}

TEST(Subgraph, EmptyTargetsIsArgumentError) {
  EXPECT_THROW(sample_subgraph(triangle(), {}, 1, 1, 0), ArgumentError);
  const std::vector<NodeId> bad = {7};
  EXPECT_THROW(sample_subgraph(triangle(), bad, 1, 1, 0), ArgumentError);
}

TEST(Subgraph, PropertiesHoldForBothSamplers) {
  for (SamplerKind kind : {SamplerKind::kLadies, SamplerKind::kNeighborhood}) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const Graph g = erdos_renyi(60, 0.08, seed);
      Rng rng(seed, "targets");
      std::vector<NodeId> targets;
      for (int i = 0; i < 5; ++i) {
        const NodeId v = static_cast<NodeId>(rng.index(60));
        if (std::find(targets.begin(), targets.end(), v) == targets.end()) targets.push_back(v);
      }
      const Subgraph sub = sample_subgraph(g, targets, 2, 6, seed, kind);
      ASSERT_GE(sub.original_ids.size(), targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) EXPECT_EQ(sub.original_ids[i], targets[i]);
      EXPECT_LE(sub.graph.num_nodes(), targets.size() + 2 * 6);
      expect_induced(g, sub);
      const Subgraph again = sample_subgraph(g, targets, 2, 6, seed, kind);
      EXPECT_EQ(again.original_ids, sub.original_ids);
    }
  }
}

TEST(Subgraph, InducedSubgraphKeepsOrder) {
  const Graph g = star5();
  const std::vector<NodeId> nodes = {3, 0, 1};
  const Subgraph sub = induced_subgraph(g, nodes);
  EXPECT_EQ(sub.original_ids, nodes);
  EXPECT_TRUE(sub.graph.has_edge(0, 1));
  EXPECT_TRUE(sub.graph.has_edge(1, 2));
  EXPECT_FALSE(sub.graph.has_edge(0, 2));
}

TEST(Holdout, RemovesRequestedFractionOfEdges) {
  const Graph g = erdos_renyi(80, 0.1, 2);
  const EdgeHoldout h = hold_out_edges(g, 0.05, 11);
  EXPECT_EQ(h.held_out.size() + h.train_graph.num_edges(), g.num_edges());
  EXPECT_EQ(h.held_out.size(), static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(g.num_edges()))));
  for (const Edge& e : h.held_out) {
    EXPECT_TRUE(g.has_edge(e.first, e.second));
    EXPECT_FALSE(h.train_graph.has_edge(e.first, e.second));
  }
  EXPECT_EQ(hold_out_edges(g, 0.05, 11).held_out, h.held_out);
}

}  // namespace
}  // namespace ultradp
