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
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gradient_cases.hpp"
#include "ultradp/pretext.hpp"
#include "ultradp/train.hpp"

namespace ultradp {
namespace {

using namespace fixtures;

std::vector<Real> unit(Real angle) { return {std::cos(angle), std::sin(angle)}; }

std::vector<Real> random_vector(Rng& rng, std::size_t d) {
  std::vector<Real> v(d);
  for (Real& x : v) x = rng.normal();
  return v;
}

Real cosine(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

TEST(TaskRegistry, KeysRoundTrip) {
  for (TaskKind k : {TaskKind::kEdge, TaskKind::kKnn, TaskKind::kContrastive}) EXPECT_EQ(parse_task(task_key(k)), k);
  EXPECT_EQ(task_key(TaskKind::kKnn), "knn");
  EXPECT_THROW(parse_task("mask"), ConfigError);
}

TEST(EdgeBatch, SingleEdgeWithIsolatedNode) {
  const Graph g = make_graph(3, {{0, 1}});
  const EdgeBatch b = sample_edge_batch(g, 50, 1);
  ASSERT_EQ(b.triplets.size(), 50u);
  for (const EdgeTriplet& t : b.triplets) {
    EXPECT_TRUE((t == EdgeTriplet{0, 1, 2}) || (t == EdgeTriplet{1, 0, 2}));
  }
}

TEST(EdgeBatch, PathEndpointIsForced) {
  const std::vector<NodeId> pool = {0};
  const EdgeBatch b = sample_edge_batch(path3(), 10, 4, pool);
  for (const EdgeTriplet& t : b.triplets) EXPECT_EQ(t, (EdgeTriplet{0, 1, 2}));
}

TEST(EdgeBatch, DeterministicAndValid) {
  const Graph g = erdos_renyi(40, 0.1, 3);
  const EdgeBatch a = sample_edge_batch(g, 64, 9), b = sample_edge_batch(g, 64, 9);
  EXPECT_EQ(a.triplets, b.triplets);
  for (const EdgeTriplet& t : a.triplets) {
    EXPECT_GE(g.degree(t.node), 1u);
    EXPECT_TRUE(g.has_edge(t.node, t.positive));
    EXPECT_FALSE(g.has_edge(t.node, t.negative));
    EXPECT_NE(t.node, t.negative);
  }
}

TEST(EdgeBatch, CompleteGraphHasNoNegative) {
  EXPECT_THROW(sample_edge_batch(triangle(), 4, 0), SamplingError);
  EXPECT_THROW(sample_edge_batch(make_graph(3, {}), 4, 0), SamplingError);
}

TEST(EdgeLoss, Examples) {
  const std::vector<Real> h = {1.0, 0.0};
  EXPECT_DOUBLE_EQ(edge_loss(h, h, unit(std::numbers::pi / 2), 0.5), -1.0);
  // Negative at cosine 0.9.
  EXPECT_NEAR(edge_loss(h, h, unit(std::acos(0.9)), 0.5), -0.6, 1e-12);
  EXPECT_DOUBLE_EQ(edge_loss(h, h, h, 0.5), -0.5);
  EXPECT_THROW(edge_loss(h, std::vector<Real>{0.0, 0.0}, h, 0.5), DomainError);
}

TEST(EdgeLoss, RangeAndScaleInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h = random_vector(rng, 4), hp = random_vector(rng, 4), hn = random_vector(rng, 4);
    const Real alpha = rng.uniform();
    const Real l = edge_loss(h, hp, hn, alpha);
    EXPECT_GE(l, -1.0 - 1e-12);
    EXPECT_LE(l, 1.0 + 1.0 - alpha + 1e-12);
    const Real c = 0.01 + 100.0 * rng.uniform();
    auto scaled = [c](std::vector<Real> v) {
      for (Real& x : v) x *= c;
      return v;
    };
    EXPECT_NEAR(edge_loss(scaled(h), scaled(hp), scaled(hn), alpha), l, 1e-12);
  }
}

TEST(EdgeLoss, TapeFormMatchesValueForm) {
  Rng rng(3);
  const Tensor h = random_tensor({3, 4}, rng), hp = random_tensor({3, 4}, rng), hn = random_tensor({3, 4}, rng);
  ad::Tape tape;
  const Real tape_value = edge_loss(tape.constant(h), tape.constant(hp), tape.constant(hn), 0.5).item();
  Real expected = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    auto row = [r](const Tensor& t) { return std::vector<Real>(t.values().begin() + r * 4, t.values().begin() + r * 4 + 4); };
    expected += edge_loss(row(h), row(hp), row(hn), 0.5) / 3.0;
  }
  EXPECT_NEAR(tape_value, expected, 1e-14);
}

TEST(KnnBatch, SingleReachableNodeIsThePositive) {
  const ReachabilityCache c = build_cache(build_transition(path3()), 1);
  const KnnBatch b = sample_knn_batch(c, 0, 1, 1, 0);
  EXPECT_EQ(b.positives, (std::vector<NodeId>{1}));
  EXPECT_EQ(b.negatives.size(), 1u);
}

TEST(KnnBatch, UnreachableNodesDominateNegatives) {
  // Components {0, 1, 2} and {3, 4}; from 0 at t' = 1 only node 1 is reachable.
  const Graph g = make_graph(5, {{0, 1}, {1, 2}, {3, 4}});
  const ReachabilityCache c = build_cache(build_transition(g), 1);
  std::map<NodeId, int> counts;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    for (NodeId v : sample_knn_batch(c, 0, 1, 1, seed).negatives) counts[v]++;
  }
  EXPECT_EQ(counts[0], 0);
  EXPECT_GT(counts[3], counts[1]);
  EXPECT_GT(counts[2], counts[1]);
}

TEST(KnnBatch, IsolatedNodesAreNeverNegatives) {
  const Graph g = make_graph(6, {{0, 1}, {1, 2}, {3, 4}});
  const ReachabilityCache c = build_cache(build_transition(g), 2);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    for (NodeId v : sample_knn_batch(c, 0, 3, 2, seed).negatives) EXPECT_NE(v, 5u);
  }
}

TEST(KnnBatch, TrianglePositiveFrequencies) {
  const ReachabilityCache c = build_cache(build_transition(triangle()), 1);
  const int batches = 100000;
  int ones = 0;
  for (int s = 0; s < batches; ++s) {
    for (NodeId v : sample_knn_batch(c, 0, 2, 1, static_cast<std::uint64_t>(s)).positives) ones += v == 1;
  }
  const Real draws = 2.0 * batches;
  EXPECT_NEAR(ones / draws, 0.5, 3.0 * std::sqrt(0.25 / draws));
}

TEST(KnnBatch, PositiveFrequenciesPassChiSquare) {
  // Critical values of chi-square at p = 0.001 for 1..5 degrees of freedom.
  const Real critical[] = {10.83, 13.82, 16.27, 18.47, 20.52};
  const Graph g = six_node_graph();
  const ReachabilityCache c = build_cache(build_transition(g), 3);
  const std::size_t k = 5, batches = 20000;
  for (NodeId anchor : {NodeId{0}, NodeId{3}}) {
    std::vector<int> counts(6, 0);
    for (std::size_t s = 0; s < batches; ++s) {
      for (NodeId v : sample_knn_batch(c, anchor, k, 3, s).positives) counts[v]++;
    }
    Real stat = 0.0;
    int support = 0;
    for (NodeId j = 0; j < 6; ++j) {
      const Real expected = c.reach(anchor, j, 3) * static_cast<Real>(k * batches);
      if (expected == 0.0) {
        EXPECT_EQ(counts[j], 0);
        continue;
      }
      ++support;
      stat += (counts[j] - expected) * (counts[j] - expected) / expected;
    }
    ASSERT_GE(support, 2);
    EXPECT_LT(stat, critical[support - 2]) << "anchor " << anchor;
  }
}

TEST(KnnBatch, DeterministicAndErrors) {
  const ReachabilityCache c = build_cache(build_transition(erdos_renyi(30, 0.2, 1)), 3);
  const KnnBatch a = sample_knn_batch(c, 4, 5, 3, 77), b = sample_knn_batch(c, 4, 5, 3, 77);
  EXPECT_EQ(a.positives, b.positives);
  EXPECT_EQ(a.negatives, b.negatives);
  const ReachabilityCache iso = build_cache(build_transition(make_graph(3, {{0, 1}})), 1);
  EXPECT_THROW(sample_knn_batch(iso, 2, 1, 1, 0), SamplingError);
  EXPECT_THROW(sample_knn_batch(iso, 0, 0, 1, 0), ArgumentError);
}

TEST(KnnLoss, SingleTermSmoothEqualsHard) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const KnnLossTerms t = knn_loss_terms(random_vector(rng, 3), {random_vector(rng, 3)}, {random_vector(rng, 3)}, 1.0);
    EXPECT_NEAR(t.smooth_j, t.hard_j, 1e-12);
  }
}

TEST(KnnLoss, PerfectSeparationGivesZero) {
  const std::vector<Real> h = {1.0, 2.0};
  const std::vector<Real> anti = {-1.0, -2.0};
  const KnnLossTerms t = knn_loss_terms(h, {h, h}, {anti, anti}, 1.0);
  EXPECT_NEAR(t.center, 0.0, 1e-24);
  // Oracle: J = log(2 e^0) + log(2 e^(1 - 2)) = 2 log 2 - 1.
  EXPECT_NEAR(t.smooth_j, 2.0 * std::log(2.0) - 1.0, 1e-12);
  const KnnLossTerms single = knn_loss_terms(h, {h}, {anti}, 1.0);
  EXPECT_NEAR(single.smooth_j, -1.0, 1e-12);
  EXPECT_NEAR(single.total(), 0.0, 1e-24);
}

TEST(KnnLoss, IdenticalRepresentationsGiveOne) {
  const std::vector<Real> h = {0.3, -0.4};
  EXPECT_NEAR(knn_loss_terms(h, {h}, {h}, 1.0).total(), 1.0, 1e-12);
}

TEST(KnnLoss, TapeFormMatchesTerms) {
  Rng rng(6);
  const std::size_t b = 3, k = 2, d = 4;
  const Tensor h = random_tensor({b, d}, rng), p = random_tensor({b * k, d}, rng), n = random_tensor({b * k, d}, rng);
  ad::Tape tape;
  const Real value = knn_loss(tape.constant(h), tape.constant(p), tape.constant(n), k, 1.0).item();
  auto row = [d](const Tensor& t, std::size_t r) {
    return std::vector<Real>(t.values().begin() + r * d, t.values().begin() + (r + 1) * d);
  };
  Real expected = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    expected += knn_loss_terms(row(h, i), {row(p, i * k), row(p, i * k + 1)}, {row(n, i * k), row(n, i * k + 1)}, 1.0).total();
  }
  EXPECT_NEAR(value, expected / static_cast<Real>(b), 1e-12);
}

TEST(KnnLoss, SmoothTripletBoundsHardForm) {
  Rng rng(8);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 1 + rng.index(6), d = 2 + rng.index(5);
    std::vector<std::vector<Real>> pos, neg;
    for (std::size_t j = 0; j < k; ++j) {
      pos.push_back(random_vector(rng, d));
      neg.push_back(random_vector(rng, d));
    }
    const auto h = random_vector(rng, d);
    const Real margin = 2.0 * rng.uniform();
    const KnnLossTerms t = knn_loss_terms(h, pos, neg, margin);
    // Independent hard form from cosine distances.
    Real max_pos = -1e9, min_neg = 1e9;
    for (std::size_t j = 0; j < k; ++j) {
      max_pos = std::max(max_pos, 1.0 - cosine(h, pos[j]));
      min_neg = std::min(min_neg, 1.0 - cosine(h, neg[j]));
    }
    const Real hard = std::max(0.0, max_pos + margin - min_neg);
    ASSERT_GE(t.triplet, hard * hard - 1e-12);
  }
}

TEST(Contrastive, SingleRowBatchIsZero) {
  ad::Tape tape;
  const ad::Var z = tape.constant({1, 3}, {0.2, 0.5, -1.0});
  EXPECT_EQ(contrastive_loss(z, tape.constant({1, 3}, {1.0, 0.0, 0.0}), 0.5).item(), 0.0);
}

TEST(Contrastive, IdenticalViewsMatchClosedForm) {
  Rng rng(10);
  const Tensor z = random_tensor({5, 3}, rng);
  ad::Tape tape;
  const ad::Var v = tape.constant(z);
  const Real loss = contrastive_loss(v, v, 1.0).item();
  auto row = [&](std::size_t r) { return std::vector<Real>(z.values().begin() + r * 3, z.values().begin() + r * 3 + 3); };
  Real expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    Real denom = 0.0;
    for (std::size_t j = 0; j < 5; ++j) denom += std::exp(cosine(row(i), row(j)));
    expected += -(1.0 - std::log(denom));
  }
  EXPECT_NEAR(loss, expected / 5.0, 1e-12);
}

TEST(Contrastive, IdenticalViewsBeatPerturbedViews) {
  Rng rng(12);
  const Tensor z = random_tensor({6, 4}, rng);
  ad::Tape tape;
  const ad::Var v = tape.constant(z);
  const Real floor = contrastive_loss(v, v, 1.0).item();
  for (int trial = 0; trial < 50; ++trial) {
    Tensor other = z;
    // Shuffle the second view's rows: every positive pair is broken.
    std::vector<std::size_t> order = {1, 2, 3, 4, 5, 0};
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < 4; ++c) other(r, c) = z(order[r], c) + 0.1 * rng.normal();
    }
    EXPECT_LT(floor, contrastive_loss(v, tape.constant(other), 1.0).item());
  }
}

TEST(AugmentView, ZeroRatioIsIdentityAndDeterministic) {
  const Graph g = erdos_renyi(20, 0.2, 2);
  EXPECT_EQ(augment_view(g, 0.0, 5), g);
  EXPECT_EQ(augment_view(g, 0.3, 5), augment_view(g, 0.3, 5));
  EXPECT_LT(augment_view(g, 0.5, 5).num_edges(), g.num_edges());
  EXPECT_THROW(augment_view(g, 1.5, 5), ArgumentError);
}

TEST(PretextLoss, FixedSeedGivesIdenticalLoss) {
  const Graph g = six_node_graph(4);
  const ReachabilityCache cache = build_cache(build_transition(g), 3);
  const AnchorSet anchors = select_anchors(cache, 3, 2);
  for (TaskKind kind : {TaskKind::kEdge, TaskKind::kKnn, TaskKind::kContrastive}) {
    TrainConfig config;
    config.tasks = {{kind, 1.0}};
    config.batch_size = 4;
    config.knn_k = 2;
    config.knn_step = 2;
    config.position_step = 3;
    config.gnn = small_gnn(Backbone::kConvolutional);
    ModelSpec spec{config.gnn, g.feature_dim(), 1, anchors.size(), 0.1, true};
    Model model = init_model(spec, 1);
    const TaskContext ctx{g, cache, anchors, config};
    const std::vector<NodeId> pool = {0, 1, 2, 3, 4, 5};
    auto run = [&](std::uint64_t seed) {
      ad::Tape tape;
      return pretext_loss(tape, model, bind_prompt_constant(tape, model.prompt), ctx, 0, pool, seed).item();
    };
    EXPECT_EQ(run(3), run(3)) << task_key(kind);
    EXPECT_TRUE(std::isfinite(run(4)));
  }
}

}  // namespace
}  // namespace ultradp
