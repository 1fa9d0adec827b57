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

#include "ultradp/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ultradp {

TaskKind parse_task(std::string_view key) {
  if (key == "edge") return TaskKind::kEdge;
  if (key == "knn") return TaskKind::kKnn;
  if (key == "cl") return TaskKind::kContrastive;
  throw ConfigError("unknown pretext task '" + std::string(key) + "'");
}

std::string_view task_key(TaskKind kind) {
  switch (kind) {
    case TaskKind::kEdge: return "edge";
    case TaskKind::kKnn: return "knn";
    case TaskKind::kContrastive: return "cl";
  }
  return "?";
}

namespace {

Real cosine(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  Real dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Real log_sum_exp(const std::vector<Real>& xs) {
  const Real hi = *std::max_element(xs.begin(), xs.end());
  Real s = 0.0;
  for (Real x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Index drawn proportionally to non-negative weights via inverse CDF.
std::size_t draw_categorical(const std::vector<Real>& cumulative, Rng& rng) {
  const Real u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace

EdgeBatch sample_edge_batch(const Graph& graph, std::size_t batch_size, std::uint64_t seed,
                            std::span<const NodeId> pool, Real margin) {
  const std::size_t n = graph.num_nodes();
  if (graph.num_edges() == 0) throw SamplingError("edge batch: graph has no edges");
  std::vector<NodeId> candidates;
  auto consider = [&](NodeId v) {
    const std::size_t deg = graph.degree(v);
    if (deg >= 1 && deg + 1 < n) candidates.push_back(v);
  };
  if (pool.empty()) {
    for (std::size_t v = 0; v < n; ++v) consider(static_cast<NodeId>(v));
  } else {
    for (NodeId v : pool) {
      if (v >= n) throw ArgumentError("edge batch: pool node out of range");
      consider(v);
    }
  }
  if (candidates.empty()) throw SamplingError("edge batch: no node has both a neighbor and a non-neighbor");

  Rng rng(seed, "edge-batch");
  EdgeBatch batch;
  batch.margin = margin;
  batch.triplets.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const NodeId v = candidates[rng.index(candidates.size())];
    const auto nbrs = graph.neighbors(v);
    const NodeId pos = nbrs[rng.index(nbrs.size())];
    NodeId neg = v;
    do {
      neg = static_cast<NodeId>(rng.index(n));
    } while (neg == v || graph.has_edge(v, neg));
    batch.triplets.push_back({v, pos, neg});
  }
  return batch;
}

ad::Var edge_loss(ad::Var h, ad::Var h_pos, ad::Var h_neg, Real margin) {
  const ad::Var s_pos = ad::cosine_similarity(h, h_pos);
  const ad::Var s_neg = ad::cosine_similarity(h, h_neg);
  return ad::mean(ad::sub(ad::relu(ad::add_scalar(s_neg, -margin)), s_pos));
}

Real edge_loss(std::span<const Real> h, std::span<const Real> h_pos, std::span<const Real> h_neg, Real margin) {
  return -cosine(h, h_pos) + std::max(0.0, cosine(h, h_neg) - margin);
}

Real negative_smoothing(std::size_t num_nodes) { return 1e-4 / static_cast<Real>(num_nodes); }

KnnBatch sample_knn_batch(const ReachabilityCache& cache, NodeId anchor, std::size_t k, std::size_t step,
                          std::uint64_t seed, Real margin) {
  const std::size_t n = cache.num_nodes();
  if (anchor >= n) throw ArgumentError("knn batch: anchor out of range");
  if (k < 1) throw ArgumentError("knn batch: k must be >= 1");
  if (n < 2) throw SamplingError("knn batch: need at least two nodes");
  const auto& p = cache.power(step);
  const auto cols = p.row_columns(anchor);
  const auto vals = p.row_values(anchor);

  std::vector<Real> pos_cdf;
  std::vector<NodeId> pos_ids;
  Real acc = 0.0;
  for (std::size_t q = 0; q < cols.size(); ++q) {
    if (vals[q] <= 0.0) continue;
    acc += vals[q];
    pos_cdf.push_back(acc);
    pos_ids.push_back(static_cast<NodeId>(cols[q]));
  }
  if (pos_ids.empty()) throw SamplingError("knn batch: node " + std::to_string(anchor) + " reaches nothing at step " + std::to_string(step));

  const Real lambda = negative_smoothing(n);
  std::vector<Real> reach(n, 0.0);
  for (std::size_t q = 0; q < cols.size(); ++q) reach[cols[q]] = vals[q];
  // Isolated nodes are unreachable from everywhere; left in, a handful of
  // them would absorb nearly all negative mass.
  const auto& first = cache.power(1);
  std::vector<Real> neg_cdf(n, 0.0);
  acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != anchor && !first.row_columns(j).empty()) acc += 1.0 / (reach[j] + lambda);
    neg_cdf[j] = acc;
  }
  if (acc == 0.0) throw SamplingError("knn batch: no negative candidate for node " + std::to_string(anchor));

  Rng rng(seed, "knn-batch", anchor);
  KnnBatch batch;
  batch.anchor = anchor;
  batch.margin = margin;
  batch.step = step;
  for (std::size_t s = 0; s < k; ++s) batch.positives.push_back(pos_ids[draw_categorical(pos_cdf, rng)]);
  for (std::size_t s = 0; s < k; ++s) {
    // Excluded nodes carry zero mass, so a draw can only land on one through
    // rounding at the CDF boundary; redraw in that case.
    std::size_t j = anchor;
    while (j == anchor || first.row_columns(j).empty()) j = draw_categorical(neg_cdf, rng);
    batch.negatives.push_back(static_cast<NodeId>(j));
  }
  return batch;
}

ad::Var knn_loss(ad::Var h, ad::Var positives, ad::Var negatives, std::size_t k, Real margin) {
  const std::size_t b = h.rows();
  if (k < 1 || positives.rows() != b * k || negatives.rows() != b * k) {
    throw DimensionError("knn_loss: expected " + std::to_string(b * k) + " positive and negative rows");
  }
  std::vector<std::uint32_t> repeat(b * k);
  for (std::size_t r = 0; r < repeat.size(); ++r) repeat[r] = static_cast<std::uint32_t>(r / k);
  const ad::Var hr = ad::gather_rows(h, repeat);
  // D = 1 - S, arranged [B x k].
  const ad::Var d_pos = ad::reshape(ad::add_scalar(ad::scale(ad::cosine_similarity(hr, positives), -1.0), 1.0), {b, k});
  const ad::Var d_neg = ad::reshape(ad::add_scalar(ad::scale(ad::cosine_similarity(hr, negatives), -1.0), 1.0), {b, k});
  const ad::Var j_smooth =
      ad::add(ad::log_sum_exp_rows(d_pos), ad::log_sum_exp_rows(ad::add_scalar(ad::scale(d_neg, -1.0), margin)));
  const ad::Var triplet = ad::square(ad::relu(j_smooth));
  const ad::Var center = ad::scale(ad::row_sum(ad::square(d_pos)), 1.0 / static_cast<Real>(k));
  return ad::mean(ad::add(triplet, center));
}

KnnLossTerms knn_loss_terms(std::span<const Real> h, const std::vector<std::vector<Real>>& positives,
                            const std::vector<std::vector<Real>>& negatives, Real margin) {
  if (positives.empty() || positives.size() != negatives.size()) {
    throw DimensionError("knn_loss_terms: need k >= 1 positives and as many negatives");
  }
  const std::size_t k = positives.size();
  std::vector<Real> d_pos(k), neg_terms(k);
  Real max_pos = -1e300, min_neg = 1e300, center = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    d_pos[j] = 1.0 - cosine(h, positives[j]);
    const Real dn = 1.0 - cosine(h, negatives[j]);
    neg_terms[j] = margin - dn;
    max_pos = std::max(max_pos, d_pos[j]);
    min_neg = std::min(min_neg, dn);
    center += d_pos[j] * d_pos[j];
  }
  KnnLossTerms t;
  t.smooth_j = log_sum_exp(d_pos) + log_sum_exp(neg_terms);
  t.hard_j = max_pos + margin - min_neg;
  const Real clipped = std::max(0.0, t.smooth_j);
  t.triplet = clipped * clipped;
  t.center = center / static_cast<Real>(k);
  return t;
}

Graph augment_view(const Graph& graph, Real ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ArgumentError("augment_view: ratio outside [0, 1]");
  Rng edge_rng(seed, "view-edges");
  std::vector<Edge> kept;
  for (const Edge& e : graph.undirected_edges()) {
    if (!edge_rng.bernoulli(ratio)) kept.push_back(e);
  }
  DenseMatrix features = graph.features();
  Rng mask_rng(seed, "view-mask");
  for (std::size_t c = 0; c < features.cols; ++c) {
    if (!mask_rng.bernoulli(ratio)) continue;
    for (std::size_t r = 0; r < features.rows; ++r) features(r, c) = 0.0;
  }
  if (graph.has_labels()) return Graph::from_edges(kept, std::move(features), graph.labels());
  return Graph::from_edges(kept, std::move(features));
}

ad::Var contrastive_loss(ad::Var z1, ad::Var z2, Real temperature) {
  if (z1.shape() != z2.shape()) throw DimensionError("contrastive_loss: view shapes differ");
  if (temperature <= 0.0) throw ArgumentError("contrastive_loss: temperature must be positive");
  const std::size_t b = z1.rows();
  const ad::Var sim = ad::scale(ad::matmul(ad::normalize_rows(z1), ad::transpose(ad::normalize_rows(z2))), 1.0 / temperature);
  std::vector<Real> eye(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) eye[i * b + i] = 1.0;
  const ad::Var diag = ad::row_sum(ad::mul(sim, z1.tape().constant({b, b}, std::move(eye))));
  // Both directions: view 1 against all of view 2 and vice versa.
  const ad::Var forward = ad::sub(ad::log_sum_exp_rows(sim), diag);
  const ad::Var backward = ad::sub(ad::log_sum_exp_rows(ad::transpose(sim)), diag);
  return ad::scale(ad::add(ad::mean(forward), ad::mean(backward)), 0.5);
}

}  // namespace ultradp
