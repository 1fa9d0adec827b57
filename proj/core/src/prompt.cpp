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

#include "ultradp/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ultradp {

AnchorSet select_anchors(const ReachabilityCache& cache, std::size_t step, std::size_t count) {
  const std::size_t n = cache.num_nodes();
  if (count < 1 || count > n) {
    throw ArgumentError("select_anchors: anchor count " + std::to_string(count) + " outside [1, " + std::to_string(n) + "]");
  }
  const auto totals = cache.total_reach(step);
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](NodeId a, NodeId b) { return totals[a] > totals[b] || (totals[a] == totals[b] && a < b); });
  order.resize(count);
  return AnchorSet{std::move(order), step};
}

std::vector<Real> position_encoding(const ReachabilityCache& cache, const AnchorSet& anchors, NodeId i, std::size_t t) {
  std::vector<Real> enc(anchors.size());
  for (std::size_t k = 0; k < anchors.size(); ++k) enc[k] = cache.reach(i, anchors.ids[k], t);
  return enc;
}

DenseMatrix position_encodings(const ReachabilityCache& cache, const AnchorSet& anchors, std::span<const NodeId> nodes) {
  const auto& p = cache.power(anchors.step);
  // slot[j] = anchor position of node j, or -1.
  std::vector<std::int64_t> slot(cache.num_nodes(), -1);
  for (std::size_t k = 0; k < anchors.size(); ++k) slot[anchors.ids[k]] = static_cast<std::int64_t>(k);
  DenseMatrix enc(nodes.size(), anchors.size());
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    if (nodes[r] >= cache.num_nodes()) throw ArgumentError("position_encodings: node id out of range");
    const auto cols = p.row_columns(nodes[r]);
    const auto vals = p.row_values(nodes[r]);
    for (std::size_t q = 0; q < cols.size(); ++q) {
      if (const auto s = slot[cols[q]]; s >= 0) enc(r, static_cast<std::size_t>(s)) = vals[q];
    }
  }
  return enc;
}

DenseMatrix standardize_encodings(const DenseMatrix& encodings, Real epsilon) {
  DenseMatrix out = encodings;
  const auto m = static_cast<Real>(encodings.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    Real mean = 0.0;
    for (Real v : row) mean += v;
    mean /= m;
    Real var = 0.0;
    for (Real v : row) var += (v - mean) * (v - mean);
    const Real sigma = std::sqrt(var / m);  // population standard deviation
    for (auto& v : row) v /= sigma + epsilon;
  }
  return out;
}

std::vector<std::pair<std::string, ad::Tensor*>> PromptParams::named_tensors() {
  return {{"prompt.task_table", &task_table},
          {"prompt.pos_weight", &pos_weight},
          {"prompt.pos_bias", &pos_bias},
          {"prompt.align_prompt_weight", &align_prompt_weight},
          {"prompt.align_prompt_bias", &align_prompt_bias},
          {"prompt.align_normal_weight", &align_normal_weight},
          {"prompt.align_normal_bias", &align_normal_bias}};
}

PromptParams init_prompt_params(std::size_t num_tasks, std::size_t feature_dim, std::size_t num_anchors,
                                std::size_t hidden_dim, Real w_pos, std::uint64_t seed) {
  auto uniform = [](ad::Shape shape, std::size_t fan_in, Rng& rng) {
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
    ad::Tensor t(shape);
    for (auto& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
  };
  PromptParams p;
  Rng task_rng(seed, "prompt-task");
  p.task_table = ad::Tensor({num_tasks, feature_dim});
  for (auto& v : p.task_table.values()) v = task_rng.normal();
  Rng pos_rng(seed, "prompt-pos");
  p.pos_weight = uniform({feature_dim, num_anchors}, num_anchors, pos_rng);
  p.pos_bias = ad::Tensor({1, feature_dim}, 0.0);
  Rng align_rng(seed, "prompt-align");
  p.align_prompt_weight = uniform({feature_dim, hidden_dim}, feature_dim, align_rng);
  p.align_prompt_bias = ad::Tensor({1, hidden_dim}, 0.0);
  p.align_normal_weight = uniform({feature_dim, hidden_dim}, feature_dim, align_rng);
  p.align_normal_bias = ad::Tensor({1, hidden_dim}, 0.0);
  p.w_pos = w_pos;
  return p;
}

BoundPrompt bind_prompt(ad::Tape& tape, PromptParams& params) {
  return BoundPrompt{tape.param(params.task_table),          tape.param(params.pos_weight),
                     tape.param(params.pos_bias),            tape.param(params.align_prompt_weight),
                     tape.param(params.align_prompt_bias),   tape.param(params.align_normal_weight),
                     tape.param(params.align_normal_bias),   params.w_pos,
                     params.epsilon};
}

BoundPrompt bind_prompt_constant(ad::Tape& tape, const PromptParams& params) {
  return BoundPrompt{tape.constant(params.task_table),          tape.constant(params.pos_weight),
                     tape.constant(params.pos_bias),            tape.constant(params.align_prompt_weight),
                     tape.constant(params.align_prompt_bias),   tape.constant(params.align_normal_weight),
                     tape.constant(params.align_normal_bias),   params.w_pos,
                     params.epsilon};
}

ad::Var position_embedding(ad::Tape& tape, const DenseMatrix& encodings, const BoundPrompt& prompt) {
  if (encodings.cols != prompt.pos_weight.cols()) {
    throw DimensionError("position_embedding: encoding width " + std::to_string(encodings.cols) + " != anchor count " +
                         std::to_string(prompt.pos_weight.cols()));
  }
  const ad::Var scaled = tape.constant(standardize_encodings(encodings, prompt.epsilon));
  const ad::Var projected = ad::matmul(scaled, ad::transpose(prompt.pos_weight));
  return ad::tanh(ad::add_bias(projected, prompt.pos_bias));
}

std::vector<Real> position_embedding(std::span<const Real> encoding, const PromptParams& params) {
  ad::Tape tape;
  const BoundPrompt bound = bind_prompt_constant(tape, params);
  DenseMatrix enc(1, encoding.size(), std::vector<Real>(encoding.begin(), encoding.end()));
  const auto out = position_embedding(tape, enc, bound).value();
  return {out.begin(), out.end()};
}

std::vector<Real> prompt_feature(std::span<const Real> task_row, std::span<const Real> pos_emb, Real w_pos) {
  if (task_row.size() != pos_emb.size()) {
    throw DimensionError("prompt_feature: task width " + std::to_string(task_row.size()) + " != position width " +
                         std::to_string(pos_emb.size()));
  }
  std::vector<Real> out(task_row.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = task_row[i] + w_pos * pos_emb[i];
  return out;
}

ad::Var prompt_features(ad::Var task_row, ad::Var pos_emb, Real w_pos) {
  if (task_row.rows() != 1 || task_row.cols() != pos_emb.cols()) {
    throw DimensionError("prompt_features: task row " + ad::to_string(task_row.shape()) + " vs position " +
                         ad::to_string(pos_emb.shape()));
  }
  const std::vector<std::uint32_t> broadcast(pos_emb.rows(), 0);
  return ad::add(ad::gather_rows(task_row, broadcast), ad::scale(pos_emb, w_pos));
}

ad::Var align_features(ad::Var features, std::span<const char> is_prompt, const BoundPrompt& prompt) {
  if (is_prompt.size() != features.rows()) throw DimensionError("align_features: flag count != row count");
  std::vector<std::uint32_t> normal_rows, prompt_rows;
  for (std::size_t i = 0; i < is_prompt.size(); ++i) (is_prompt[i] ? prompt_rows : normal_rows).push_back(static_cast<std::uint32_t>(i));
  const std::size_t n = features.rows();
  auto transform = [&](const std::vector<std::uint32_t>& rows, ad::Var w, ad::Var b) {
    return ad::scatter_add_rows(ad::add_bias(ad::matmul(ad::gather_rows(features, rows), w), b), rows, n);
  };
  if (prompt_rows.empty()) return transform(normal_rows, prompt.align_normal_weight, prompt.align_normal_bias);
  if (normal_rows.empty()) return transform(prompt_rows, prompt.align_prompt_weight, prompt.align_prompt_bias);
  return ad::add(transform(normal_rows, prompt.align_normal_weight, prompt.align_normal_bias),
                 transform(prompt_rows, prompt.align_prompt_weight, prompt.align_prompt_bias));
}

DenseMatrix align_features(const DenseMatrix& features, std::span<const char> is_prompt, const PromptParams& params) {
  ad::Tape tape;
  const BoundPrompt bound = bind_prompt_constant(tape, params);
  const ad::Var out = align_features(tape.constant(features), is_prompt, bound);
  return DenseMatrix(out.rows(), out.cols(), std::vector<Real>(out.value().begin(), out.value().end()));
}

namespace {

void check_targets(std::span<const NodeId> targets, std::size_t n) {
  std::vector<char> seen(n, 0);
  for (NodeId t : targets) {
    if (t >= n) throw ArgumentError("prompt target " + std::to_string(t) + " out of range");
    if (seen[t]) throw ArgumentError("duplicate prompt target " + std::to_string(t));
    seen[t] = 1;
  }
}

}  // namespace

Graph attach_prompt_nodes(const Graph& graph, std::span<const NodeId> targets, const DenseMatrix* prompt_rows) {
  const std::size_t n = graph.num_nodes();
  check_targets(targets, n);
  const std::size_t d = graph.feature_dim();
  if (prompt_rows != nullptr && (prompt_rows->rows != targets.size() || prompt_rows->cols != d)) {
    throw DimensionError("attach_prompt_nodes: prompt feature block has wrong shape");
  }
  std::vector<std::int64_t> prompt_of(n, -1);
  for (std::size_t i = 0; i < targets.size(); ++i) prompt_of[targets[i]] = static_cast<std::int64_t>(n + i);

  const std::size_t total = n + targets.size();
  std::vector<std::uint64_t> offsets(total + 1, 0);
  std::vector<NodeId> adj;
  adj.reserve(graph.num_adjacency_entries() + 2 * targets.size());
  for (std::size_t v = 0; v < n; ++v) {
    const auto nbrs = graph.neighbors(static_cast<NodeId>(v));
    adj.insert(adj.end(), nbrs.begin(), nbrs.end());
    // Prompt ids exceed every original id, so appending keeps rows sorted.
    if (prompt_of[v] >= 0) adj.push_back(static_cast<NodeId>(prompt_of[v]));
    offsets[v + 1] = adj.size();
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    adj.push_back(targets[i]);
    offsets[n + i + 1] = adj.size();
  }
  DenseMatrix features(total, d);
  std::copy(graph.features().data.begin(), graph.features().data.end(), features.data.begin());
  if (prompt_rows != nullptr) {
    std::copy(prompt_rows->data.begin(), prompt_rows->data.end(), features.data.begin() + static_cast<std::ptrdiff_t>(n * d));
  }
  return Graph::from_csr(std::move(offsets), std::move(adj), std::move(features));
}

PromptedGraph prompt_graph(const Graph& graph, std::span<const NodeId> targets, std::span<const Real> task_row,
                           const ReachabilityCache& cache, const AnchorSet& anchors, const PromptParams& params,
                           std::span<const NodeId> original_ids) {
  if (task_row.size() != graph.feature_dim()) {
    throw DimensionError("prompt_graph: task row width " + std::to_string(task_row.size()) + " != feature dim " +
                         std::to_string(graph.feature_dim()));
  }
  const std::size_t n = graph.num_nodes();
  check_targets(targets, n);
  if (!original_ids.empty() && original_ids.size() != n) throw DimensionError("prompt_graph: remap size != node count");

  std::vector<NodeId> lookup(targets.begin(), targets.end());
  if (!original_ids.empty()) {
    for (auto& v : lookup) v = original_ids[v];
  }
  DenseMatrix rows(targets.size(), graph.feature_dim());
  if (!targets.empty()) {
    ad::Tape tape;
    const BoundPrompt bound = bind_prompt_constant(tape, params);
    const ad::Var pos = position_embedding(tape, position_encodings(cache, anchors, lookup), bound);
    const ad::Var task = tape.constant({1, task_row.size()}, std::vector<Real>(task_row.begin(), task_row.end()));
    const auto values = prompt_features(task, pos, params.w_pos).value();
    std::copy(values.begin(), values.end(), rows.data.begin());
  }
  PromptedGraph out;
  out.graph = attach_prompt_nodes(graph, targets, &rows);
  out.prompt_ids.resize(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) out.prompt_ids[i] = static_cast<NodeId>(n + i);
  return out;
}

}  // namespace ultradp
