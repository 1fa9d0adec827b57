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

#include "ultradp/model.hpp"

namespace ultradp {

NamedTensors Model::named_tensors() {
  NamedTensors out = gnn.named_tensors();
  for (auto& entry : prompt.named_tensors()) out.push_back(std::move(entry));
  return out;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.gnn.validate();
  if (spec.feature_dim < 1) throw ConfigError("model: feature_dim must be >= 1");
  if (spec.num_tasks < 1) throw ConfigError("model: need at least one task embedding");
  if (spec.num_anchors < 1) throw ConfigError("model: need at least one anchor");
  Model model;
  model.spec = spec;
  model.gnn = init_gnn_params(spec.gnn, derive_seed(seed, "model-gnn"));
  model.prompt = init_prompt_params(spec.num_tasks, spec.feature_dim, spec.num_anchors, spec.gnn.hidden_dim,
                                    spec.w_pos, derive_seed(seed, "model-prompt"));
  return model;
}

ad::Var encode(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const Graph& graph,
               std::span<const NodeId> original_ids, std::span<const NodeId> prompt_targets, ad::Var task_row,
               const ReachabilityCache& cache, const AnchorSet& anchors) {
  const std::size_t n = graph.num_nodes();
  if (!original_ids.empty() && original_ids.size() != n) throw DimensionError("encode: id map size != node count");
  const ad::Var x = tape.constant(graph.features());
  if (!model.spec.use_prompts || prompt_targets.empty()) {
    const std::vector<char> flags(n, 0);
    const ad::Var h0 = align_features(x, flags, prompt);
    return gnn_forward(tape, MessageIndex::build(graph), h0, model.gnn, model.spec.gnn);
  }
  std::vector<NodeId> lookup(prompt_targets.begin(), prompt_targets.end());
  if (!original_ids.empty()) {
    for (auto& v : lookup) v = original_ids[v];
  }
  const ad::Var pos = position_embedding(tape, position_encodings(cache, anchors, lookup), prompt);
  const ad::Var features = ad::concat_rows(x, prompt_features(task_row, pos, prompt.w_pos));
  const Graph augmented = attach_prompt_nodes(graph, prompt_targets);
  std::vector<char> flags(augmented.num_nodes(), 0);
  std::fill(flags.begin() + static_cast<std::ptrdiff_t>(n), flags.end(), 1);
  const ad::Var h0 = align_features(features, flags, prompt);
  return gnn_forward(tape, MessageIndex::build(augmented), h0, model.gnn, model.spec.gnn);
}

DenseMatrix embed_graph(Model& model, const Graph& graph, std::span<const NodeId> prompt_targets,
                        std::span<const Real> task_row, const ReachabilityCache& cache, const AnchorSet& anchors) {
  ad::Tape tape;
  const BoundPrompt prompt = bind_prompt_constant(tape, model.prompt);
  const ad::Var row = tape.constant({1, task_row.size()}, std::vector<Real>(task_row.begin(), task_row.end()));
  const ad::Var h = encode(tape, model, prompt, graph, {}, prompt_targets, row, cache, anchors);
  const std::size_t n = graph.num_nodes();
  const std::size_t d = h.cols();
  const auto values = h.value();
  return DenseMatrix(n, d, std::vector<Real>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n * d)));
}

}  // namespace ultradp
