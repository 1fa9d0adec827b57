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
#include <functional>
#include <vector>

#include "ultradp/checkpoint.hpp"
#include "ultradp/gnn.hpp"
#include "ultradp/graph.hpp"
#include "ultradp/model.hpp"
#include "ultradp/pretext.hpp"
#include "ultradp/prompt.hpp"
#include "ultradp/reachability.hpp"

namespace ultradp {

struct TaskSpec {
  TaskKind kind = TaskKind::kEdge;
  Real probability = 1.0;
};

struct TrainConfig {
  std::vector<TaskSpec> tasks{{TaskKind::kEdge, 0.5}, {TaskKind::kKnn, 0.5}};
  std::size_t batch_size = 256;
  Real lr = 0.001;
  Real weight_decay = 0.01;
  std::size_t max_epochs = 500;
  std::size_t patience = 50;
  std::size_t position_step = 9;  // t
  std::size_t knn_step = 6;       // t'
  std::size_t num_anchors = 0;    // m; 0 selects ceil(0.01 n)
  Real w_pos = 0.1;
  Real edge_margin = 0.5;         // alpha
  Real knn_margin = 1.0;          // alpha'
  std::size_t knn_k = 5;
  Real cl_ratio = 0.2;
  Real cl_temperature = 0.5;
  GnnConfig gnn;
  std::size_t sampler_budget = 512;
  SamplerKind sampler = SamplerKind::kLadies;
  bool use_prompts = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  std::size_t resolved_anchor_count(std::size_t num_nodes) const;
  std::vector<std::string> task_keys() const;
};

/// Largest walk step the trainer reads from the cache.
std::size_t required_cache_steps(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  std::vector<std::size_t> task_steps;   // steps per task this epoch
  std::vector<Real> task_train_loss;     // mean training loss per task (0 if unused)
  std::vector<Real> task_val_loss;
  Real validation_loss = 0.0;
  bool improved = false;
};

struct PretrainResult {
  ModelCheckpoint checkpoint;  // lowest validation loss
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Everything a pretext-task loss needs besides the parameters.
struct TaskContext {
  const Graph& graph;
  const ReachabilityCache& cache;
  const AnchorSet& anchors;
  const TrainConfig& config;
};

/// Loss of task `task_index` on a batch whose targets are drawn from `pool`.
ad::Var pretext_loss(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const TaskContext& ctx,
                     std::size_t task_index, std::span<const NodeId> pool, std::uint64_t seed);

/// Hybrid pre-training with early stopping on a 10% holdout of
/// split.pretrain_nodes. The graph must be the one the cache was built on.
PretrainResult pretrain(const Graph& graph, const SplitSpec& split, const ReachabilityCache& cache,
                        const AnchorSet& anchors, const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace ultradp
