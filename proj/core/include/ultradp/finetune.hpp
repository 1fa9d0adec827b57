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
#include <span>
#include <vector>

#include "ultradp/autodiff.hpp"
#include "ultradp/graph.hpp"
#include "ultradp/model.hpp"
#include "ultradp/prompt.hpp"
#include "ultradp/reachability.hpp"

namespace ultradp {

/// Mean over rows of -log softmax_c(S(h, e_c))[label], S the cosine
/// similarity. reps [B x d'], prototypes [C x d'].
ad::Var downstream_loss(ad::Var reps, std::span<const int> labels, ad::Var prototypes);
Real downstream_loss(const DenseMatrix& reps, std::span<const int> labels, const DenseMatrix& prototypes);

/// Index of the most similar prototype per row (ties: lowest class).
std::vector<int> predict_classes(const DenseMatrix& reps, const DenseMatrix& prototypes);

/// Fraction of equal entries; equals micro-averaged F1 for single-label data.
Real micro_f1(std::span<const int> predicted, std::span<const int> truth);

/// Rank-statistic AUC with tie averaging.
Real auc(std::span<const Real> positive_scores, std::span<const Real> negative_scores);

struct FinetuneConfig {
  Real lr = 0.001;
  Real weight_decay = 0.01;
  std::size_t max_epochs = 200;
  std::size_t patience = 50;
  std::size_t sampler_budget = 512;
  SamplerKind sampler = SamplerKind::kLadies;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DownstreamData {
  const Graph& graph;
  const ReachabilityCache& cache;
  const AnchorSet& anchors;
  std::span<const NodeId> test_nodes;
};

struct FinetuneResult {
  std::size_t init_task = 0;
  Real val_f1 = 0.0;
  Real test_f1 = 0.0;
  Real val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  Model model;
  ad::Tensor task_row;    // [1 x d]
  ad::Tensor prototypes;  // [C x d']
};

/// Fine-tunes a copy of `pretrained` on kshot.train_nodes with the
/// downstream task row initialized from task_table row `init_task`, keeping
/// the state with the lowest validation loss.
FinetuneResult finetune_one(const Model& pretrained, const DownstreamData& data, const KShotSample& kshot,
                            std::size_t init_task, const FinetuneConfig& config);

/// Index of the best score; ties go to the lowest index.
std::size_t select_best(std::span<const Real> scores);

struct TransferReport {
  std::vector<FinetuneResult> candidates;  // one per init task, in task order
  std::size_t chosen = 0;
  Real test_f1 = 0.0;
};

/// Fine-tunes once per pre-trained task embedding and keeps the candidate
/// with the best validation Micro-F1. `jobs` > 1 runs candidates on threads.
TransferReport transferability_test(const Model& pretrained, const DownstreamData& data, const KShotSample& kshot,
                                    const FinetuneConfig& config, std::size_t jobs = 1);

/// Representations of `nodes` from the subgraph sampled around them, with
/// every listed node prompted by `task_row`.
DenseMatrix embed_nodes(Model& model, const DownstreamData& data, std::span<const NodeId> nodes,
                        std::span<const Real> task_row, std::size_t budget, SamplerKind sampler, std::uint64_t seed);

/// Link-prediction probe without fine-tuning. Held-out edges are positives;
/// an equal number of uniform non-edges (absent from both the training
/// graph and the held-out set) are negatives. Pairs are scored by cosine
/// similarity of full-graph representations with every endpoint prompted by
/// task_table row `task_index`.
Real link_auc(Model& model, const Graph& train_graph, std::span<const Edge> held_out, const ReachabilityCache& cache,
              const AnchorSet& anchors, std::size_t task_index, std::uint64_t seed);

}  // namespace ultradp
