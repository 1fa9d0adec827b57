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

#include "ultradp/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ultradp/optimizer.hpp"

namespace ultradp {

void TrainConfig::validate() const {
  if (tasks.empty()) throw ConfigError("train: task list is empty");
  Real total = 0.0;
  for (const auto& t : tasks) {
    if (!(t.probability >= 0.0)) throw ConfigError("train: task probability must be non-negative");
    total += t.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("train: task probabilities sum to " + std::to_string(total) + ", not 1");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t j = i + 1; j < tasks.size(); ++j) {
      if (tasks[i].kind == tasks[j].kind) throw ConfigError("train: task '" + std::string(task_key(tasks[i].kind)) + "' listed twice");
    }
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience > max_epochs) throw ConfigError("train: patience exceeds max_epochs");
  if (lr < 0.0 || weight_decay < 0.0) throw ConfigError("train: lr and weight_decay must be non-negative");
  if (position_step < 1 || knn_step < 1) throw ConfigError("train: walk steps must be >= 1");
  if (knn_k < 1) throw ConfigError("train: knn k must be >= 1");
  if (cl_ratio < 0.0 || cl_ratio > 1.0) throw ConfigError("train: cl augment ratio outside [0, 1]");
  if (cl_temperature <= 0.0) throw ConfigError("train: cl temperature must be positive");
  if (sampler_budget < 1) throw ConfigError("train: sampler budget must be >= 1");
  gnn.validate();
}

std::size_t TrainConfig::resolved_anchor_count(std::size_t num_nodes) const {
  if (num_anchors > 0) return num_anchors;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.01 * static_cast<Real>(num_nodes))));
}

std::vector<std::string> TrainConfig::task_keys() const {
  std::vector<std::string> keys;
  for (const auto& t : tasks) keys.emplace_back(task_key(t.kind));
  return keys;
}

std::size_t required_cache_steps(const TrainConfig& config) {
  std::size_t steps = config.position_step;
  for (const auto& t : config.tasks) {
    if (t.kind == TaskKind::kKnn) steps = std::max(steps, config.knn_step);
  }
  return steps;
}

namespace {

// Up to `count` distinct entries of `pool` (all of it when smaller).
std::vector<NodeId> draw_distinct(std::span<const NodeId> pool, std::size_t count, Rng& rng) {
  std::vector<NodeId> out(pool.begin(), pool.end());
  const std::size_t take = std::min(count, out.size());
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(out.size() - i));
    std::swap(out[i], out[j]);
  }
  out.resize(take);
  return out;
}

// Sorted distinct union plus a node -> slot lookup.
struct TargetSet {
  std::vector<NodeId> nodes;
  std::vector<std::uint32_t> slot;

  TargetSet(std::vector<NodeId> raw, std::size_t n) : slot(n, 0) {
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    nodes = std::move(raw);
    for (std::size_t i = 0; i < nodes.size(); ++i) slot[nodes[i]] = static_cast<std::uint32_t>(i);
  }
  std::vector<std::uint32_t> slots(const std::vector<NodeId>& ids) const {
    std::vector<std::uint32_t> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = slot[ids[i]];
    return out;
  }
};

std::vector<std::uint32_t> iota_slots(std::size_t count) {
  std::vector<std::uint32_t> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = static_cast<std::uint32_t>(i);
  return s;
}

// Encodes the subgraph around `targets` (which occupy its first slots) with
// every target prompted; returns the target rows.
ad::Var encode_targets(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const TaskContext& ctx,
                       const Graph& graph, std::span<const NodeId> original_ids, std::size_t num_targets,
                       ad::Var task_row) {
  const auto slots = iota_slots(num_targets);
  const ad::Var h = encode(tape, model, prompt, graph, original_ids, slots, task_row, ctx.cache, ctx.anchors);
  return ad::gather_rows(h, slots);
}

ad::Var edge_task(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const TaskContext& ctx, ad::Var task_row,
                  std::span<const NodeId> pool, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  const EdgeBatch batch = sample_edge_batch(ctx.graph, cfg.batch_size, derive_seed(seed, "edge"), pool, cfg.edge_margin);
  std::vector<NodeId> v, vp, vn, all;
  for (const auto& t : batch.triplets) {
    v.push_back(t.node);
    vp.push_back(t.positive);
    vn.push_back(t.negative);
    all.insert(all.end(), {t.node, t.positive, t.negative});
  }
  const TargetSet targets(std::move(all), ctx.graph.num_nodes());
  const Subgraph sub = sample_subgraph(ctx.graph, targets.nodes, cfg.gnn.num_layers, cfg.sampler_budget,
                                       derive_seed(seed, "edge-subgraph"), cfg.sampler);
  const ad::Var h = encode_targets(tape, model, prompt, ctx, sub.graph, sub.original_ids, targets.nodes.size(), task_row);
  return edge_loss(ad::gather_rows(h, targets.slots(v)), ad::gather_rows(h, targets.slots(vp)),
                   ad::gather_rows(h, targets.slots(vn)), cfg.edge_margin);
}

ad::Var knn_task(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const TaskContext& ctx, ad::Var task_row,
                 std::span<const NodeId> pool, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  const auto& p = ctx.cache.power(cfg.knn_step);
  std::vector<NodeId> eligible;
  for (NodeId v : pool) {
    if (!p.row_columns(v).empty()) eligible.push_back(v);
  }
  if (eligible.empty()) throw SamplingError("knn task: no pool node reaches any node at step " + std::to_string(cfg.knn_step));
  Rng rng(seed, "knn-anchors");
  const auto anchors = draw_distinct(eligible, cfg.batch_size, rng);
  std::vector<NodeId> pos, neg, all(anchors);
  for (std::size_t b = 0; b < anchors.size(); ++b) {
    const KnnBatch kb = sample_knn_batch(ctx.cache, anchors[b], cfg.knn_k, cfg.knn_step, derive_seed(seed, "knn", b), cfg.knn_margin);
    pos.insert(pos.end(), kb.positives.begin(), kb.positives.end());
    neg.insert(neg.end(), kb.negatives.begin(), kb.negatives.end());
  }
  all.insert(all.end(), pos.begin(), pos.end());
  all.insert(all.end(), neg.begin(), neg.end());
  const TargetSet targets(std::move(all), ctx.graph.num_nodes());
  const Subgraph sub = sample_subgraph(ctx.graph, targets.nodes, cfg.gnn.num_layers, cfg.sampler_budget,
                                       derive_seed(seed, "knn-subgraph"), cfg.sampler);
  const ad::Var h = encode_targets(tape, model, prompt, ctx, sub.graph, sub.original_ids, targets.nodes.size(), task_row);
  return knn_loss(ad::gather_rows(h, targets.slots(anchors)), ad::gather_rows(h, targets.slots(pos)),
                  ad::gather_rows(h, targets.slots(neg)), cfg.knn_k, cfg.knn_margin);
}

ad::Var contrastive_task(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const TaskContext& ctx,
                         ad::Var task_row, std::span<const NodeId> pool, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  Rng rng(seed, "cl-anchors");
  auto anchors = draw_distinct(pool, cfg.batch_size, rng);
  std::sort(anchors.begin(), anchors.end());
  const Subgraph sub = sample_subgraph(ctx.graph, anchors, cfg.gnn.num_layers, cfg.sampler_budget,
                                       derive_seed(seed, "cl-subgraph"), cfg.sampler);
  const Graph view1 = augment_view(sub.graph, cfg.cl_ratio, derive_seed(seed, "cl-view", 1));
  const Graph view2 = augment_view(sub.graph, cfg.cl_ratio, derive_seed(seed, "cl-view", 2));
  const ad::Var z1 = encode_targets(tape, model, prompt, ctx, view1, sub.original_ids, anchors.size(), task_row);
  const ad::Var z2 = encode_targets(tape, model, prompt, ctx, view2, sub.original_ids, anchors.size(), task_row);
  return contrastive_loss(z1, z2, cfg.cl_temperature);
}

Model copy_model(Model& src) {
  Model out;
  out.spec = src.spec;
  out.gnn = src.gnn;
  out.prompt = src.prompt;
  return out;
}

}  // namespace

ad::Var pretext_loss(ad::Tape& tape, Model& model, const BoundPrompt& prompt, const TaskContext& ctx,
                     std::size_t task_index, std::span<const NodeId> pool, std::uint64_t seed) {
  if (task_index >= ctx.config.tasks.size()) throw ArgumentError("pretext_loss: task index out of range");
  const ad::Var row = ad::gather_rows(prompt.task_table, std::vector<std::uint32_t>{static_cast<std::uint32_t>(task_index)});
  switch (ctx.config.tasks[task_index].kind) {
    case TaskKind::kEdge: return edge_task(tape, model, prompt, ctx, row, pool, seed);
    case TaskKind::kKnn: return knn_task(tape, model, prompt, ctx, row, pool, seed);
    case TaskKind::kContrastive: return contrastive_task(tape, model, prompt, ctx, row, pool, seed);
  }
  throw ArgumentError("pretext_loss: unknown task");
}

PretrainResult pretrain(const Graph& graph, const SplitSpec& split, const ReachabilityCache& cache,
                        const AnchorSet& anchors, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (cache.num_nodes() != graph.num_nodes()) throw ConfigError("pretrain: cache and graph sizes differ");
  if (cache.max_step() < required_cache_steps(config)) {
    throw ConfigError("pretrain: cache holds " + std::to_string(cache.max_step()) + " steps, need " +
                      std::to_string(required_cache_steps(config)));
  }
  if (anchors.step != config.position_step) throw ConfigError("pretrain: anchors were selected at a different step");
  if (split.pretrain_nodes.size() < 2) throw ConfigError("pretrain: need at least two pre-training nodes");

  // Fixed validation holdout: 10% of the pre-training nodes.
  std::vector<NodeId> shuffled = split.pretrain_nodes;
  Rng holdout_rng(config.seed, "pretrain-holdout");
  shuffle(shuffled, holdout_rng);
  const std::size_t num_val = std::max<std::size_t>(1, shuffled.size() / 10);
  std::vector<NodeId> val_pool(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(num_val));
  std::vector<NodeId> train_pool(shuffled.begin() + static_cast<std::ptrdiff_t>(num_val), shuffled.end());
  std::sort(val_pool.begin(), val_pool.end());
  std::sort(train_pool.begin(), train_pool.end());

  ModelSpec spec;
  spec.gnn = config.gnn;
  spec.feature_dim = graph.feature_dim();
  spec.num_tasks = config.tasks.size();
  spec.num_anchors = anchors.size();
  spec.w_pos = config.w_pos;
  spec.use_prompts = config.use_prompts;
  Model model = init_model(spec, config.seed);
  const NamedTensors params = model.named_tensors();
  OptimizerState opt = OptimizerState::for_params(params);
  const TaskContext ctx{graph, cache, anchors, config};
  const std::size_t num_tasks = config.tasks.size();

  auto validation_losses = [&](Model& m) {
    std::vector<Real> losses(num_tasks, 0.0);
    for (std::size_t j = 0; j < num_tasks; ++j) {
      if (config.tasks[j].probability == 0.0) continue;
      ad::Tape tape;
      const BoundPrompt bound = bind_prompt_constant(tape, m.prompt);
      losses[j] = pretext_loss(tape, m, bound, ctx, j, val_pool, derive_seed(config.seed, "validation", j)).item();
    }
    return losses;
  };

  // Pre-flight: every task with positive probability must be runnable.
  for (std::size_t j = 0; j < num_tasks; ++j) {
    if (config.tasks[j].probability == 0.0) continue;
    try {
      ad::Tape tape;
      const BoundPrompt bound = bind_prompt_constant(tape, model.prompt);
      pretext_loss(tape, model, bound, ctx, j, val_pool, derive_seed(config.seed, "validation", j));
    } catch (const SamplingError& e) {
      throw ConfigError("task '" + std::string(task_key(config.tasks[j].kind)) + "' cannot run on this graph: " + e.what());
    }
  }

  std::vector<Real> cumulative(num_tasks);
  Real acc = 0.0;
  for (std::size_t j = 0; j < num_tasks; ++j) cumulative[j] = (acc += config.tasks[j].probability);

  const std::size_t steps_per_epoch = (split.pretrain_nodes.size() + config.batch_size - 1) / config.batch_size;
  PretrainResult result;
  Real best = std::numeric_limits<Real>::infinity();
  Model best_model = copy_model(model);
  OptimizerState best_opt = opt;
  std::size_t since_best = 0;
  std::uint64_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.task_steps.assign(num_tasks, 0);
    rec.task_train_loss.assign(num_tasks, 0.0);
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++global_step) {
      Rng pick(config.seed, "task-pick", global_step);
      const Real u = pick.uniform();
      std::size_t j = 0;
      while (j + 1 < num_tasks && (u >= cumulative[j] || config.tasks[j].probability == 0.0)) ++j;

      for (auto& [name, t] : params) t->zero_grad();
      ad::Tape tape;
      const BoundPrompt bound = bind_prompt(tape, model.prompt);
      const ad::Var loss = pretext_loss(tape, model, bound, ctx, j, train_pool, derive_seed(config.seed, "step", global_step));
      const Real value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite " + std::string(task_key(config.tasks[j].kind)) + " loss at epoch " +
                            std::to_string(epoch) + " step " + std::to_string(s));
      }
      tape.backward(loss);
      adamw_step(params, opt, config.lr, config.weight_decay);
      rec.task_steps[j] += 1;
      rec.task_train_loss[j] += value;
    }
    for (std::size_t j = 0; j < num_tasks; ++j) {
      if (rec.task_steps[j] > 0) rec.task_train_loss[j] /= static_cast<Real>(rec.task_steps[j]);
    }
    rec.task_val_loss = validation_losses(model);
    for (std::size_t j = 0; j < num_tasks; ++j) rec.validation_loss += config.tasks[j].probability * rec.task_val_loss[j];
    if (!std::isfinite(rec.validation_loss)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));

    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      best_model = copy_model(model);
      best_opt = opt;
      result.best_epoch = epoch;
      rec.improved = true;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (since_best >= config.patience && config.patience > 0) break;
  }

  result.checkpoint = make_checkpoint(best_model, &best_opt);
  result.checkpoint.tasks = config.task_keys();
  result.checkpoint.anchors = anchors;
  result.checkpoint.validation_loss = best;
  result.checkpoint.epochs_run = result.log.size();
  return result;
}

}  // namespace ultradp
