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

#include "ultradp/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "ultradp/optimizer.hpp"

namespace ultradp {

namespace {

std::vector<Real> one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<Real> out(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ArgumentError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    out[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return out;
}

ad::Var cosine_matrix(ad::Var reps, ad::Var prototypes) {
  return ad::matmul(ad::normalize_rows(reps), ad::transpose(ad::normalize_rows(prototypes)));
}

// Representations of `nodes` (first slots of a sampled subgraph), prompted
// with `task_row`.
ad::Var encode_nodes(ad::Tape& tape, Model& model, const BoundPrompt& prompt, ad::Var task_row,
                     const DownstreamData& data, std::span<const NodeId> nodes, std::size_t budget,
                     SamplerKind sampler, std::uint64_t seed) {
  const Subgraph sub = sample_subgraph(data.graph, nodes, model.spec.gnn.num_layers, budget, seed, sampler);
  std::vector<std::uint32_t> slots(nodes.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<std::uint32_t>(i);
  const ad::Var h = encode(tape, model, prompt, sub.graph, sub.original_ids, slots, task_row, data.cache, data.anchors);
  return ad::gather_rows(h, slots);
}

DenseMatrix to_dense(ad::Var v) {
  return DenseMatrix(v.rows(), v.cols(), std::vector<Real>(v.value().begin(), v.value().end()));
}

std::vector<int> labels_of(const Graph& graph, std::span<const NodeId> nodes) {
  std::vector<int> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) out.push_back(graph.labels()[v]);
  return out;
}

}  // namespace

ad::Var downstream_loss(ad::Var reps, std::span<const int> labels, ad::Var prototypes) {
  if (labels.size() != reps.rows()) throw DimensionError("downstream_loss: label count != representation rows");
  if (reps.cols() != prototypes.cols()) throw DimensionError("downstream_loss: prototype width mismatch");
  const std::size_t classes = prototypes.rows();
  const ad::Var s = cosine_matrix(reps, prototypes);
  const ad::Var picked = ad::row_sum(ad::mul(s, reps.tape().constant({labels.size(), classes}, one_hot(labels, classes))));
  return ad::mean(ad::sub(ad::log_sum_exp_rows(s), picked));
}

Real downstream_loss(const DenseMatrix& reps, std::span<const int> labels, const DenseMatrix& prototypes) {
  ad::Tape tape;
  return downstream_loss(tape.constant(reps), labels, tape.constant(prototypes)).item();
}

std::vector<int> predict_classes(const DenseMatrix& reps, const DenseMatrix& prototypes) {
  ad::Tape tape;
  const ad::Var s = cosine_matrix(tape.constant(reps), tape.constant(prototypes));
  const auto values = s.value();
  const std::size_t c = prototypes.rows;
  std::vector<int> out(reps.rows);
  for (std::size_t i = 0; i < reps.rows; ++i) {
    const auto row = values.subspan(i * c, c);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Real micro_f1(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty()) throw ArgumentError("micro_f1: empty input");
  if (predicted.size() != truth.size()) throw DimensionError("micro_f1: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<Real>(hits) / static_cast<Real>(predicted.size());
}

Real auc(std::span<const Real> positive_scores, std::span<const Real> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) throw ArgumentError("auc: need positives and negatives");
  std::vector<std::pair<Real, bool>> all;
  all.reserve(positive_scores.size() + negative_scores.size());
  for (Real s : positive_scores) all.emplace_back(s, true);
  for (Real s : negative_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Real rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const Real avg_rank = 0.5 * static_cast<Real>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t q = i; q < j; ++q) {
      if (all[q].second) rank_sum += avg_rank;
    }
    i = j;
  }
  const auto p = static_cast<Real>(positive_scores.size());
  const auto n = static_cast<Real>(negative_scores.size());
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

void FinetuneConfig::validate() const {
  if (lr < 0.0 || weight_decay < 0.0) throw ConfigError("finetune: lr and weight_decay must be non-negative");
  if (sampler_budget < 1) throw ConfigError("finetune: sampler budget must be >= 1");
}

DenseMatrix embed_nodes(Model& model, const DownstreamData& data, std::span<const NodeId> nodes,
                        std::span<const Real> task_row, std::size_t budget, SamplerKind sampler, std::uint64_t seed) {
  ad::Tape tape;
  const BoundPrompt prompt = bind_prompt_constant(tape, model.prompt);
  const ad::Var row = tape.constant({1, task_row.size()}, std::vector<Real>(task_row.begin(), task_row.end()));
  return to_dense(encode_nodes(tape, model, prompt, row, data, nodes, budget, sampler, seed));
}

FinetuneResult finetune_one(const Model& pretrained, const DownstreamData& data, const KShotSample& kshot,
                            std::size_t init_task, const FinetuneConfig& config) {
  config.validate();
  if (!data.graph.has_labels()) throw ConfigError("finetune: graph has no labels");
  if (init_task >= pretrained.prompt.num_tasks()) {
    throw ArgumentError("finetune: init task " + std::to_string(init_task) + " but only " +
                        std::to_string(pretrained.prompt.num_tasks()) + " task embeddings");
  }
  if (kshot.train_nodes.empty() || kshot.val_nodes.empty()) throw ConfigError("finetune: empty K-shot sample");

  FinetuneResult res;
  res.init_task = init_task;
  res.model = pretrained;
  const std::size_t d = pretrained.prompt.feature_dim();
  const auto table_row = pretrained.prompt.task_table.values().subspan(init_task * d, d);
  res.task_row = ad::Tensor({1, d}, std::vector<Real>(table_row.begin(), table_row.end()));

  const std::size_t classes = static_cast<std::size_t>(data.graph.num_classes());
  const auto train_labels = labels_of(data.graph, kshot.train_nodes);
  const auto val_labels = labels_of(data.graph, kshot.val_nodes);
  const std::uint64_t val_seed = derive_seed(config.seed, "ft-val");

  // Prototypes start at the class means of the initial representations.
  {
    const DenseMatrix reps = embed_nodes(res.model, data, kshot.train_nodes, res.task_row.values(), config.sampler_budget,
                                         config.sampler, derive_seed(config.seed, "ft-proto"));
    res.prototypes = ad::Tensor({classes, reps.cols}, 0.0);
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < reps.rows; ++i) {
      const auto c = static_cast<std::size_t>(train_labels[i]);
      ++counts[c];
      for (std::size_t q = 0; q < reps.cols; ++q) res.prototypes(c, q) += reps(i, q);
    }
    Rng rng(config.seed, "ft-proto-fill");
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t q = 0; q < reps.cols; ++q) {
        if (counts[c] > 0) {
          res.prototypes(c, q) /= static_cast<Real>(counts[c]);
        } else {
          res.prototypes(c, q) = rng.normal();
        }
      }
    }
  }

  auto validation_loss = [&](Model& m, const ad::Tensor& row, const ad::Tensor& protos) {
    ad::Tape tape;
    const BoundPrompt prompt = bind_prompt_constant(tape, m.prompt);
    const ad::Var reps = encode_nodes(tape, m, prompt, tape.constant(row), data, kshot.val_nodes, config.sampler_budget,
                                      config.sampler, val_seed);
    return downstream_loss(reps, val_labels, tape.constant(protos)).item();
  };

  NamedTensors params;
  for (auto& entry : res.model.named_tensors()) {
    if (entry.first != "prompt.task_table") params.push_back(entry);
  }
  params.emplace_back("finetune.task_row", &res.task_row);
  params.emplace_back("finetune.prototypes", &res.prototypes);
  OptimizerState opt = OptimizerState::for_params(params);

  Real best = validation_loss(res.model, res.task_row, res.prototypes);
  Model best_model = res.model;
  ad::Tensor best_row = res.task_row;
  ad::Tensor best_protos = res.prototypes;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (auto& [name, t] : params) t->zero_grad();
    ad::Tape tape;
    const BoundPrompt prompt = bind_prompt(tape, res.model.prompt);
    const ad::Var reps = encode_nodes(tape, res.model, prompt, tape.param(res.task_row), data, kshot.train_nodes,
                                      config.sampler_budget, config.sampler, derive_seed(config.seed, "ft-train", epoch));
    const ad::Var loss = downstream_loss(reps, train_labels, tape.param(res.prototypes));
    if (!std::isfinite(loss.item())) throw TrainingError("non-finite fine-tuning loss at epoch " + std::to_string(epoch));
    tape.backward(loss);
    adamw_step(params, opt, config.lr, config.weight_decay);
    res.epochs_run = epoch;

    const Real val = validation_loss(res.model, res.task_row, res.prototypes);
    if (val < best) {
      best = val;
      best_model = res.model;
      best_row = res.task_row;
      best_protos = res.prototypes;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  res.model = std::move(best_model);
  res.task_row = std::move(best_row);
  res.prototypes = std::move(best_protos);
  res.val_loss = best;

  const DenseMatrix protos(res.prototypes.rows(), res.prototypes.cols(),
                           std::vector<Real>(res.prototypes.values().begin(), res.prototypes.values().end()));
  const DenseMatrix val_reps = embed_nodes(res.model, data, kshot.val_nodes, res.task_row.values(), config.sampler_budget,
                                           config.sampler, val_seed);
  res.val_f1 = micro_f1(predict_classes(val_reps, protos), val_labels);
  if (!data.test_nodes.empty()) {
    const DenseMatrix test_reps = embed_nodes(res.model, data, data.test_nodes, res.task_row.values(),
                                              config.sampler_budget, config.sampler, derive_seed(config.seed, "ft-test"));
    res.test_f1 = micro_f1(predict_classes(test_reps, protos), labels_of(data.graph, data.test_nodes));
  }
  return res;
}

std::size_t select_best(std::span<const Real> scores) {
  if (scores.empty()) throw ArgumentError("select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

TransferReport transferability_test(const Model& pretrained, const DownstreamData& data, const KShotSample& kshot,
                                    const FinetuneConfig& config, std::size_t jobs) {
  const std::size_t n = pretrained.prompt.num_tasks();
  if (n < 1) throw ArgumentError("transferability_test: no task embeddings");
  TransferReport report;
  report.candidates.resize(n);
  if (jobs <= 1 || n == 1) {
    for (std::size_t j = 0; j < n; ++j) report.candidates[j] = finetune_one(pretrained, data, kshot, j, config);
  } else {
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> workers;
    std::size_t next = 0;
    std::mutex lock;
    for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
      workers.emplace_back([&] {
        for (;;) {
          std::size_t j = 0;
          {
            std::lock_guard<std::mutex> guard(lock);
            if (next >= n) return;
            j = next++;
          }
          try {
            report.candidates[j] = finetune_one(pretrained, data, kshot, j, config);
          } catch (...) {
            errors[j] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<Real> scores;
  for (const auto& c : report.candidates) scores.push_back(c.val_f1);
  report.chosen = select_best(scores);
  report.test_f1 = report.candidates[report.chosen].test_f1;
  return report;
}

Real link_auc(Model& model, const Graph& train_graph, std::span<const Edge> held_out, const ReachabilityCache& cache,
              const AnchorSet& anchors, std::size_t task_index, std::uint64_t seed) {
  if (held_out.empty()) throw ArgumentError("link_auc: no held-out edges");
  if (task_index >= model.prompt.num_tasks()) throw ArgumentError("link_auc: task index out of range");
  const std::size_t n = train_graph.num_nodes();
  std::vector<Edge> positives;
  for (auto [u, v] : held_out) {
    if (u >= n || v >= n) throw ArgumentError("link_auc: held-out edge out of range");
    if (train_graph.has_edge(u, v)) throw ArgumentError("link_auc: held-out edge present in training graph");
    positives.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::vector<Edge> sorted_pos = positives;
  std::sort(sorted_pos.begin(), sorted_pos.end());

  Rng rng(seed, "link-negatives");
  std::vector<Edge> negatives;
  const std::size_t max_attempts = 1000 * positives.size() + 1000;
  for (std::size_t attempt = 0; negatives.size() < positives.size() && attempt < max_attempts; ++attempt) {
    auto u = static_cast<NodeId>(rng.index(n));
    auto v = static_cast<NodeId>(rng.index(n));
    if (u == v || train_graph.has_edge(u, v)) continue;
    const Edge e{std::min(u, v), std::max(u, v)};
    if (std::binary_search(sorted_pos.begin(), sorted_pos.end(), e)) continue;
    negatives.push_back(e);
  }
  if (negatives.size() < positives.size()) throw SamplingError("link_auc: could not find enough non-edges");

  std::vector<NodeId> endpoints;
  for (const auto& list : {positives, negatives}) {
    for (auto [u, v] : list) endpoints.insert(endpoints.end(), {u, v});
  }
  std::sort(endpoints.begin(), endpoints.end());
  endpoints.erase(std::unique(endpoints.begin(), endpoints.end()), endpoints.end());

  const std::size_t d = model.prompt.feature_dim();
  const auto row = model.prompt.task_table.values().subspan(task_index * d, d);
  const DenseMatrix h = embed_graph(model, train_graph, endpoints, row, cache, anchors);
  auto score = [&](const Edge& e) {
    const auto a = h.row(e.first), b = h.row(e.second);
    Real dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
      dot += a[q] * b[q];
      na += a[q] * a[q];
      nb += b[q] * b[q];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("link_auc: zero-norm representation");
    return dot / std::sqrt(na * nb);
  };
  std::vector<Real> pos_scores, neg_scores;
  for (const auto& e : positives) pos_scores.push_back(score(e));
  for (const auto& e : negatives) neg_scores.push_back(score(e));
  return auc(pos_scores, neg_scores);
}

}  // namespace ultradp
