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

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fixtures.hpp"
#include "ultradp/autodiff.hpp"
#include "ultradp/finetune.hpp"
#include "ultradp/gnn.hpp"
#include "ultradp/model.hpp"
#include "ultradp/pretext.hpp"
#include "ultradp/prompt.hpp"
#include "ultradp/reachability.hpp"
#include "ultradp/train.hpp"

namespace ultradp::fixtures {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

constexpr Real kGradTolerance = 1e-4;
constexpr int kGradPoints = 20;

// Values in [lo, hi) with |x| kept above 1e-3 so kinks are avoided.
inline Tensor random_tensor(Shape shape, Rng& rng, Real lo = -2.0, Real hi = 2.0) {
  std::vector<Real> v(shape.size());
  for (Real& x : v) {
    x = lo + (hi - lo) * rng.uniform();
    if (std::abs(x) < 1e-3) x = x < 0 ? -1e-3 - rng.uniform() * 0.1 : 1e-3 + rng.uniform() * 0.1;
  }
  return Tensor(shape, std::move(v));
}

// Contracts any output with fixed random weights so every entry of the
// output gradient is distinct and nonzero.
inline Var project(Tape& tape, Var out) {
  Rng rng(hash_tag("projection") ^ out.rows() * 131 ^ out.cols());
  std::vector<Real> w(out.shape().size());
  for (Real& x : w) x = 0.5 + rng.uniform();
  return ad::sum(ad::mul(out, tape.constant(out.shape(), std::move(w))));
}

struct PrimitiveCase {
  std::string name;
  Shape shape;
  Real lo = -2.0;
  Real hi = 2.0;
  // Builds the primitive's output from the checked leaf and a per-point rng
  // for auxiliary constant operands.
  std::function<Var(Tape&, Var, Rng&)> build;
};

inline Var rand_const(Tape& tape, Shape shape, Rng& rng, Real lo = -2.0, Real hi = 2.0) {
  return tape.constant(random_tensor(shape, rng, lo, hi));
}

inline const std::vector<std::uint32_t> kSrc = {0, 1, 2, 3, 1, 0, 2};
inline const std::vector<std::uint32_t> kDst = {1, 0, 0, 2, 2, 3, 3};
inline const std::vector<Real> kEdgeWeights = {0.5, -1.0, 2.0, 0.25, 1.5, 0.75, -0.3};

inline std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> cases;
  cases.push_back({"matmul_left", {3, 4}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::matmul(x, rand_const(t, {4, 2}, r)); }});
  cases.push_back({"matmul_right", {4, 2}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::matmul(rand_const(t, {3, 4}, r), x); }});
  cases.push_back({"transpose", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::transpose(x); }});
  cases.push_back({"add", {2, 3}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::add(x, rand_const(t, {2, 3}, r)); }});
  cases.push_back({"add_self", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::add(x, x); }});
  cases.push_back({"add_bias_matrix", {3, 2}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::add_bias(x, rand_const(t, {1, 2}, r)); }});
  cases.push_back({"add_bias_bias", {1, 2}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::add_bias(rand_const(t, {3, 2}, r), x); }});
  cases.push_back({"sub", {2, 3}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::sub(rand_const(t, {2, 3}, r), x); }});
  cases.push_back({"mul", {2, 3}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::mul(x, rand_const(t, {2, 3}, r)); }});
  cases.push_back({"mul_self", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::mul(x, x); }});
  cases.push_back({"scale", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::scale(x, -1.7); }});
  cases.push_back({"add_scalar", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::add_scalar(x, 0.3); }});
  cases.push_back({"reshape", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::reshape(x, {3, 2}); }});
  cases.push_back({"softmax_rows", {3, 4}, -2, 2, [](Tape&, Var x, Rng&) { return ad::softmax_rows(x); }});
  cases.push_back({"log", {2, 3}, 0.2, 3, [](Tape&, Var x, Rng&) { return ad::log(x); }});
  cases.push_back({"exp", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::exp(x); }});
  cases.push_back({"tanh", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::tanh(x); }});
  cases.push_back({"leaky_relu", {3, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::leaky_relu(x, 0.2); }});
  cases.push_back({"elu", {3, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::elu(x); }});
  cases.push_back({"relu", {3, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::relu(x); }});
  cases.push_back({"square", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::square(x); }});
  cases.push_back({"sum", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::sum(x); }});
  cases.push_back({"mean", {2, 3}, -2, 2, [](Tape&, Var x, Rng&) { return ad::mean(x); }});
  cases.push_back({"row_sum", {3, 4}, -2, 2, [](Tape&, Var x, Rng&) { return ad::row_sum(x); }});
  cases.push_back({"l2_norm_rows", {3, 4}, -2, 2, [](Tape&, Var x, Rng&) { return ad::l2_norm_rows(x); }});
  cases.push_back({"normalize_rows", {3, 4}, -2, 2, [](Tape&, Var x, Rng&) { return ad::normalize_rows(x); }});
  cases.push_back({"cosine_similarity", {3, 4}, -2, 2,
                   [](Tape& t, Var x, Rng& r) { return ad::cosine_similarity(x, rand_const(t, {3, 4}, r)); }});
  cases.push_back({"cosine_similarity_self", {3, 4}, -2, 2,
                   [](Tape& t, Var x, Rng& r) { return ad::cosine_similarity(x, ad::add(x, rand_const(t, {3, 4}, r))); }});
  cases.push_back({"log_sum_exp_rows", {3, 4}, -2, 2, [](Tape&, Var x, Rng&) { return ad::log_sum_exp_rows(x); }});
  cases.push_back({"gather_rows", {3, 2}, -2, 2, [](Tape&, Var x, Rng&) {
                     static const std::vector<std::uint32_t> idx = {2, 0, 0, 1, 2};
                     return ad::gather_rows(x, idx);
                   }});
  cases.push_back({"scatter_add_rows", {5, 2}, -2, 2, [](Tape&, Var x, Rng&) {
                     static const std::vector<std::uint32_t> idx = {1, 0, 1, 3, 1};
                     return ad::scatter_add_rows(x, idx, 4);
                   }});
  cases.push_back({"concat_rows", {2, 3}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::concat_rows(rand_const(t, {1, 3}, r), x); }});
  cases.push_back({"concat_cols", {2, 3}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::concat_cols(x, rand_const(t, {2, 1}, r)); }});
  cases.push_back({"scale_rows", {3, 2}, -2, 2, [](Tape&, Var x, Rng&) {
                     static const std::vector<Real> w = {0.5, -2.0, 1.25};
                     return ad::scale_rows(x, w);
                   }});
  cases.push_back({"edge_aggregate", {4, 3}, -2, 2,
                   [](Tape&, Var x, Rng&) { return ad::edge_aggregate(x, kSrc, kDst, kEdgeWeights, 4); }});
  cases.push_back({"head_dot_z", {4, 6}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::head_dot(x, rand_const(t, {2, 3}, r)); }});
  cases.push_back({"head_dot_att", {2, 3}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::head_dot(rand_const(t, {4, 6}, r), x); }});
  cases.push_back({"head_scale_m", {5, 6}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::head_scale(x, rand_const(t, {5, 2}, r)); }});
  cases.push_back({"head_scale_coef", {5, 2}, -2, 2, [](Tape& t, Var x, Rng& r) { return ad::head_scale(rand_const(t, {5, 6}, r), x); }});
  cases.push_back({"head_mean", {3, 6}, -2, 2, [](Tape&, Var x, Rng&) { return ad::head_mean(x, 3); }});
  cases.push_back({"head_aggregate_z", {4, 6}, -2, 2,
                   [](Tape& t, Var x, Rng& r) { return ad::head_aggregate(x, rand_const(t, {7, 2}, r), kSrc, kDst, 4); }});
  cases.push_back({"head_aggregate_coef", {7, 2}, -2, 2,
                   [](Tape& t, Var x, Rng& r) { return ad::head_aggregate(rand_const(t, {4, 6}, r), x, kSrc, kDst, 4); }});
  cases.push_back({"segment_softmax", {7, 2}, -2, 2, [](Tape&, Var x, Rng&) { return ad::segment_softmax(x, kDst, 4); }});
  return cases;
}

/// Worst grad_check error of one case over `points` seeded random points.
inline Real worst_case_error(const PrimitiveCase& c, int points = kGradPoints) {
  Real worst = 0.0;
  for (int p = 0; p < points; ++p) {
    Rng point_rng(derive_seed(1, c.name, p));
    const Tensor point = random_tensor(c.shape, point_rng, c.lo, c.hi);
    const std::uint64_t aux_seed = derive_seed(2, c.name, p);
    const Real err = ad::grad_check(
        [&](Tape& tape, Var x) {
          Rng aux(aux_seed);
          return project(tape, c.build(tape, x, aux));
        },
        point);
    worst = std::max(worst, err);
  }
  return worst;
}

/// Worst relative error between backward() gradients of `loss` with respect
/// to every entry of `params` and central differences, using the same error
/// measure as ad::grad_check. Infinite when every analytic entry is zero.
inline Real parameter_grad_error(const std::function<Var(Tape&)>& loss,
                                 const std::vector<std::pair<std::string, Tensor*>>& params, Real h = 1e-5) {
  for (auto& [name, t] : params) t->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::vector<Real>> analytic;
  bool any_nonzero = false;
  for (auto& [name, t] : params) {
    analytic.emplace_back(t->grad().begin(), t->grad().end());
    for (Real g : analytic.back()) any_nonzero |= g != 0.0;
  }
  // A check against an all-zero gradient proves nothing.
  if (!any_nonzero) return std::numeric_limits<Real>::infinity();
  auto eval = [&] {
    Tape tape;
    return loss(tape).item();
  };
  Real worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].second->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const Real orig = values[k];
      values[k] = orig + h;
      const Real fp = eval();
      values[k] = orig - h;
      const Real fm = eval();
      values[k] = orig;
      const Real numeric = (fp - fm) / (2.0 * h);
      const Real denom = std::max({std::abs(analytic[p][k]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[p][k] - numeric) / denom);
    }
  }
  return worst;
}

struct ModelGradientCase {
  std::string name;
  /// Returns the worst relative error of the case.
  std::function<Real()> run;
};

inline GnnConfig small_gnn(Backbone backbone) {
  GnnConfig c;
  c.backbone = backbone;
  c.num_layers = 3;
  c.hidden_dim = 6;
  c.heads = 2;
  return c;
}

inline Real backbone_error(Backbone backbone) {
  const Graph g = six_node_graph(4);
  const GnnConfig config = small_gnn(backbone);
  GnnParams params = init_gnn_params(config, 3);
  const MessageIndex index = MessageIndex::build(g);
  Rng rng(21);
  Tensor h0 = random_tensor({6, config.hidden_dim}, rng);
  auto named = params.named_tensors();
  named.emplace_back("h0", &h0);
  return parameter_grad_error(
      [&](Tape& tape) { return project(tape, gnn_forward(tape, index, tape.param(h0), params, config)); }, named);
}

inline PromptParams small_prompt(std::uint64_t seed) {
  PromptParams p = init_prompt_params(2, 4, 3, 5, 0.1, seed);
  Rng rng(seed, "bias");
  for (Real& b : p.pos_bias.values()) b = rng.uniform() - 0.5;
  for (Real& b : p.align_prompt_bias.values()) b = rng.uniform() - 0.5;
  return p;
}

inline std::vector<ModelGradientCase> model_gradient_cases() {
  std::vector<ModelGradientCase> cases;
  cases.push_back({"position_embedding", [] {
                     PromptParams params = small_prompt(1);
                     Rng rng(4);
                     DenseMatrix enc(4, 3);
                     for (Real& x : enc.data) x = rng.uniform();
                     return parameter_grad_error(
                         [&](Tape& tape) { return project(tape, position_embedding(tape, enc, bind_prompt(tape, params))); },
                         {{"pos_weight", &params.pos_weight}, {"pos_bias", &params.pos_bias}});
                   }});
  cases.push_back({"align_features", [] {
                     PromptParams params = small_prompt(2);
                     Rng rng(5);
                     Tensor x = random_tensor({5, 4}, rng);
                     const std::vector<char> flags = {0, 1, 0, 1, 0};
                     auto named = params.named_tensors();
                     named.emplace_back("x", &x);
                     return parameter_grad_error(
                         [&](Tape& tape) { return project(tape, align_features(tape.param(x), flags, bind_prompt(tape, params))); },
                         named);
                   }});
  cases.push_back({"backbone_attention", [] { return backbone_error(Backbone::kAttention); }});
  cases.push_back({"backbone_convolutional", [] { return backbone_error(Backbone::kConvolutional); }});
  cases.push_back({"backbone_aggregate", [] { return backbone_error(Backbone::kAggregate); }});
  cases.push_back({"edge_loss", [] {
                     Rng rng(6);
                     Tensor h = random_tensor({4, 5}, rng), hp = random_tensor({4, 5}, rng), hn = random_tensor({4, 5}, rng);
                     // Margin below every negative similarity keeps the hinge active.
                     return parameter_grad_error(
                         [&](Tape& tape) { return edge_loss(tape.param(h), tape.param(hp), tape.param(hn), -1.5); },
                         {{"h", &h}, {"h_pos", &hp}, {"h_neg", &hn}});
                   }});
  cases.push_back({"knn_loss", [] {
                     Rng rng(7);
                     Tensor h = random_tensor({2, 4}, rng), p = random_tensor({6, 4}, rng), n = random_tensor({6, 4}, rng);
                     return parameter_grad_error(
                         [&](Tape& tape) { return knn_loss(tape.param(h), tape.param(p), tape.param(n), 3, 1.0); },
                         {{"h", &h}, {"positives", &p}, {"negatives", &n}});
                   }});
  cases.push_back({"contrastive_loss", [] {
                     Rng rng(8);
                     Tensor z1 = random_tensor({4, 3}, rng), z2 = random_tensor({4, 3}, rng);
                     return parameter_grad_error(
                         [&](Tape& tape) { return contrastive_loss(tape.param(z1), tape.param(z2), 0.5); },
                         {{"z1", &z1}, {"z2", &z2}});
                   }});
  cases.push_back({"downstream_loss", [] {
                     Rng rng(9);
                     Tensor reps = random_tensor({5, 3}, rng), protos = random_tensor({3, 3}, rng);
                     const std::vector<int> labels = {0, 2, 1, 1, 0};
                     return parameter_grad_error(
                         [&](Tape& tape) { return downstream_loss(tape.param(reps), labels, tape.param(protos)); },
                         {{"reps", &reps}, {"prototypes", &protos}});
                   }});
  for (TaskKind kind : {TaskKind::kEdge, TaskKind::kKnn, TaskKind::kContrastive}) {
    cases.push_back({"pretext_" + std::string(task_key(kind)), [kind] {
                       const Graph g = six_node_graph(4);
                       const ReachabilityCache cache = build_cache(build_transition(g), 3);
                       const AnchorSet anchors = select_anchors(cache, 3, 2);
                       TrainConfig config;
                       config.tasks = {{kind, 1.0}};
                       config.batch_size = 4;
                       config.knn_k = 2;
                       config.knn_step = 2;
                       config.position_step = 3;
                       config.gnn = small_gnn(Backbone::kAttention);
                       config.gnn.num_layers = 2;
                       config.sampler_budget = 6;
                       ModelSpec spec{config.gnn, g.feature_dim(), 1, anchors.size(), 0.1, true};
                       Model model = init_model(spec, 5);
                       const TaskContext ctx{g, cache, anchors, config};
                       const std::vector<NodeId> pool = {0, 1, 2, 3, 4, 5};
                       return parameter_grad_error(
                           [&](Tape& tape) {
                             const BoundPrompt prompt = bind_prompt(tape, model.prompt);
                             return pretext_loss(tape, model, prompt, ctx, 0, pool, 11);
                           },
                           model.named_tensors());
                     }});
  }
  return cases;
}

}  // namespace ultradp::fixtures
