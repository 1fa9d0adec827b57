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

#include <benchmark/benchmark.h>

#include "ultradp/gnn.hpp"
#include "ultradp/model.hpp"
#include "ultradp/reachability.hpp"
#include "ultradp/synthetic.hpp"
#include "ultradp/train.hpp"

namespace {

using namespace ultradp;

Graph bench_graph(std::size_t n) {
  SbmConfig c;
  c.num_nodes = n;
  c.p_in = 20.0 / static_cast<Real>(n);
  c.p_out = 2.0 / static_cast<Real>(n);
  c.seed = 1;
  return make_sbm(c);
}

void BM_BuildCache(benchmark::State& state) {
  const Graph g = bench_graph(static_cast<std::size_t>(state.range(0)));
  const CsrMatrix p = build_transition(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_cache(p, 9));
  }
}
BENCHMARK(BM_BuildCache)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_GnnForwardBackward(benchmark::State& state) {
  const Graph g = bench_graph(1000);
  GnnConfig cfg;
  cfg.backbone = static_cast<Backbone>(state.range(0));
  cfg.hidden_dim = 64;
  GnnParams params = init_gnn_params(cfg, 3);
  const MessageIndex index = MessageIndex::build(g);
  DenseMatrix h0(g.num_nodes(), cfg.hidden_dim);
  Rng rng(5);
  for (auto& v : h0.data) v = rng.normal();
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var out = gnn_forward(tape, index, tape.constant(h0), params, cfg);
    const ad::Var loss = ad::mean(ad::square(out));
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_GnnForwardBackward)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_PretextStep(benchmark::State& state) {
  const Graph g = bench_graph(1000);
  TrainConfig cfg;
  cfg.tasks = {{static_cast<TaskKind>(state.range(0)), 1.0}};
  const ReachabilityCache cache = build_cache(build_transition(g), 9);
  const AnchorSet anchors = select_anchors(cache, 9, cfg.resolved_anchor_count(g.num_nodes()));
  ModelSpec spec;
  spec.gnn = cfg.gnn;
  spec.feature_dim = g.feature_dim();
  spec.num_anchors = anchors.size();
  Model model = init_model(spec, 1);
  std::vector<NodeId> pool(g.num_nodes());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<NodeId>(i);
  const TaskContext ctx{g, cache, anchors, cfg};
  std::uint64_t step = 0;
  for (auto _ : state) {
    ad::Tape tape;
    const BoundPrompt prompt = bind_prompt(tape, model.prompt);
    const ad::Var loss = pretext_loss(tape, model, prompt, ctx, 0, pool, step++);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_PretextStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
