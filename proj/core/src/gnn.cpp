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

#include "ultradp/gnn.hpp"

#include <cmath>

namespace ultradp {

Backbone parse_backbone(std::string_view name) {
  if (name == "attention" || name == "gat") return Backbone::kAttention;
  if (name == "convolutional" || name == "gcn") return Backbone::kConvolutional;
  if (name == "aggregate" || name == "sage") return Backbone::kAggregate;
  throw ConfigError("unknown backbone '" + std::string(name) + "'");
}

std::string_view to_string(Backbone b) {
  switch (b) {
    case Backbone::kAttention: return "attention";
    case Backbone::kConvolutional: return "convolutional";
    case Backbone::kAggregate: return "aggregate";
  }
  return "?";
}

void GnnConfig::validate() const {
  if (num_layers < 1) throw ConfigError("gnn: num_layers must be >= 1");
  if (hidden_dim < 1) throw ConfigError("gnn: hidden_dim must be >= 1");
  if (backbone == Backbone::kAttention && (heads < 1 || hidden_dim % heads != 0)) {
    throw ConfigError("gnn: hidden_dim " + std::to_string(hidden_dim) + " not divisible by heads " + std::to_string(heads));
  }
}

Activation GnnConfig::resolved_activation() const {
  if (activation != Activation::kDefault) return activation;
  return backbone == Backbone::kAttention ? Activation::kElu : Activation::kRelu;
}

std::vector<std::pair<std::string, ad::Tensor*>> GnnParams::named_tensors() {
  std::vector<std::pair<std::string, ad::Tensor*>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "gnn." + std::to_string(l) + ".";
    auto& layer = layers[l];
    out.emplace_back(p + "weight", &layer.weight);
    out.emplace_back(p + "bias", &layer.bias);
    if (layer.att_src.size() > 0) {
      out.emplace_back(p + "att_src", &layer.att_src);
      out.emplace_back(p + "att_dst", &layer.att_dst);
    }
  }
  return out;
}

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
  ad::Tensor t(shape);
  for (auto& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace

GnnParams init_gnn_params(const GnnConfig& config, std::uint64_t seed) {
  config.validate();
  GnnParams params;
  const std::size_t d = config.hidden_dim;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    Rng rng(seed, "gnn-init", l);
    GnnLayerParams layer;
    const bool last = l + 1 == config.num_layers;
    switch (config.backbone) {
      case Backbone::kAttention: {
        layer.heads = config.heads;
        layer.concat_heads = !last;
        // Hidden layers concatenate heads of width d/H; the last averages
        // heads of full width d.
        const std::size_t width = last ? d : d / config.heads;
        layer.weight = uniform_tensor({d, config.heads * width}, d, rng);
        layer.att_src = uniform_tensor({config.heads, width}, width, rng);
        layer.att_dst = uniform_tensor({config.heads, width}, width, rng);
        layer.bias = ad::Tensor({1, d}, 0.0);
        break;
      }
      case Backbone::kConvolutional:
        layer.weight = uniform_tensor({d, d}, d, rng);
        layer.bias = ad::Tensor({1, d}, 0.0);
        break;
      case Backbone::kAggregate:
        layer.weight = uniform_tensor({2 * d, d}, 2 * d, rng);
        layer.bias = ad::Tensor({1, d}, 0.0);
        break;
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

MessageIndex MessageIndex::build(const Graph& graph) {
  MessageIndex idx;
  const std::size_t n = graph.num_nodes();
  idx.num_nodes = n;
  idx.src.reserve(graph.num_adjacency_entries() + n);
  idx.dst.reserve(graph.num_adjacency_entries() + n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<NodeId>(i);
    const Real di = static_cast<Real>(graph.degree(v) + 1);
    idx.src.push_back(v);
    idx.dst.push_back(v);
    idx.sym_norm.push_back(1.0 / di);
    const auto nbrs = graph.neighbors(v);
    for (NodeId u : nbrs) {
      const Real du = static_cast<Real>(graph.degree(u) + 1);
      idx.src.push_back(u);
      idx.dst.push_back(v);
      idx.sym_norm.push_back(1.0 / std::sqrt(di * du));
      idx.nbr_src.push_back(u);
      idx.nbr_dst.push_back(v);
      idx.mean_weight.push_back(1.0 / static_cast<Real>(nbrs.size()));
    }
  }
  return idx;
}

namespace {

ad::Var activate(ad::Var x, Activation act) {
  return act == Activation::kElu ? ad::elu(x) : ad::relu(x);
}

ad::Var attention_layer(ad::Tape& tape, const MessageIndex& idx, ad::Var h, GnnLayerParams& layer,
                        ForwardTrace* trace) {
  const ad::Var z = ad::matmul(h, tape.param(layer.weight));
  const ad::Var s_src = ad::head_dot(z, tape.param(layer.att_src));
  const ad::Var s_dst = ad::head_dot(z, tape.param(layer.att_dst));
  const ad::Var logits = ad::leaky_relu(ad::add(ad::gather_rows(s_src, idx.src), ad::gather_rows(s_dst, idx.dst)), 0.2);
  const ad::Var alpha = ad::segment_softmax(logits, idx.dst, idx.num_nodes);
  if (trace != nullptr) trace->attention.emplace_back(alpha.value().begin(), alpha.value().end());
  ad::Var out = ad::head_aggregate(z, alpha, idx.src, idx.dst, idx.num_nodes);
  if (!layer.concat_heads) out = ad::head_mean(out, layer.heads);
  return ad::add_bias(out, tape.param(layer.bias));
}

ad::Var convolution_layer(ad::Tape& tape, const MessageIndex& idx, ad::Var h, GnnLayerParams& layer) {
  const ad::Var y = ad::matmul(h, tape.param(layer.weight));
  return ad::add_bias(ad::edge_aggregate(y, idx.src, idx.dst, idx.sym_norm, idx.num_nodes), tape.param(layer.bias));
}

ad::Var aggregate_layer(ad::Tape& tape, const MessageIndex& idx, ad::Var h, GnnLayerParams& layer) {
  ad::Var neighborhood;
  if (idx.nbr_src.empty()) {
    neighborhood = tape.constant({idx.num_nodes, h.cols()}, std::vector<Real>(idx.num_nodes * h.cols(), 0.0));
  } else {
    neighborhood = ad::edge_aggregate(h, idx.nbr_src, idx.nbr_dst, idx.mean_weight, idx.num_nodes);
  }
  return ad::add_bias(ad::matmul(ad::concat_cols(h, neighborhood), tape.param(layer.weight)), tape.param(layer.bias));
}

}  // namespace

ad::Var gnn_forward(ad::Tape& tape, const MessageIndex& index, ad::Var h0, GnnParams& params, const GnnConfig& config,
                    ForwardTrace* trace) {
  if (h0.rows() != index.num_nodes) {
    throw DimensionError("gnn_forward: h0 has " + std::to_string(h0.rows()) + " rows for " +
                         std::to_string(index.num_nodes) + " nodes");
  }
  if (h0.cols() != config.hidden_dim) {
    throw DimensionError("gnn_forward: h0 width " + std::to_string(h0.cols()) + " != hidden_dim " +
                         std::to_string(config.hidden_dim));
  }
  if (params.layers.size() != config.num_layers) throw DimensionError("gnn_forward: layer count mismatch");
  const Activation act = config.resolved_activation();
  ad::Var h = h0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    switch (config.backbone) {
      case Backbone::kAttention: h = attention_layer(tape, index, h, layer, trace); break;
      case Backbone::kConvolutional: h = convolution_layer(tape, index, h, layer); break;
      case Backbone::kAggregate: h = aggregate_layer(tape, index, h, layer); break;
    }
    if (l + 1 < params.layers.size()) h = activate(h, act);
  }
  return h;
}

}  // namespace ultradp
