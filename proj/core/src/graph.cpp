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

#include "ultradp/graph.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>

namespace ultradp {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, std::vector<Real> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw DimensionError("DenseMatrix: value count " + std::to_string(data.size()) + " != " +
                         std::to_string(r) + "x" + std::to_string(c));
  }
}

namespace {

void check_labels(const std::optional<std::vector<int>>& labels, std::size_t n, int& num_classes) {
  num_classes = 0;
  if (!labels) return;
  if (labels->size() != n) {
    throw DimensionError("label count " + std::to_string(labels->size()) + " != node count " +
                         std::to_string(n));
  }
  for (int l : *labels) {
    if (l < 0) throw MalformedInputError("negative label " + std::to_string(l));
    num_classes = std::max(num_classes, l + 1);
  }
}

}  // namespace

Graph Graph::from_edges(std::span<const Edge> edges, DenseMatrix features,
                        std::optional<std::vector<int>> labels) {
  const std::size_t n = features.rows;
  std::vector<std::uint64_t> degree(n + 1, 0);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw MalformedInputError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                ") references a node >= " + std::to_string(n));
    }
    if (u == v) continue;
    ++degree[u + 1];
    ++degree[v + 1];
  }
  std::partial_sum(degree.begin(), degree.end(), degree.begin());
  std::vector<NodeId> scratch(degree.back());
  std::vector<std::uint64_t> cursor(degree.begin(), degree.end() - 1);
  for (const auto& [u, v] : edges) {
    if (u == v) continue;
    scratch[cursor[u]++] = v;
    scratch[cursor[v]++] = u;
  }

  std::vector<std::uint64_t> offsets(n + 1, 0);
  std::vector<NodeId> targets;
  targets.reserve(scratch.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto first = scratch.begin() + static_cast<std::ptrdiff_t>(degree[i]);
    auto last = scratch.begin() + static_cast<std::ptrdiff_t>(degree[i + 1]);
    std::sort(first, last);
    last = std::unique(first, last);
    targets.insert(targets.end(), first, last);
    offsets[i + 1] = targets.size();
  }
  return from_csr(std::move(offsets), std::move(targets), std::move(features), std::move(labels));
}

Graph Graph::from_csr(std::vector<std::uint64_t> offsets, std::vector<NodeId> targets,
                      DenseMatrix features, std::optional<std::vector<int>> labels) {
  Graph g;
  g.offsets_ = std::move(offsets);
  g.targets_ = std::move(targets);
  g.features_ = std::move(features);
  g.labels_ = std::move(labels);
  if (g.offsets_.empty()) g.offsets_.push_back(0);
  check_labels(g.labels_, g.num_nodes(), g.num_classes_);
  g.validate();
  return g;
}

void Graph::validate() const {
  const std::size_t n = num_nodes();
  if (features_.rows != n) {
    throw DimensionError("feature rows " + std::to_string(features_.rows) + " != node count " +
                         std::to_string(n));
  }
  if (offsets_.front() != 0 || offsets_.back() != targets_.size()) {
    throw MalformedInputError("CSR offsets do not span the target array");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (offsets_[i] > offsets_[i + 1]) throw MalformedInputError("CSR offsets not monotone");
    const auto row = neighbors(static_cast<NodeId>(i));
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] >= n) throw MalformedInputError("neighbor id out of range");
      if (row[k] == i) throw MalformedInputError("self-loop at node " + std::to_string(i));
      if (k > 0 && row[k - 1] >= row[k]) throw MalformedInputError("row not strictly sorted");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (NodeId j : neighbors(static_cast<NodeId>(i))) {
      if (!has_edge(j, static_cast<NodeId>(i))) {
        throw MalformedInputError("adjacency not symmetric at (" + std::to_string(i) + "," +
                                  std::to_string(j) + ")");
      }
    }
  }
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  const auto row = neighbors(u);
  return std::binary_search(row.begin(), row.end(), v);
}

const std::vector<int>& Graph::labels() const {
  if (!labels_) throw ArgumentError("graph has no labels");
  return *labels_;
}

std::vector<Edge> Graph::undirected_edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (std::size_t i = 0; i < num_nodes(); ++i) {
    for (NodeId j : neighbors(static_cast<NodeId>(i))) {
      if (i < j) out.emplace_back(static_cast<NodeId>(i), j);
    }
  }
  return out;
}

// --- I/O --------------------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'U', 'D', 'P', 'M'};

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError("truncated " + what);
  return value;
}

std::uint64_t parse_id(std::string_view token, const std::string& where) {
  std::uint64_t value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw MalformedInputError("cannot parse node id '" + std::string(token) + "' at " + where);
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace

DenseMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw FormatError("feature file " + path.string() + " lacks UDPM magic");
  }
  const auto rows = read_pod<std::uint64_t>(in, "feature header");
  const auto cols = read_pod<std::uint64_t>(in, "feature header");
  DenseMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(Real)));
  if (!in) throw FormatError("feature file " + path.string() + " truncated");
  return m;
}

void write_feature_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature file " + path.string());
  out.write(kFeatureMagic, 4);
  write_pod<std::uint64_t>(out, m.rows);
  write_pod<std::uint64_t>(out, m.cols);
  out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(Real)));
  if (!out) throw IoError("failed writing " + path.string());
}

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::optional<std::filesystem::path>& label_path) {
  DenseMatrix features = read_feature_matrix(feature_path);

  std::ifstream edges_in(edge_path);
  if (!edges_in) throw IoError("cannot open edge file " + edge_path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(edges_in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos) {
      throw MalformedInputError(edge_path.string() + ":" + std::to_string(line_no) + ": expected src<TAB>dst");
    }
    const auto where = edge_path.string() + ":" + std::to_string(line_no);
    const auto u = parse_id(trim(body.substr(0, tab)), where);
    const auto v = parse_id(trim(body.substr(tab + 1)), where);
    if (u >= features.rows || v >= features.rows) {
      throw MalformedInputError(where + ": node id >= num_nodes (" + std::to_string(features.rows) + ")");
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }

  std::optional<std::vector<int>> labels;
  if (label_path) {
    std::ifstream label_in(*label_path);
    if (!label_in) throw IoError("cannot open label file " + label_path->string());
    std::vector<int> values;
    while (std::getline(label_in, line)) {
      const auto body = trim(line);
      if (body.empty()) continue;
      int value = 0;
      auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
      if (ec != std::errc() || ptr != body.data() + body.size()) {
        throw MalformedInputError("bad label '" + std::string(body) + "' in " + label_path->string());
      }
      values.push_back(value);
    }
    labels = std::move(values);
  }
  return Graph::from_edges(edges, std::move(features), std::move(labels));
}

void save_graph(const Graph& graph, const std::filesystem::path& edge_path,
                const std::filesystem::path& feature_path,
                const std::optional<std::filesystem::path>& label_path) {
  {
    std::ofstream out(edge_path, std::ios::trunc);
    if (!out) throw IoError("cannot write edge file " + edge_path.string());
    for (const auto& [u, v] : graph.undirected_edges()) out << u << '\t' << v << '\n';
    if (!out) throw IoError("failed writing " + edge_path.string());
  }
  write_feature_matrix(graph.features(), feature_path);
  if (label_path && graph.has_labels()) {
    std::ofstream out(*label_path, std::ios::trunc);
    if (!out) throw IoError("cannot write label file " + label_path->string());
    for (int l : graph.labels()) out << l << '\n';
  }
}

// --- splits -------------------------------------------------------------------

SplitSpec make_split(const Graph& graph, std::uint64_t seed) {
  const std::size_t n = graph.num_nodes();
  if (n < 10) throw ArgumentError("make_split needs at least 10 nodes, got " + std::to_string(n));
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  Rng rng(seed, "split");
  shuffle(order, rng);

  const std::size_t n_pre = (n * 7) / 10;
  const std::size_t n_tenth = n / 10;
  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<NodeId> part(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(part.begin(), part.end());
    return part;
  };
  SplitSpec split;
  split.pretrain_nodes = take(0, n_pre);
  split.train_pool = take(n_pre, n_pre + n_tenth);
  split.val_pool = take(n_pre + n_tenth, n_pre + 2 * n_tenth);
  split.test_nodes = take(n_pre + 2 * n_tenth, n);
  return split;
}

KShotSample sample_kshot(const SplitSpec& split, const Graph& graph, std::size_t shots, std::uint64_t seed) {
  const auto& labels = graph.labels();
  const int num_classes = graph.num_classes();
  KShotSample sample;
  sample.shots = shots;
  sample.seed = seed;

  auto draw = [&](const std::vector<NodeId>& pool, std::string_view stream, bool validation,
                  std::vector<NodeId>& out) {
    std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(num_classes));
    for (NodeId v : pool) by_class[static_cast<std::size_t>(labels[v])].push_back(v);
    for (int c = 0; c < num_classes; ++c) {
      auto& candidates = by_class[static_cast<std::size_t>(c)];
      Rng rng(seed, stream, static_cast<std::uint64_t>(c));
      // Partial Fisher-Yates: the first `take` slots are a uniform draw.
      const std::size_t take = std::min(shots, candidates.size());
      for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.index(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
      }
      out.insert(out.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
      if (take < shots) sample.deficits.push_back({c, shots, candidates.size(), validation});
    }
  };
  draw(split.train_pool, "kshot-train", false, sample.train_nodes);
  draw(split.val_pool, "kshot-val", true, sample.val_nodes);
  return sample;
}

// --- subgraphs -------------------------------------------------------------

Subgraph induced_subgraph(const Graph& graph, std::span<const NodeId> nodes) {
  std::unordered_map<NodeId, NodeId> local;
  local.reserve(nodes.size() * 2);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] >= graph.num_nodes()) throw ArgumentError("subgraph node out of range");
    if (!local.emplace(nodes[i], static_cast<NodeId>(i)).second) {
      throw ArgumentError("duplicate node in subgraph list");
    }
  }
  std::vector<std::uint64_t> offsets(nodes.size() + 1, 0);
  std::vector<NodeId> targets;
  std::vector<NodeId> row;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    row.clear();
    for (NodeId u : graph.neighbors(nodes[i])) {
      if (auto it = local.find(u); it != local.end()) row.push_back(it->second);
    }
    std::sort(row.begin(), row.end());
    targets.insert(targets.end(), row.begin(), row.end());
    offsets[i + 1] = targets.size();
  }
  const std::size_t d = graph.feature_dim();
  DenseMatrix features(nodes.size(), d);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::copy_n(graph.features().row(nodes[i]).begin(), d, features.row(i).begin());
  }
  std::optional<std::vector<int>> labels;
  if (graph.has_labels()) {
    std::vector<int> l(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) l[i] = graph.labels()[nodes[i]];
    labels = std::move(l);
  }
  Subgraph sub;
  sub.graph = Graph::from_csr(std::move(offsets), std::move(targets), std::move(features), std::move(labels));
  sub.original_ids.assign(nodes.begin(), nodes.end());
  return sub;
}

Subgraph sample_subgraph(const Graph& graph, std::span<const NodeId> targets, std::size_t layers,
                         std::size_t budget_per_layer, std::uint64_t seed, SamplerKind kind) {
  if (targets.empty()) throw ArgumentError("sample_subgraph: empty target set");
  const std::size_t n = graph.num_nodes();
  std::vector<char> selected(n, 0);
  std::vector<NodeId> order;
  order.reserve(targets.size());
  for (NodeId t : targets) {
    if (t >= n) throw ArgumentError("sample_subgraph: target out of range");
    if (!selected[t]) {
      selected[t] = 1;
      order.push_back(t);
    }
  }
  const std::size_t num_targets = order.size();

  std::vector<NodeId> layer(order);
  std::vector<Real> weight(n, 0.0);
  std::vector<NodeId> candidates;
  for (std::size_t round = 0; round < layers && !layer.empty(); ++round) {
    candidates.clear();
    for (NodeId v : layer) {
      const auto dv = static_cast<Real>(graph.degree(v));
      for (NodeId u : graph.neighbors(v)) {
        if (selected[u]) continue;
        if (weight[u] == 0.0) candidates.push_back(u);
        // Squared entry of D^-1/2 A D^-1/2 at (v, u).
        weight[u] += 1.0 / (dv * static_cast<Real>(graph.degree(u)));
      }
    }
    std::sort(candidates.begin(), candidates.end());

    Rng rng(seed, "subgraph", round);
    std::vector<NodeId> picked;
    if (candidates.size() <= budget_per_layer) {
      picked = candidates;
    } else if (kind == SamplerKind::kLadies) {
      // Weighted sampling without replacement (Efraimidis-Spirakis keys).
      std::vector<std::pair<Real, NodeId>> keys;
      keys.reserve(candidates.size());
      for (NodeId u : candidates) keys.emplace_back(std::log(rng.uniform_open0()) / weight[u], u);
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(budget_per_layer), keys.end(),
                        [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
      for (std::size_t k = 0; k < budget_per_layer; ++k) picked.push_back(keys[k].second);
    } else {
      picked = candidates;
      for (std::size_t i = 0; i < budget_per_layer; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.index(picked.size() - i));
        std::swap(picked[i], picked[j]);
      }
      picked.resize(budget_per_layer);
    }
    for (NodeId u : candidates) weight[u] = 0.0;
    for (NodeId u : picked) selected[u] = 1;
    layer = picked;
    order.insert(order.end(), picked.begin(), picked.end());
  }
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(num_targets), order.end());
  return induced_subgraph(graph, order);
}

EdgeHoldout hold_out_edges(const Graph& graph, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ArgumentError("hold-out fraction must lie in [0, 1)");
  auto edges = graph.undirected_edges();
  Rng rng(seed, "edge-holdout");
  shuffle(edges, rng);
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(edges.size())));
  EdgeHoldout out;
  out.held_out.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.held_out.begin(), out.held_out.end());
  std::vector<Edge> kept(edges.begin() + static_cast<std::ptrdiff_t>(count), edges.end());
  std::optional<std::vector<int>> labels;
  if (graph.has_labels()) labels = graph.labels();
  out.train_graph = Graph::from_edges(kept, graph.features(), std::move(labels));
  return out;
}

}  // namespace ultradp
