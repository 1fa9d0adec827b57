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

#include "ultradp/reachability.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#ifdef ULTRADP_HAVE_OPENMP
#include <omp.h>
#endif

namespace ultradp {

Real CsrMatrix::at(std::size_t i, std::size_t j) const {
  const auto cols = row_columns(i);
  const auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) return 0.0;
  return values[offsets[i] + static_cast<std::size_t>(it - cols.begin())];
}

CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b, Real prune) {
  if (a.n != b.n) throw DimensionError("multiply: size mismatch");
  const std::size_t n = a.n;
  std::vector<std::vector<std::uint64_t>> row_cols(n);
  std::vector<std::vector<Real>> row_vals(n);

#ifdef ULTRADP_HAVE_OPENMP
#pragma omp parallel
#endif
  {
    // Dense accumulator per thread; `touched` tracks the row pattern.
    std::vector<Real> acc(n, 0.0);
    std::vector<char> mark(n, 0);
    std::vector<std::uint64_t> touched;
#ifdef ULTRADP_HAVE_OPENMP
#pragma omp for schedule(dynamic, 64)
#endif
    for (std::int64_t si = 0; si < static_cast<std::int64_t>(n); ++si) {
      const auto i = static_cast<std::size_t>(si);
      touched.clear();
      const auto a_cols = a.row_columns(i);
      const auto a_vals = a.row_values(i);
      for (std::size_t k = 0; k < a_cols.size(); ++k) {
        const auto h = a_cols[k];
        const Real w = a_vals[k];
        const auto b_cols = b.row_columns(h);
        const auto b_vals = b.row_values(h);
        for (std::size_t q = 0; q < b_cols.size(); ++q) {
          const auto j = b_cols[q];
          if (!mark[j]) {
            mark[j] = 1;
            touched.push_back(j);
          }
          acc[j] += w * b_vals[q];
        }
      }
      std::sort(touched.begin(), touched.end());
      auto& cols = row_cols[i];
      auto& vals = row_vals[i];
      for (auto j : touched) {
        if (std::abs(acc[j]) >= prune) {
          cols.push_back(j);
          vals.push_back(acc[j]);
        }
        acc[j] = 0.0;
        mark[j] = 0;
      }
    }
  }

  CsrMatrix c;
  c.n = n;
  c.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) c.offsets[i + 1] = c.offsets[i] + row_cols[i].size();
  c.columns.reserve(c.offsets.back());
  c.values.reserve(c.offsets.back());
  for (std::size_t i = 0; i < n; ++i) {
    c.columns.insert(c.columns.end(), row_cols[i].begin(), row_cols[i].end());
    c.values.insert(c.values.end(), row_vals[i].begin(), row_vals[i].end());
  }
  return c;
}

CsrMatrix build_transition(const Graph& graph) {
  CsrMatrix p;
  p.n = graph.num_nodes();
  p.offsets.assign(graph.csr_offsets().begin(), graph.csr_offsets().end());
  p.columns.assign(graph.csr_targets().begin(), graph.csr_targets().end());
  p.values.resize(p.columns.size());
  for (std::size_t i = 0; i < p.n; ++i) {
    const auto deg = graph.degree(static_cast<NodeId>(i));
    for (auto k = p.offsets[i]; k < p.offsets[i + 1]; ++k) p.values[k] = 1.0 / static_cast<Real>(deg);
  }
  return p;
}

ReachabilityCache::ReachabilityCache(std::size_t n, std::vector<CsrMatrix> powers)
    : n_(n), powers_(std::move(powers)) {
  for (const auto& m : powers_) {
    if (m.n != n_) throw DimensionError("ReachabilityCache: power size mismatch");
  }
}

const CsrMatrix& ReachabilityCache::power(std::size_t t) const {
  if (t < 1 || t > powers_.size()) {
    throw ArgumentError("walk step " + std::to_string(t) + " outside [1, " + std::to_string(powers_.size()) + "]");
  }
  return powers_[t - 1];
}

Real ReachabilityCache::reach(NodeId i, NodeId j, std::size_t t) const {
  const auto& p = power(t);
  if (i >= n_ || j >= n_) throw ArgumentError("reach: node id out of range");
  return p.at(i, j);
}

std::vector<Real> ReachabilityCache::total_reach(std::size_t t) const {
  const auto& p = power(t);
  std::vector<Real> totals(n_, 0.0);
  for (std::size_t k = 0; k < p.nnz(); ++k) totals[p.columns[k]] += p.values[k];
  return totals;
}

ReachabilityCache build_cache(const CsrMatrix& transition, std::size_t max_step) {
  if (max_step == 0) throw ArgumentError("build_cache: max step must be >= 1");
  std::vector<CsrMatrix> powers;
  powers.reserve(max_step);
  powers.push_back(transition);
  for (std::size_t t = 2; t <= max_step; ++t) powers.push_back(multiply(powers.back(), transition));
  return ReachabilityCache(transition.n, std::move(powers));
}

// --- persistence -------------------------------------------------------------

namespace {

constexpr char kCacheMagic[4] = {'U', 'D', 'P', 'R'};

template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_vec(std::istream& is, std::vector<T>& v, std::size_t count) {
  v.resize(count);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (!is) throw FormatError("reachability cache truncated");
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("reachability cache truncated");
  return v;
}

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

}  // namespace

void save_cache(const ReachabilityCache& cache, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write cache " + path.string());
  out.write(kCacheMagic, 4);
  write_u64(out, cache.num_nodes());
  write_u64(out, cache.max_step());
  for (std::size_t t = 1; t <= cache.max_step(); ++t) {
    const auto& p = cache.power(t);
    write_u64(out, p.nnz());
    write_vec(out, p.offsets);
    write_vec(out, p.columns);
    write_vec(out, p.values);
  }
  if (!out) throw IoError("failed writing cache " + path.string());
}

ReachabilityCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cache " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0) throw FormatError(path.string() + " lacks UDPR magic");
  const auto n = read_u64(in);
  const auto steps = read_u64(in);
  std::vector<CsrMatrix> powers(steps);
  for (auto& p : powers) {
    p.n = n;
    const auto nnz = read_u64(in);
    read_vec(in, p.offsets, n + 1);
    read_vec(in, p.columns, nnz);
    read_vec(in, p.values, nnz);
    if (p.offsets.back() != nnz) throw FormatError("reachability cache offsets inconsistent");
  }
  return ReachabilityCache(n, std::move(powers));
}

Real monte_carlo_reach(const Graph& graph, NodeId i, NodeId j, std::size_t t, std::size_t walks,
                       std::uint64_t seed) {
  if (walks == 0) throw ArgumentError("monte_carlo_reach: walks must be >= 1");
  Rng rng(seed, "mc-reach");
  std::size_t hits = 0;
  for (std::size_t w = 0; w < walks; ++w) {
    NodeId at = i;
    bool stuck = false;
    for (std::size_t s = 0; s < t; ++s) {
      const auto nbrs = graph.neighbors(at);
      if (nbrs.empty()) {
        stuck = true;
        break;
      }
      at = nbrs[rng.index(nbrs.size())];
    }
    if (!stuck && at == j) ++hits;
  }
  return static_cast<Real>(hits) / static_cast<Real>(walks);
}

}  // namespace ultradp
