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

#include "ultradp/graph.hpp"

namespace ultradp {

/// Stochastic block model with class-correlated Gaussian features.
struct SbmConfig {
  std::size_t num_nodes = 1000;
  std::size_t num_blocks = 4;
  Real p_in = 0.02;
  Real p_out = 0.002;
  std::size_t feature_dim = 32;
  std::size_t informative_dims = 0;  // leading dims with class signal; 0 means all
  Real feature_signal = 1.0;  // scale of the per-class mean vectors
  Real feature_noise = 1.0;   // per-entry noise standard deviation
  std::uint64_t seed = 0;
};

/// Node i belongs to block floor(i * B / n); the block is its label.
Graph make_sbm(const SbmConfig& config);

}  // namespace ultradp
