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

#include "ultradp/optimizer.hpp"

#include <cmath>

namespace ultradp {

OptimizerState OptimizerState::for_params(const NamedTensors& params) {
  OptimizerState s;
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t->shape(), 0.0, false);
    s.v.emplace_back(t->shape(), 0.0, false);
  }
  return s;
}

void adamw_step(const NamedTensors& params, OptimizerState& state, Real lr, Real weight_decay) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adamw_step: optimizer state has " + std::to_string(state.m.size()) + " slots for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, t] = params[k];
    if (state.m[k].shape() != t->shape() || state.v[k].shape() != t->shape()) {
      throw DimensionError("adamw_step: moment shape mismatch for " + name);
    }
    const auto g = t->grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw TrainingError("non-finite gradient " + std::to_string(g[i]) + " in " + name + " at flat index " +
                            std::to_string(i) + " (step " + std::to_string(state.step + 1) + ")");
      }
    }
  }
  ++state.step;
  const Real t = static_cast<Real>(state.step);
  const Real c1 = 1.0 - std::pow(state.beta1, t);
  const Real c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Tensor& p = *params[k].second;
    const auto g = p.grad();
    auto pv = p.values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      pv[i] -= lr * weight_decay * pv[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      pv[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace ultradp
