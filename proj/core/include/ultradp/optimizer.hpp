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
#include <string>
#include <utility>
#include <vector>

#include "ultradp/autodiff.hpp"

namespace ultradp {

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor*>>;

/// Adaptive-moment state with decoupled weight decay. Moments are kept in
/// the order of the parameter list handed to adamw_step.
struct OptimizerState {
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;

  /// Zero moments shaped like `params`.
  static OptimizerState for_params(const NamedTensors& params);
};

/// One AdamW update from each parameter's grad(): p -= lr*wd*p, then the
/// bias-corrected adaptive step. Throws TrainingError naming the parameter
/// when a gradient entry is not finite; no parameter is modified then.
void adamw_step(const NamedTensors& params, OptimizerState& state, Real lr, Real weight_decay);

}  // namespace ultradp
