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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ultradp/autodiff.hpp"
#include "ultradp/model.hpp"
#include "ultradp/optimizer.hpp"
#include "ultradp/prompt.hpp"

namespace ultradp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Flat name -> tensor container plus the metadata needed to rebuild the
/// model. File layout: "UDPC", u32 version, u64 header length, JSON header,
/// then little-endian f64 payloads in directory order.
struct ModelCheckpoint {
  std::string config_text;       // echo of the run configuration
  std::uint64_t config_hash = 0;
  std::vector<std::string> tasks;  // task-embedding row labels
  ModelSpec spec;
  AnchorSet anchors;
  std::uint64_t optimizer_step = 0;
  Real validation_loss = 0.0;
  std::size_t epochs_run = 0;
  std::map<std::string, ad::Tensor> tensors;

  bool operator==(const ModelCheckpoint& other) const;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
/// Throws FormatError on bad magic, version or truncated/inconsistent data.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of model tensors (and optimizer moments when given, stored as
/// "adam.m.<name>" / "adam.v.<name>").
ModelCheckpoint make_checkpoint(Model& model, const OptimizerState* optimizer = nullptr);
/// Rebuilds a model from the stored spec and tensors. Missing or
/// mis-shaped tensors raise FormatError.
Model restore_model(const ModelCheckpoint& checkpoint);
/// Optimizer moments for `model`'s parameter list; zero state when absent.
OptimizerState restore_optimizer(const ModelCheckpoint& checkpoint, Model& model);

std::string to_hex(std::uint64_t value);

}  // namespace ultradp
