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
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ultradp/finetune.hpp"
#include "ultradp/train.hpp"

namespace ultradp::cli {

struct Value;
using Array = std::vector<Value>;
struct Value {
  std::variant<std::int64_t, double, bool, std::string, Array> data;
};

/// section -> key -> value. Top-level keys live in section "".
using ConfigTree = std::map<std::string, std::map<std::string, Value>>;

/// Parses the TOML subset used by run files: [section] headers, key = value
/// lines, # comments, integers, floats, booleans, double-quoted strings and
/// single-line arrays. Throws ConfigError with a line number on bad syntax.
ConfigTree parse_config_text(const std::string& text);

struct RunConfig {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::optional<std::filesystem::path> labels;
  std::uint64_t split_seed = 0;
  std::filesystem::path output_dir = "runs";

  TrainConfig train;
  Real link_holdout = 0.0;

  FinetuneConfig finetune;
  std::vector<std::size_t> shots{8};
  std::vector<std::uint64_t> data_seeds{0};
  std::vector<std::uint64_t> opt_seeds{0};
  bool baseline = false;

  /// Canonical rendering of every section that shapes the artifacts
  /// ([eval] excluded), and its 64-bit FNV hash.
  std::string canonical;
  std::uint64_t hash = 0;
};

/// Relative data paths resolve against `base_dir`. Unknown sections or keys,
/// missing required keys and ill-typed values raise ConfigError.
RunConfig build_run_config(const ConfigTree& tree, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

std::filesystem::path run_directory(const RunConfig& config);

}  // namespace ultradp::cli
