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
#include <optional>
#include <string>

namespace ultradp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitTraining = 4;

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool link_probe = false;
};

int cmd_precompute(const CommandOptions& options);
int cmd_pretrain(const CommandOptions& options);
int cmd_eval(const CommandOptions& options);

/// Runs `body`, mapping library errors onto the exit-code contract and
/// printing a one-line diagnostic to stderr.
int guarded(const char* command, int (*body)(const CommandOptions&), const CommandOptions& options);

}  // namespace ultradp::cli
