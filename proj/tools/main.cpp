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

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace ultradp::cli;
  CLI::App app{"ultradp: dual-prompt graph pre-training"};
  app.require_subcommand(1);
  CommandOptions options;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config, "Run configuration file")->required();
    sub->add_option("--seed", seed, "Override [pretrain] seed");
    sub->add_option("--jobs", options.jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);
  };
  CLI::App* precompute = app.add_subcommand("precompute", "Build the reachability cache and anchor set");
  add_common(precompute);
  CLI::App* pretrain = app.add_subcommand("pretrain", "Hybrid pre-training; writes checkpoint and training log");
  add_common(pretrain);
  CLI::App* eval = app.add_subcommand("eval", "K-shot fine-tuning with the transferability test");
  add_common(eval);
  eval->add_option("--checkpoint", options.checkpoint, "Checkpoint (default: the run directory's)");
  eval->add_flag("--link-probe", options.link_probe, "Also report link-prediction AUC on held-out edges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (CLI::App* sub : {precompute, pretrain, eval}) {
    if (sub->parsed() && sub->count("--seed") > 0) options.seed = seed;
  }
  if (precompute->parsed()) return guarded("precompute", cmd_precompute, options);
  if (pretrain->parsed()) return guarded("pretrain", cmd_pretrain, options);
  return guarded("eval", cmd_eval, options);
}
