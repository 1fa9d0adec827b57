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

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "run_config.hpp"
#include "ultradp/checkpoint.hpp"
#include "ultradp/finetune.hpp"
#include "ultradp/graph.hpp"
#include "ultradp/reachability.hpp"
#include "ultradp/train.hpp"

namespace ultradp::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("UDP_LOG");
  if (env == nullptr) return LogLevel::kInfo;
  const std::string v(env);
  if (v == "error") return LogLevel::kError;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& msg) {
  static const LogLevel threshold = log_level();
  static std::mutex lock;
  if (level > threshold) return;
  static constexpr const char* kNames[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> guard(lock);
  std::cerr << "[" << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

struct Workspace {
  RunConfig config;
  fs::path dir;
  Graph graph;       // as loaded
  Graph work_graph;  // training graph (held-out edges removed when probing)
  std::vector<Edge> held_out;
  SplitSpec split;
};

Workspace open_workspace(const CommandOptions& options) {
  Workspace ws;
  ws.config = load_run_config(options.config, options.seed);
  ws.dir = run_directory(ws.config);
  std::error_code ec;
  fs::create_directories(ws.dir, ec);
  if (ec) throw IoError("cannot create run directory " + ws.dir.string() + ": " + ec.message());
  log(LogLevel::kInfo, "run directory " + ws.dir.string());
  ws.graph = load_graph(ws.config.edges, ws.config.features, ws.config.labels);
  log(LogLevel::kDebug, "graph: " + std::to_string(ws.graph.num_nodes()) + " nodes, " + std::to_string(ws.graph.num_edges()) + " edges");
  if (ws.config.link_holdout > 0.0) {
    EdgeHoldout h = hold_out_edges(ws.graph, ws.config.link_holdout, ws.config.split_seed);
    ws.work_graph = std::move(h.train_graph);
    ws.held_out = std::move(h.held_out);
  } else {
    ws.work_graph = ws.graph;
  }
  ws.split = make_split(ws.graph, ws.config.split_seed);
  return ws;
}

struct CacheBundle {
  ReachabilityCache cache;
  AnchorSet anchors;
};

CacheBundle build_and_store_cache(const Workspace& ws) {
  const auto& t = ws.config.train;
  const std::size_t steps = required_cache_steps(t);
  log(LogLevel::kInfo, "building reachability cache with " + std::to_string(steps) + " steps");
  CacheBundle b;
  b.cache = build_cache(build_transition(ws.work_graph), steps);
  b.anchors = select_anchors(b.cache, t.position_step, t.resolved_anchor_count(ws.work_graph.num_nodes()));

  const std::string hash = to_hex(ws.config.hash);
  save_cache(b.cache, ws.dir / "reachability.bin");
  write_text(ws.dir / "anchors.json",
             json{{"config_hash", hash}, {"step", b.anchors.step}, {"anchors", b.anchors.ids}}.dump() + "\n");
  json files = json::array({"reachability.bin", "anchors.json"});
  if (!ws.held_out.empty()) {
    std::ostringstream edges;
    edges << "# config_hash " << hash << '\n';
    for (auto [u, v] : ws.held_out) edges << u << '\t' << v << '\n';
    write_text(ws.dir / "heldout_edges.tsv", edges.str());
    files.push_back("heldout_edges.tsv");
  }
  write_text(ws.dir / "manifest.json", json{{"config_hash", hash},
                                            {"num_nodes", ws.work_graph.num_nodes()},
                                            {"max_step", steps},
                                            {"files", files},
                                            {"config", ws.config.canonical}}
                                                .dump(2) + "\n");
  return b;
}

// Loads the cached artifacts when they belong to this configuration,
// otherwise builds them.
CacheBundle ensure_cache(const Workspace& ws) {
  const fs::path manifest = ws.dir / "manifest.json";
  if (fs::exists(manifest) && fs::exists(ws.dir / "reachability.bin") && fs::exists(ws.dir / "anchors.json")) {
    const json m = read_json(manifest);
    const json a = read_json(ws.dir / "anchors.json");
    const std::string hash = to_hex(ws.config.hash);
    if (m.value("config_hash", "") == hash && a.value("config_hash", "") == hash) {
      CacheBundle b;
      b.cache = load_cache(ws.dir / "reachability.bin");
      b.anchors.ids = a.at("anchors").get<std::vector<NodeId>>();
      b.anchors.step = a.at("step").get<std::size_t>();
      if (b.cache.num_nodes() == ws.work_graph.num_nodes()) {
        log(LogLevel::kDebug, "reusing reachability cache");
        return b;
      }
    }
    log(LogLevel::kInfo, "cache in run directory does not match this configuration; rebuilding");
  }
  return build_and_store_cache(ws);
}

Real mean_of(const std::vector<Real>& xs) {
  Real s = 0.0;
  for (Real x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<Real>(xs.size());
}

Real std_of(const std::vector<Real>& xs) {
  if (xs.size() < 2) return 0.0;
  const Real m = mean_of(xs);
  Real s = 0.0;
  for (Real x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<Real>(xs.size()));
}

std::string fixed(Real v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

int cmd_precompute(const CommandOptions& options) {
  const Workspace ws = open_workspace(options);
  build_and_store_cache(ws);
  log(LogLevel::kInfo, "precompute done");
  return kExitOk;
}

int cmd_pretrain(const CommandOptions& options) {
  const Workspace ws = open_workspace(options);
  const CacheBundle bundle = ensure_cache(ws);
  const std::string hash = to_hex(ws.config.hash);
  const auto keys = ws.config.train.task_keys();

  std::ostringstream log_lines;
  log_lines << json{{"config_hash", hash}, {"tasks", keys}}.dump() << '\n';
  auto on_epoch = [&](const EpochRecord& rec) {
    json steps, train_loss, val_loss;
    for (std::size_t j = 0; j < keys.size(); ++j) {
      steps[keys[j]] = rec.task_steps[j];
      train_loss[keys[j]] = rec.task_train_loss[j];
      val_loss[keys[j]] = rec.task_val_loss[j];
    }
    log_lines << json{{"epoch", rec.epoch},         {"task_steps", steps},
                      {"train_loss", train_loss},   {"val_loss", val_loss},
                      {"validation_loss", rec.validation_loss}, {"improved", rec.improved}}
                     .dump()
              << '\n';
    log(LogLevel::kDebug, "epoch " + std::to_string(rec.epoch) + " validation loss " + fixed(rec.validation_loss, 6));
  };
  PretrainResult result = pretrain(ws.work_graph, ws.split, bundle.cache, bundle.anchors, ws.config.train, on_epoch);
  result.checkpoint.config_text = ws.config.canonical;
  result.checkpoint.config_hash = ws.config.hash;
  write_text(ws.dir / "train_log.jsonl", log_lines.str());
  save_checkpoint(result.checkpoint, ws.dir / "checkpoint.udpc");
  log(LogLevel::kInfo, "pretrain done: " + std::to_string(result.log.size()) + " epochs, best epoch " +
                           std::to_string(result.best_epoch) + ", validation loss " +
                           fixed(result.checkpoint.validation_loss, 6));
  return kExitOk;
}

int cmd_eval(const CommandOptions& options) {
  const Workspace ws = open_workspace(options);
  const RunConfig& cfg = ws.config;
  const fs::path ckpt_path = options.checkpoint.value_or(ws.dir / "checkpoint.udpc");
  const ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.config_hash != cfg.hash) {
    throw ConfigError("checkpoint " + ckpt_path.string() + " was produced by config " + to_hex(ckpt.config_hash) +
                      ", current config is " + to_hex(cfg.hash));
  }
  if (!ws.graph.has_labels()) throw ConfigError("eval needs node labels; set [data] labels");
  if (options.link_probe && ws.held_out.empty()) {
    throw ConfigError("--link-probe needs [pretrain] link_holdout > 0 so edges are held out before pre-training");
  }
  const CacheBundle bundle = ensure_cache(ws);
  if (!(bundle.anchors == ckpt.anchors)) throw ConfigError("checkpoint anchors differ from the run's anchor set");
  const Model pretrained = restore_model(ckpt);
  // The labels live on the loaded graph; the working graph shares its nodes.
  const Graph eval_graph = ws.config.link_holdout > 0.0
                               ? Graph::from_csr(std::vector<std::uint64_t>(ws.work_graph.csr_offsets().begin(),
                                                                            ws.work_graph.csr_offsets().end()),
                                                 std::vector<NodeId>(ws.work_graph.csr_targets().begin(),
                                                                     ws.work_graph.csr_targets().end()),
                                                 ws.work_graph.features(), ws.graph.labels())
                               : ws.graph;
  const DownstreamData data{eval_graph, bundle.cache, bundle.anchors, ws.split.test_nodes};

  struct Run {
    std::size_t shot;
    std::uint64_t data_seed;
    std::uint64_t opt_seed;
    std::vector<json> records;
    Real test_f1 = 0.0;
    Real baseline_f1 = 0.0;
  };
  std::vector<Run> runs;
  for (std::size_t shot : cfg.shots) {
    for (std::uint64_t ds : cfg.data_seeds) {
      for (std::uint64_t os : cfg.opt_seeds) runs.push_back({shot, ds, os, {}});
    }
  }

  auto execute = [&](Run& run) {
    const KShotSample kshot = sample_kshot(ws.split, eval_graph, run.shot, run.data_seed);
    for (const auto& d : kshot.deficits) {
      log(LogLevel::kInfo, "class " + std::to_string(d.label) + " has " + std::to_string(d.available) + " of " +
                               std::to_string(d.requested) + (d.validation ? " validation" : " training") + " nodes");
    }
    FinetuneConfig fc = cfg.finetune;
    fc.seed = run.opt_seed;
    const TransferReport report = transferability_test(pretrained, data, kshot, fc);
    const json base{{"shot", run.shot}, {"data_seed", run.data_seed}, {"opt_seed", run.opt_seed}};
    for (const auto& c : report.candidates) {
      json r = base;
      r["type"] = "candidate";
      r["init_task"] = c.init_task;
      r["task"] = c.init_task < ckpt.tasks.size() ? ckpt.tasks[c.init_task] : std::to_string(c.init_task);
      r["val_f1"] = c.val_f1;
      r["test_f1"] = c.test_f1;
      r["val_loss"] = c.val_loss;
      r["best_epoch"] = c.best_epoch;
      run.records.push_back(r);
    }
    json sel = base;
    sel["type"] = "selection";
    sel["chosen"] = report.chosen;
    sel["task"] = report.chosen < ckpt.tasks.size() ? ckpt.tasks[report.chosen] : std::to_string(report.chosen);
    sel["test_f1"] = report.test_f1;
    run.records.push_back(sel);
    run.test_f1 = report.test_f1;
    if (cfg.baseline) {
      ModelSpec spec = pretrained.spec;
      spec.num_tasks = 1;
      const Model fresh = init_model(spec, derive_seed(run.opt_seed, "baseline"));
      const FinetuneResult b = finetune_one(fresh, data, kshot, 0, fc);
      json r = base;
      r["type"] = "baseline";
      r["val_f1"] = b.val_f1;
      r["test_f1"] = b.test_f1;
      run.records.push_back(r);
      run.baseline_f1 = b.test_f1;
    }
    log(LogLevel::kInfo, "shot " + std::to_string(run.shot) + " data seed " + std::to_string(run.data_seed) +
                             " opt seed " + std::to_string(run.opt_seed) + ": test Micro-F1 " + fixed(run.test_f1, 4));
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, runs.size()));
  if (jobs == 1) {
    for (auto& r : runs) execute(r);
  } else {
    std::vector<std::exception_ptr> errors(runs.size());
    std::size_t next = 0;
    std::mutex lock;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          std::size_t i = 0;
          {
            std::lock_guard<std::mutex> guard(lock);
            if (next >= runs.size()) return;
            i = next++;
          }
          try {
            execute(runs[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const std::string hash = to_hex(cfg.hash);
  std::ostringstream report;
  report << json{{"type", "header"}, {"config_hash", hash}, {"checkpoint", ckpt_path.string()}, {"tasks", ckpt.tasks}}.dump()
         << '\n';
  for (const auto& run : runs) {
    for (const auto& r : run.records) report << r.dump() << '\n';
  }
  if (options.link_probe) {
    Model trained = pretrained;
    std::size_t row = 0;
    for (std::size_t j = 0; j < ckpt.tasks.size(); ++j) {
      if (ckpt.tasks[j] == "edge") row = j;
    }
    const Real trained_auc = link_auc(trained, ws.work_graph, ws.held_out, bundle.cache, bundle.anchors, row, cfg.split_seed);
    Model untrained = init_model(pretrained.spec, derive_seed(cfg.train.seed, "untrained"));
    const Real untrained_auc =
        link_auc(untrained, ws.work_graph, ws.held_out, bundle.cache, bundle.anchors, row, cfg.split_seed);
    report << json{{"type", "link_auc"}, {"model", "pretrained"}, {"task", ckpt.tasks.at(row)}, {"auc", trained_auc}}.dump() << '\n';
    report << json{{"type", "link_auc"}, {"model", "untrained"}, {"task", ckpt.tasks.at(row)}, {"auc", untrained_auc}}.dump() << '\n';
    log(LogLevel::kInfo, "link AUC pretrained " + fixed(trained_auc, 4) + ", untrained " + fixed(untrained_auc, 4));
  }
  write_text(ws.dir / "eval_report.jsonl", report.str());

  std::ostringstream csv;
  std::ostringstream table;
  csv << "# config_hash " << hash << '\n' << "shot,runs,test_f1_mean,test_f1_std";
  table << "shot  runs  Micro-F1 (%)";
  if (cfg.baseline) {
    csv << ",baseline_f1_mean,baseline_f1_std";
    table << "      no pre-train (%)";
  }
  csv << '\n';
  table << '\n';
  for (std::size_t shot : cfg.shots) {
    std::vector<Real> scores, base;
    for (const auto& run : runs) {
      if (run.shot != shot) continue;
      scores.push_back(run.test_f1);
      base.push_back(run.baseline_f1);
    }
    csv << shot << ',' << scores.size() << ',' << fixed(mean_of(scores), 6) << ',' << fixed(std_of(scores), 6);
    table << shot << (shot < 10 ? "     " : "    ") << scores.size() << "     " << fixed(100 * mean_of(scores), 1)
          << " ± " << fixed(100 * std_of(scores), 1);
    if (cfg.baseline) {
      csv << ',' << fixed(mean_of(base), 6) << ',' << fixed(std_of(base), 6);
      table << "      " << fixed(100 * mean_of(base), 1) << " ± " << fixed(100 * std_of(base), 1);
    }
    csv << '\n';
    table << '\n';
  }
  write_text(ws.dir / "eval_summary.csv", csv.str());
  std::cout << table.str();
  return kExitOk;
}

int guarded(const char* command, int (*body)(const CommandOptions&), const CommandOptions& options) {
  auto fail = [&](int code, const std::string& kind, const std::exception& e) {
    log(LogLevel::kError, std::string(command) + ": " + kind + ": " + e.what());
    return code;
  };
  try {
    return body(options);
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "configuration error", e);
  } catch (const ArgumentError& e) {
    return fail(kExitConfig, "configuration error", e);
  } catch (const DimensionError& e) {
    return fail(kExitConfig, "configuration error", e);
  } catch (const IoError& e) {
    return fail(kExitIo, "I/O error", e);
  } catch (const MalformedInputError& e) {
    return fail(kExitIo, "malformed input", e);
  } catch (const FormatError& e) {
    return fail(kExitIo, "format error", e);
  } catch (const TrainingError& e) {
    return fail(kExitTraining, "training error", e);
  } catch (const DomainError& e) {
    return fail(kExitTraining, "numeric error", e);
  } catch (const SamplingError& e) {
    return fail(kExitTraining, "sampling error", e);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kExitIo, "I/O error", e);
  } catch (const std::exception& e) {
    return fail(kExitTraining, "error", e);
  }
}

}  // namespace ultradp::cli
