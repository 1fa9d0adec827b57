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

#include "run_config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ultradp::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  Value parse_all() {
    Value v = parse_value();
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  Value parse_value() {
    skip_space();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    return parse_scalar();
  }

  Value parse_string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        const char e = text_[++pos_];
        if (e == 'n') out.push_back('\n');
        else if (e == 't') out.push_back('\t');
        else if (e == '"' || e == '\\') out.push_back(e);
        else fail(std::string("unknown escape \\") + e);
      } else {
        out.push_back(text_[pos_]);
      }
      ++pos_;
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return Value{out};
  }

  Value parse_array() {
    ++pos_;
    Array items;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return Value{items};
    }
    for (;;) {
      items.push_back(parse_value());
      skip_space();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          break;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        break;
      }
      fail("expected ',' or ']' in array");
    }
    return Value{items};
  }

  Value parse_scalar() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    std::string token(text_.substr(start, pos_ - start));
    if (token == "true") return Value{true};
    if (token == "false") return Value{false};
    std::string digits;
    for (char ch : token) {
      if (ch != '_') digits.push_back(ch);
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    try {
      std::size_t used = 0;
      if (is_float) {
        const double d = std::stod(digits, &used);
        if (used == digits.size()) return Value{d};
      } else {
        const long long i = std::stoll(digits, &used, 10);
        if (used == digits.size()) return Value{static_cast<std::int64_t>(i)};
      }
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + token + "'");
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

// Strips a trailing # comment that is not inside a string.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

// Typed access with unknown-key bookkeeping.
class Section {
 public:
  Section(const ConfigTree& tree, const std::string& name) : name_(name) {
    if (const auto it = tree.find(name); it != tree.end()) entries_ = &it->second;
  }

  bool has(const std::string& key) const { return entries_ != nullptr && entries_->count(key) > 0; }

  const Value* find(const std::string& key) {
    used_.insert(key);
    if (entries_ == nullptr) return nullptr;
    const auto it = entries_->find(key);
    return it == entries_->end() ? nullptr : &it->second;
  }

  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  std::string get_string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const Value* v = find(key);
    if (v == nullptr) return require(key, fallback);
    if (const auto* s = std::get_if<std::string>(&v->data)) return *s;
    throw ConfigError(where(key) + " must be a string");
  }

  std::int64_t get_int(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) {
    const Value* v = find(key);
    if (v == nullptr) return require(key, fallback);
    return as_int(*v, key);
  }

  std::size_t get_count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
    const auto i = get_int(key, fallback ? std::optional<std::int64_t>(static_cast<std::int64_t>(*fallback)) : std::nullopt);
    if (i < 0) throw ConfigError(where(key) + " must be non-negative");
    return static_cast<std::size_t>(i);
  }

  double get_real(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const Value* v = find(key);
    if (v == nullptr) return require(key, fallback);
    return as_real(*v, key);
  }

  bool get_bool(const std::string& key, bool fallback) {
    const Value* v = find(key);
    if (v == nullptr) return fallback;
    if (const auto* b = std::get_if<bool>(&v->data)) return *b;
    throw ConfigError(where(key) + " must be true or false");
  }

  const Array* get_array(const std::string& key) {
    const Value* v = find(key);
    if (v == nullptr) return nullptr;
    if (const auto* a = std::get_if<Array>(&v->data)) return a;
    throw ConfigError(where(key) + " must be an array");
  }

  std::int64_t as_int(const Value& v, const std::string& key) const {
    if (const auto* i = std::get_if<std::int64_t>(&v.data)) return *i;
    throw ConfigError(where(key) + " must be an integer");
  }

  double as_real(const Value& v, const std::string& key) const {
    if (const auto* d = std::get_if<double>(&v.data)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v.data)) return static_cast<double>(*i);
    throw ConfigError(where(key) + " must be a number");
  }

  void reject_unknown() const {
    if (entries_ == nullptr) return;
    for (const auto& [key, value] : *entries_) {
      if (used_.count(key) == 0) throw ConfigError("unknown key " + where(key));
    }
  }

 private:
  template <typename T>
  T require(const std::string& key, const std::optional<T>& fallback) const {
    if (!fallback) throw ConfigError("missing required key " + where(key));
    return *fallback;
  }

  std::string name_;
  const std::map<std::string, Value>* entries_ = nullptr;
  std::set<std::string> used_;
};

std::string render(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string render_list(const std::vector<T>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s + "]";
}

std::string_view sampler_name(SamplerKind k) { return k == SamplerKind::kLadies ? "ladies" : "neighborhood"; }

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kDefault: return "default";
    case Activation::kElu: return "elu";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

std::string canonical_text(const RunConfig& c) {
  std::ostringstream out;
  const auto& t = c.train;
  out << "[data]\nedges=" << c.edges.string() << "\nfeatures=" << c.features.string()
      << "\nlabels=" << (c.labels ? c.labels->string() : std::string()) << "\nsplit_seed=" << c.split_seed << "\n";
  out << "[model]\nbackbone=" << to_string(t.gnn.backbone) << "\nlayers=" << t.gnn.num_layers
      << "\nhidden=" << t.gnn.hidden_dim << "\nheads=" << t.gnn.heads
      << "\nactivation=" << activation_name(t.gnn.activation) << "\nprompts=" << (t.use_prompts ? "true" : "false") << "\n";
  out << "[prompt]\nanchors=" << t.num_anchors << "\nposition_step=" << t.position_step << "\nw_pos=" << render(t.w_pos) << "\n";
  out << "[pretrain]\ntasks=";
  for (const auto& task : t.tasks) out << task_key(task.kind) << ":" << render(task.probability) << ",";
  out << "\nbatch_size=" << t.batch_size << "\nlr=" << render(t.lr) << "\nweight_decay=" << render(t.weight_decay)
      << "\nmax_epochs=" << t.max_epochs << "\npatience=" << t.patience << "\nedge_margin=" << render(t.edge_margin)
      << "\nknn_margin=" << render(t.knn_margin) << "\nknn_step=" << t.knn_step << "\nknn_k=" << t.knn_k
      << "\ncl_ratio=" << render(t.cl_ratio) << "\ncl_temperature=" << render(t.cl_temperature)
      << "\nsampler=" << sampler_name(t.sampler) << "\nsampler_budget=" << t.sampler_budget << "\nseed=" << t.seed
      << "\nlink_holdout=" << render(c.link_holdout) << "\n";
  out << "[output]\ndir=" << c.output_dir.string() << "\n";
  return out.str();
}

SamplerKind parse_sampler(const std::string& s) {
  if (s == "ladies") return SamplerKind::kLadies;
  if (s == "neighborhood") return SamplerKind::kNeighborhood;
  throw ConfigError("sampler must be \"ladies\" or \"neighborhood\", got \"" + s + "\"");
}

Activation parse_activation(const std::string& s) {
  if (s == "default") return Activation::kDefault;
  if (s == "elu") return Activation::kElu;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("activation must be default, elu or relu, got \"" + s + "\"");
}

template <typename T>
std::vector<T> count_list(Section& sec, const std::string& key, std::vector<T> fallback) {
  const Array* a = sec.get_array(key);
  if (a == nullptr) return fallback;
  std::vector<T> out;
  for (const Value& v : *a) {
    const auto i = sec.as_int(v, key);
    if (i < 0) throw ConfigError(sec.where(key) + " entries must be non-negative");
    out.push_back(static_cast<T>(i));
  }
  if (out.empty()) throw ConfigError(sec.where(key) + " must not be empty");
  return out;
}

}  // namespace

ConfigTree parse_config_text(const std::string& text) {
  ConfigTree tree;
  std::string section;
  tree[section];
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!valid_key(section)) throw ConfigError("config line " + std::to_string(line_no) + ": bad section name");
      if (tree.count(section) > 0 && !tree[section].empty()) {
        throw ConfigError("config line " + std::to_string(line_no) + ": section [" + section + "] repeated");
      }
      tree[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!valid_key(key)) throw ConfigError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
    auto& entries = tree[section];
    if (entries.count(key) > 0) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    entries.emplace(key, ValueParser(trim(line.substr(eq + 1)), line_no).parse_all());
  }
  return tree;
}

RunConfig build_run_config(const ConfigTree& tree, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  static const std::set<std::string> kSections{"", "data", "model", "prompt", "pretrain", "eval", "output"};
  for (const auto& [name, entries] : tree) {
    if (kSections.count(name) == 0) throw ConfigError("unknown section [" + name + "]");
  }
  if (const auto it = tree.find(""); it != tree.end() && !it->second.empty()) {
    throw ConfigError("key '" + it->second.begin()->first + "' must be inside a section");
  }

  RunConfig c;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base_dir / path).lexically_normal();
  };

  Section data(tree, "data");
  c.edges = resolve(data.get_string("edges"));
  c.features = resolve(data.get_string("features"));
  if (data.has("labels")) c.labels = resolve(data.get_string("labels"));
  c.split_seed = static_cast<std::uint64_t>(data.get_int("split_seed", 0));
  data.reject_unknown();

  Section output(tree, "output");
  c.output_dir = resolve(output.get_string("dir", "runs"));
  output.reject_unknown();

  TrainConfig& t = c.train;
  Section model(tree, "model");
  t.gnn.backbone = parse_backbone(model.get_string("backbone", "attention"));
  t.gnn.num_layers = model.get_count("layers", 3);
  t.gnn.hidden_dim = model.get_count("hidden", 64);
  t.gnn.heads = model.get_count("heads", 8);
  t.gnn.activation = parse_activation(model.get_string("activation", "default"));
  t.use_prompts = model.get_bool("prompts", true);
  model.reject_unknown();

  Section prompt(tree, "prompt");
  t.num_anchors = prompt.get_count("anchors", 0);
  t.position_step = prompt.get_count("position_step", 9);
  t.w_pos = prompt.get_real("w_pos", 0.1);
  prompt.reject_unknown();

  Section pre(tree, "pretrain");
  if (const Array* names = pre.get_array("tasks")) {
    t.tasks.clear();
    for (const Value& v : *names) {
      const auto* s = std::get_if<std::string>(&v.data);
      if (s == nullptr) throw ConfigError("[pretrain] tasks entries must be strings");
      t.tasks.push_back({parse_task(*s), 0.0});
    }
    if (t.tasks.empty()) throw ConfigError("[pretrain] tasks must not be empty");
    for (auto& task : t.tasks) task.probability = 1.0 / static_cast<Real>(t.tasks.size());
  }
  if (const Array* probs = pre.get_array("probabilities")) {
    if (probs->size() != t.tasks.size()) throw ConfigError("[pretrain] probabilities must match tasks in length");
    for (std::size_t i = 0; i < probs->size(); ++i) t.tasks[i].probability = pre.as_real((*probs)[i], "probabilities");
  }
  t.batch_size = pre.get_count("batch_size", 256);
  t.lr = pre.get_real("lr", 0.001);
  t.weight_decay = pre.get_real("weight_decay", 0.01);
  t.max_epochs = pre.get_count("max_epochs", 500);
  t.patience = pre.get_count("patience", 50);
  t.edge_margin = pre.get_real("edge_margin", 0.5);
  t.knn_margin = pre.get_real("knn_margin", 1.0);
  t.knn_step = pre.get_count("knn_step", 6);
  t.knn_k = pre.get_count("knn_k", 5);
  t.cl_ratio = pre.get_real("cl_ratio", 0.2);
  t.cl_temperature = pre.get_real("cl_temperature", 0.5);
  t.sampler = parse_sampler(pre.get_string("sampler", "ladies"));
  t.sampler_budget = pre.get_count("sampler_budget", 512);
  t.seed = static_cast<std::uint64_t>(pre.get_int("seed", 0));
  c.link_holdout = pre.get_real("link_holdout", 0.0);
  pre.reject_unknown();
  if (seed_override) t.seed = *seed_override;
  t.validate();
  if (c.link_holdout < 0.0 || c.link_holdout >= 1.0) throw ConfigError("[pretrain] link_holdout must be in [0, 1)");

  Section eval(tree, "eval");
  c.shots = count_list<std::size_t>(eval, "shots", {8});
  c.data_seeds = count_list<std::uint64_t>(eval, "data_seeds", {0});
  c.opt_seeds = count_list<std::uint64_t>(eval, "opt_seeds", {0});
  c.baseline = eval.get_bool("baseline", false);
  c.finetune.lr = eval.get_real("lr", 0.001);
  c.finetune.weight_decay = eval.get_real("weight_decay", 0.01);
  c.finetune.max_epochs = eval.get_count("max_epochs", 200);
  c.finetune.patience = eval.get_count("patience", 50);
  c.finetune.sampler_budget = eval.get_count("sampler_budget", t.sampler_budget);
  c.finetune.sampler = t.sampler;
  eval.reject_unknown();
  c.finetune.validate();
  for (std::size_t k : c.shots) {
    if (k < 1) throw ConfigError("[eval] shots must be >= 1");
  }

  c.canonical = canonical_text(c);
  c.hash = hash_tag(c.canonical);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return build_run_config(parse_config_text(text.str()), path.parent_path(), seed_override);
}

std::filesystem::path run_directory(const RunConfig& config) {
  return config.output_dir / ("run-" + to_hex(config.hash));
}

}  // namespace ultradp::cli
