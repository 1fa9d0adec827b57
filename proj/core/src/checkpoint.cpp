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

#include "ultradp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ultradp {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'U', 'D', 'P', 'C'};

json spec_to_json(const ModelSpec& s) {
  return json{{"backbone", std::string(to_string(s.gnn.backbone))},
              {"num_layers", s.gnn.num_layers},
              {"hidden_dim", s.gnn.hidden_dim},
              {"heads", s.gnn.heads},
              {"activation", static_cast<int>(s.gnn.activation)},
              {"feature_dim", s.feature_dim},
              {"num_tasks", s.num_tasks},
              {"num_anchors", s.num_anchors},
              {"w_pos", s.w_pos},
              {"use_prompts", s.use_prompts}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.gnn.backbone = parse_backbone(j.at("backbone").get<std::string>());
  s.gnn.num_layers = j.at("num_layers").get<std::size_t>();
  s.gnn.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  s.gnn.heads = j.at("heads").get<std::size_t>();
  s.gnn.activation = static_cast<Activation>(j.at("activation").get<int>());
  s.feature_dim = j.at("feature_dim").get<std::size_t>();
  s.num_tasks = j.at("num_tasks").get<std::size_t>();
  s.num_anchors = j.at("num_anchors").get<std::size_t>();
  s.w_pos = j.at("w_pos").get<Real>();
  s.use_prompts = j.at("use_prompts").get<bool>();
  return s;
}

bool same_spec(const ModelSpec& a, const ModelSpec& b) { return spec_to_json(a) == spec_to_json(b); }

}  // namespace

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
  return s;
}

bool ModelCheckpoint::operator==(const ModelCheckpoint& o) const {
  return config_text == o.config_text && config_hash == o.config_hash && tasks == o.tasks && same_spec(spec, o.spec) &&
         anchors == o.anchors && optimizer_step == o.optimizer_step &&
         std::memcmp(&validation_loss, &o.validation_loss, sizeof(Real)) == 0 && epochs_run == o.epochs_run &&
         tensors == o.tensors;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  json directory = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    directory.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
    offset += t.size();
  }
  std::uint64_t loss_bits = 0;
  std::memcpy(&loss_bits, &ckpt.validation_loss, sizeof(loss_bits));
  const json header{{"config", ckpt.config_text},
                    {"config_hash", to_hex(ckpt.config_hash)},
                    {"tasks", ckpt.tasks},
                    {"model", spec_to_json(ckpt.spec)},
                    {"anchors", ckpt.anchors.ids},
                    {"anchor_step", ckpt.anchors.step},
                    {"optimizer_step", ckpt.optimizer_step},
                    {"validation_loss_bits", loss_bits},
                    {"epochs_run", ckpt.epochs_run},
                    {"tensors", directory}};
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t header_len = text.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();

  const std::size_t preamble = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < preamble) throw FormatError("checkpoint truncated: missing preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof(version));
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, sizeof(header_len));
  if (header_len > bytes.size() - preamble) throw FormatError("checkpoint truncated: header");

  json header;
  try {
    header = json::parse(bytes.substr(preamble, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  ModelCheckpoint ckpt;
  try {
    ckpt.config_text = header.at("config").get<std::string>();
    ckpt.config_hash = std::stoull(header.at("config_hash").get<std::string>(), nullptr, 16);
    ckpt.tasks = header.at("tasks").get<std::vector<std::string>>();
    ckpt.spec = spec_from_json(header.at("model"));
    ckpt.anchors.ids = header.at("anchors").get<std::vector<NodeId>>();
    ckpt.anchors.step = header.at("anchor_step").get<std::size_t>();
    ckpt.optimizer_step = header.at("optimizer_step").get<std::uint64_t>();
    const auto loss_bits = header.at("validation_loss_bits").get<std::uint64_t>();
    std::memcpy(&ckpt.validation_loss, &loss_bits, sizeof(loss_bits));
    ckpt.epochs_run = header.at("epochs_run").get<std::size_t>();
    const char* payload = bytes.data() + preamble + header_len;
    const std::size_t available = (bytes.size() - preamble - header_len) / sizeof(Real);
    for (const auto& entry : header.at("tensors")) {
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (offset + rows * cols > available) throw FormatError("checkpoint truncated: tensor payload");
      std::vector<Real> values(rows * cols);
      std::memcpy(values.data(), payload + offset * sizeof(Real), values.size() * sizeof(Real));
      ckpt.tensors.emplace(entry.at("name").get<std::string>(), ad::Tensor({rows, cols}, std::move(values)));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("checkpoint header: bad config hash");
  }
  return ckpt;
}

ModelCheckpoint make_checkpoint(Model& model, const OptimizerState* optimizer) {
  ModelCheckpoint ckpt;
  ckpt.spec = model.spec;
  const auto params = model.named_tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, t] = params[k];
    ckpt.tensors.emplace(name, ad::Tensor(t->shape(), std::vector<Real>(t->values().begin(), t->values().end())));
    if (optimizer != nullptr) {
      ckpt.tensors.emplace("adam.m." + name, optimizer->m.at(k));
      ckpt.tensors.emplace("adam.v." + name, optimizer->v.at(k));
    }
  }
  if (optimizer != nullptr) ckpt.optimizer_step = optimizer->step;
  return ckpt;
}

Model restore_model(const ModelCheckpoint& ckpt) {
  Model model = init_model(ckpt.spec, 0);
  for (auto& [name, t] : model.named_tensors()) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint lacks tensor " + name);
    if (it->second.shape() != t->shape()) {
      throw FormatError("checkpoint tensor " + name + " has shape " + ad::to_string(it->second.shape()) + ", expected " +
                        ad::to_string(t->shape()));
    }
    std::copy(it->second.values().begin(), it->second.values().end(), t->values().begin());
  }
  return model;
}

OptimizerState restore_optimizer(const ModelCheckpoint& ckpt, Model& model) {
  const auto params = model.named_tensors();
  OptimizerState state = OptimizerState::for_params(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto m = ckpt.tensors.find("adam.m." + params[k].first);
    const auto v = ckpt.tensors.find("adam.v." + params[k].first);
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end()) return OptimizerState::for_params(params);
    state.m[k] = m->second;
    state.v[k] = v->second;
  }
  state.step = ckpt.optimizer_step;
  return state;
}

}  // namespace ultradp
