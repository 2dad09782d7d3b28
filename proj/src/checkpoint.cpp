// Copyright (c) 2026 The moelora Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "moelora/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moelora/errors.hpp"
#include "moelora/io.hpp"

namespace moelora {

const StoredTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"model_dim", c.model_dim},
                     {"heads", c.heads},
                     {"ffn_dim", c.ffn_dim},
                     {"input_dim", c.input_dim},
                     {"head_hidden", c.head_hidden},
                     {"adapter_mode", adapter_mode_name(c.adapter_mode)},
                     {"lora_rank", c.lora_rank},
                     {"num_experts", c.num_experts},
                     {"top_k", c.top_k},
                     {"routing", routing_name(c.routing)},
                     {"renormalize_topk", c.renormalize_topk},
                     {"lora_scale", c.lora_scale}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  c.layers = j.at("layers").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.adapter_mode = parse_adapter_mode(j.at("adapter_mode").get<std::string>());
  c.lora_rank = j.at("lora_rank").get<std::size_t>();
  c.num_experts = j.at("num_experts").get<std::size_t>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.routing = parse_routing(j.at("routing").get<std::string>());
  c.renormalize_topk = j.at("renormalize_topk").get<bool>();
  c.lora_scale = j.at("lora_scale").get<double>();
}

Checkpoint snapshot(const Model& model) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.backbone_seed = model.backbone_seed;
  ckpt.init_seed = model.init_seed;
  for (const auto& nt : model.trainable()) {
    const auto src = nt.tensor.data();
    ckpt.tensors.push_back({nt.name, nt.tensor.shape(), std::vector<float>(src.begin(), src.end())});
  }
  return ckpt;
}

void load_weights(const Checkpoint& ckpt, Model& model) {
  for (auto& nt : model.trainable()) {
    const StoredTensor* st = ckpt.find(nt.name);
    if (st == nullptr) throw ValidationError("checkpoint lacks tensor " + nt.name);
    if (st->shape != nt.tensor.shape()) {
      throw DimensionError("checkpoint tensor " + nt.name + " has shape " + shape_str(st->shape) + ", model expects " +
                           shape_str(nt.tensor.shape()));
    }
    auto dst = nt.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(st->data[i]);
  }
}

Model restore(const Checkpoint& ckpt) {
  Model model(ckpt.config, ckpt.backbone_seed, ckpt.init_seed);
  load_weights(ckpt, model);
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.data.size() != shape_numel(t.shape)) throw ContractError("tensor " + t.name + " size does not match its shape");
    dir.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.data.size()}});
    offset += t.data.size() * sizeof(float);
  }
  const nlohmann::json header{{"version", ckpt.version},
                              {"config", ckpt.config},
                              {"backbone_seed", ckpt.backbone_seed},
                              {"init_seed", ckpt.init_seed},
                              {"epoch", ckpt.epoch},
                              {"dev_eer", ckpt.dev_eer},
                              {"optimizer_step", ckpt.optimizer_step},
                              {"tensors", dir}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  for (const auto& t : ckpt.tensors)
    for (float v : t.data) write_le<float>(out, v);
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty checkpoint " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.version = header.at("version").get<int>();
    if (ckpt.version != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " + path.string());
    }
    ckpt.config = header.at("config").get<BackboneConfig>();
    ckpt.backbone_seed = header.at("backbone_seed").get<std::uint64_t>();
    ckpt.init_seed = header.at("init_seed").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.dev_eer = header.at("dev_eer").get<double>();
    ckpt.optimizer_step = header.at("optimizer_step").get<std::uint64_t>();
    std::uint64_t expected = 0;
    for (const auto& e : header.at("tensors")) {
      StoredTensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      const auto count = e.at("count").get<std::size_t>();
      if (e.at("offset").get<std::uint64_t>() != expected || count != shape_numel(t.shape)) {
        throw IoError("inconsistent tensor directory entry " + t.name + " in " + path.string());
      }
      expected += count * sizeof(float);
      t.data.resize(count);
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  for (auto& t : ckpt.tensors)
    for (auto& v : t.data) v = read_le<float>(in, path);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint " + path.string());
  ckpt.config.validate();
  return ckpt;
}

}  // namespace moelora
