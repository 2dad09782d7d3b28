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

#include "moelora/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "moelora/errors.hpp"
#include "moelora/io.hpp"

namespace moelora {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || *end != '\0' || errno != 0) {
    throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto& b = backbone;
  auto& t = train;
  if (key == "layers") b.layers = to_uint(key, value);
  else if (key == "model_dim") b.model_dim = to_uint(key, value);
  else if (key == "heads") b.heads = to_uint(key, value);
  else if (key == "ffn_dim") b.ffn_dim = to_uint(key, value);
  else if (key == "input_dim") b.input_dim = to_uint(key, value);
  else if (key == "head_hidden") b.head_hidden = to_uint(key, value);
  else if (key == "adapter_mode") b.adapter_mode = parse_adapter_mode(value);
  else if (key == "lora_rank") b.lora_rank = to_uint(key, value);
  else if (key == "num_experts") b.num_experts = to_uint(key, value);
  else if (key == "top_k") b.top_k = to_uint(key, value);
  else if (key == "routing") b.routing = parse_routing(value);
  else if (key == "renormalize_topk") b.renormalize_topk = to_bool(key, value);
  else if (key == "lora_scale") b.lora_scale = to_double(key, value);
  else if (key == "lr_min") t.lr_min = to_double(key, value);
  else if (key == "lr_max") t.lr_max = to_double(key, value);
  else if (key == "cycle_epochs") t.cycle_epochs = to_uint(key, value);
  else if (key == "weight_decay") t.weight_decay = to_double(key, value);
  else if (key == "batch_size") t.batch_size = to_uint(key, value);
  else if (key == "max_epochs") t.max_epochs = to_uint(key, value);
  else if (key == "patience") t.patience = to_uint(key, value);
  else if (key == "seed") t.seed = to_uint(key, value);
  else if (key == "backbone_seed") backbone_seed = to_uint(key, value);
  else if (key == "data_seed") data_seed = to_uint(key, value);
  else if (key == "corpus_scale") corpus_scale = to_double(key, value);
  else if (key == "out_dir") out_dir = value;
  else throw ValidationError("unknown config key '" + key + "'");
}

std::string RunConfig::echo() const {
  const auto& b = backbone;
  const auto& t = train;
  std::ostringstream os;
  os << "# backbone\n"
     << "layers = " << b.layers << '\n'
     << "model_dim = " << b.model_dim << '\n'
     << "heads = " << b.heads << '\n'
     << "ffn_dim = " << b.ffn_dim << '\n'
     << "input_dim = " << b.input_dim << '\n'
     << "head_hidden = " << b.head_hidden << '\n'
     << "adapter_mode = " << adapter_mode_name(b.adapter_mode) << '\n'
     << "lora_rank = " << b.lora_rank << '\n'
     << "num_experts = " << b.num_experts << '\n'
     << "top_k = " << b.top_k << '\n'
     << "routing = " << routing_name(b.routing) << '\n'
     << "renormalize_topk = " << (b.renormalize_topk ? "true" : "false") << '\n'
     << "lora_scale = " << num(b.lora_scale) << '\n'
     << "backbone_seed = " << backbone_seed << '\n'
     << "# training\n"
     << "lr_min = " << num(t.lr_min) << '\n'
     << "lr_max = " << num(t.lr_max) << '\n'
     << "cycle_epochs = " << t.cycle_epochs << '\n'
     << "weight_decay = " << num(t.weight_decay) << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "max_epochs = " << t.max_epochs << '\n'
     << "patience = " << t.patience << '\n'
     << "seed = " << t.seed << '\n'
     << "# corpus\n"
     << "data_seed = " << data_seed << '\n'
     << "corpus_scale = " << num(corpus_scale) << '\n';
  if (!out_dir.empty()) os << "out_dir = " << out_dir.string() << '\n';
  return os.str();
}

CorpusManifest RunConfig::corpus_manifest() const {
  CorpusManifest m = CorpusManifest::defaults(data_seed);
  return corpus_scale == 1.0 ? m : m.scaled(corpus_scale);
}

void RunConfig::validate() const {
  backbone.validate();
  train.validate();
  if (!(corpus_scale > 0.0)) throw ValidationError("corpus_scale must be positive");
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError(where + ": empty key");
    if (out.count(key) != 0) throw ValidationError(where + ": duplicate key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  for (const auto& [k, v] : parse_key_values(text, origin)) cfg.set(k, v);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path), path.string());
}

}  // namespace moelora
