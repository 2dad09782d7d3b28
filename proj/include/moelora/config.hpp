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

// Run configuration: flat "key = value" lines, '#' starts a comment.
// Unknown keys are rejected so typos do not silently fall back to defaults.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "moelora/backbone.hpp"
#include "moelora/corpus.hpp"
#include "moelora/trainer.hpp"

namespace moelora {

struct RunConfig {
  BackboneConfig backbone;
  TrainConfig train;
  std::uint64_t backbone_seed = 7;
  std::uint64_t data_seed = 1;
  double corpus_scale = 1.0;
  std::filesystem::path out_dir;

  /// Sets one key. Throws ValidationError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Canonical "key = value" text listing every field.
  std::string echo() const;
  CorpusManifest corpus_manifest() const;
  void validate() const;
};

/// Parses "key = value" text into ordered pairs, rejecting malformed lines.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace moelora
