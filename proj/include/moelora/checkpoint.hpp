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

// Checkpoint file: one line of JSON (version, backbone config, seeds,
// training metadata and a tensor directory of name/shape/offset/count),
// a newline, then every tensor as little-endian float32 in directory order.
// Offsets are in bytes from the start of the payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moelora/backbone.hpp"
#include "moelora/model.hpp"

namespace moelora {

inline constexpr int kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  BackboneConfig config;
  std::uint64_t backbone_seed = 0;
  std::uint64_t init_seed = 0;
  int epoch = 0;
  double dev_eer = 0.0;
  std::uint64_t optimizer_step = 0;
  /// Trainable tensors first, then optimizer moments as "opt.m.<name>" and
  /// "opt.v.<name>" when present.
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const;
};

void to_json(nlohmann::json& j, const BackboneConfig& cfg);
void from_json(const nlohmann::json& j, BackboneConfig& cfg);

/// Trainable tensors of `model`, rounded to float32.
Checkpoint snapshot(const Model& model);

/// Rebuilds the model: frozen weights from the stored seed, trainable
/// tensors from the file.
Model restore(const Checkpoint& ckpt);
/// Copies stored trainable tensors into an existing model of the same shape.
void load_weights(const Checkpoint& ckpt, Model& model);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace moelora
