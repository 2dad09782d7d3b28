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

// Synthetic bonafide / spoof feature-sequence corpus.
//
// Bonafide clips are a smooth AR(1) process plus two slow sinusoids per
// dimension. Each spoof family applies one deterministic corruption:
//   A01  alternating-sign ripple, +/-0.3 per frame
//   A02  per-dimension quantization to 8 levels
//   A03  centred moving average over 5 frames
//   A04  a contiguous band of 4 dimensions set to zero
//   A05  +0.5 offset on every dimension
// A01-A03 are in-domain (train/dev/eval_id); A04-A05 appear only in eval_ood.
//
// On-disk layout of a dataset directory:
//   manifest.json  generation parameters, enough to regenerate bit-exactly
//   clips.bin      per clip, little-endian: u32 id length, id bytes, u32 T,
//                  u32 d_in, u8 label, u8 family code, T*d_in float32
//   splits.csv     id,split,family,label

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moelora/rng.hpp"
#include "moelora/tensor.hpp"

namespace moelora {

enum class Split { Train = 0, Dev = 1, EvalId = 2, EvalOod = 3 };
inline constexpr std::array<Split, 4> kAllSplits{Split::Train, Split::Dev, Split::EvalId, Split::EvalOod};
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

inline constexpr int kBonafide = 0;
inline constexpr int kSpoof = 1;

/// "bona" -> 0, "A01".."A05" -> 1..5. Unknown names throw ValidationError.
std::uint8_t family_code(std::string_view family);
std::string family_name(std::uint8_t code);

struct Clip {
  std::string id;
  Tensor frames;  // [T x d_in], float32-representable values
  int label = kBonafide;
  std::string family;
  Split split = Split::Train;
};

struct GenerationParams {
  std::size_t min_frames = 40;
  std::size_t max_frames = 120;
  std::size_t feature_dim = 16;
  double ar_coef = 0.9;
  double ar_noise = 0.3;
  double sine_amp_min = 0.5;
  double sine_amp_max = 1.0;
  double sine_freq_min = 0.01;  // cycles per frame
  double sine_freq_max = 0.05;
  double ripple_amp = 0.3;
  std::size_t quant_levels = 8;
  std::size_t smear_window = 5;
  std::size_t band_start = 4;
  std::size_t band_width = 4;
  double offset = 0.5;
};

struct SplitSpec {
  std::size_t bonafide = 0;
  std::size_t spoof = 0;
  std::vector<std::string> families;  // spoof families, assigned round-robin
};

struct CorpusManifest {
  std::uint64_t seed = 1;
  GenerationParams gen;
  std::array<SplitSpec, 4> splits;  // indexed by Split

  /// 2000 train (1000 bona + 1000 A01-A03), 400 dev, 400 eval_id,
  /// 400 eval_ood (bona + A04-A05).
  static CorpusManifest defaults(std::uint64_t seed = 1);
  /// Same family layout with every count multiplied by `factor`.
  CorpusManifest scaled(double factor) const;
  std::size_t total_clips() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusManifest& m);
void from_json(const nlohmann::json& j, CorpusManifest& m);

/// One clip of `family` with T frames drawn from `rng`.
Clip gen_clip(std::string_view family, std::size_t T, Rng& rng, const GenerationParams& params = {});

struct Dataset {
  CorpusManifest manifest;
  std::vector<Clip> clips;

  std::vector<const Clip*> split(Split s) const;
};

/// In-memory generation; every clip has its own substream keyed by its id.
Dataset generate_corpus(const CorpusManifest& manifest);

void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// generate_corpus + write_dataset.
Dataset gen_dataset(const CorpusManifest& manifest, const std::filesystem::path& dir);

}  // namespace moelora
