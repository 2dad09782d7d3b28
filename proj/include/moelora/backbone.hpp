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

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "moelora/moe_lora.hpp"
#include "moelora/rng.hpp"
#include "moelora/tensor.hpp"

namespace moelora {

enum class AdapterMode { None, SingleLora, MoeLora };

std::string_view adapter_mode_name(AdapterMode mode);
AdapterMode parse_adapter_mode(std::string_view name);
std::string_view routing_name(Routing routing);
Routing parse_routing(std::string_view name);

struct BackboneConfig {
  std::size_t layers = 4;
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t input_dim = 16;
  std::size_t head_hidden = 32;
  AdapterMode adapter_mode = AdapterMode::MoeLora;
  std::size_t lora_rank = 8;
  std::size_t num_experts = 3;
  std::size_t top_k = 3;
  Routing routing = Routing::PerToken;
  bool renormalize_topk = false;
  double lora_scale = 1.0;

  /// Throws ValidationError on inconsistent values.
  void validate() const;
};

/// Pre-norm transformer block. Attention projections are adapter-wrapped.
struct EncoderLayer {
  Tensor ln1_gamma, ln1_beta;
  std::array<MoeLoraProjection, 4> attn;  // indexed by Site
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn_w1, ffn_b1;  // [f x d], [f]
  Tensor ffn_w2, ffn_b2;  // [d x f], [d]
};

struct FrozenEncoder {
  BackboneConfig config;
  Tensor embed_w, embed_b;  // [d x d_in], [d]
  std::vector<EncoderLayer> layers;
  Tensor final_gamma, final_beta;

  /// Every frozen tensor, in a fixed order.
  std::vector<Tensor> frozen_tensors() const;
  /// Every projection site, layer-major.
  std::vector<const MoeLoraProjection*> projections() const;
  std::vector<MoeLoraProjection*> projections();
  void set_train_mode(bool on);
};

/// Frozen weights come from `frozen_rng`, adapters from `adapter_rng`, so one
/// backbone can carry differently seeded adapters.
FrozenEncoder build_backbone(const BackboneConfig& cfg, const Rng& frozen_rng, const Rng& adapter_rng);
inline FrozenEncoder build_backbone(const BackboneConfig& cfg, const Rng& rng) {
  return build_backbone(cfg, rng, rng.derive("adapters"));
}

/// Sinusoidal position table [T x d].
Tensor positional_encoding(std::size_t T, std::size_t d);

/// X [T x d_in] -> frames [T x d].
Tensor encode(const FrozenEncoder& enc, const Tensor& X, const ForwardContext& ctx = {});

/// Multi-head scaled dot-product self attention on already projected
/// Q, K, V [T x d]. Exposed for testing.
Tensor multi_head_attention(const Tensor& Q, const Tensor& K, const Tensor& V, std::size_t heads);

}  // namespace moelora
