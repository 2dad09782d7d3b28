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

// Frozen projection fused with a gated sum of LoRA experts:
//
//   h = W0 x + sum_{i in S(x)} G_i(x) * A_i (B_i x)
//
// Experts outside S(x) are never evaluated for that token.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moelora/gating.hpp"
#include "moelora/lora.hpp"
#include "moelora/rng.hpp"
#include "moelora/tensor.hpp"

namespace moelora {

enum class Site { Q = 0, K = 1, V = 2, P = 3 };
inline constexpr Site kAllSites[] = {Site::Q, Site::K, Site::V, Site::P};
std::string_view site_name(Site site);

enum class Routing {
  PerToken,      // every token vector is gated on its own
  PerUtterance,  // one gate from the mean of the sequence, shared by all tokens
};

/// Multiply-accumulate tallies, split between expert math and router math.
struct FlopCounter {
  std::uint64_t adapter_macs = 0;
  std::uint64_t router_macs = 0;
  std::uint64_t tokens = 0;
};

/// Per-call state threaded through a forward pass. `rng` is required only
/// when routers are in training mode.
struct ForwardContext {
  Rng* rng = nullptr;
  FlopCounter* flops = nullptr;
};

struct MoeLoraProjection {
  Tensor W0;  // [d x m], never trainable
  std::vector<LoraExpert> experts;
  /// Absent for a single plain LoRA (or no adapter at all).
  std::optional<GatingRouter> router;
  Site site = Site::Q;
  std::size_t layer = 0;
  Routing routing = Routing::PerToken;
  double lora_scale = 1.0;

  std::size_t out_dim() const { return W0.rows(); }
  std::size_t in_dim() const { return W0.cols(); }
  std::string label() const;
};

/// Validates shapes and the frozen flag; throws ValidationError.
void validate_projection(const MoeLoraProjection& p);

/// x is [m] (one token) or [T x m]; returns [d] or [T x d]. Rows of a
/// matrix input are routed according to p.routing.
Tensor moelora_forward(const MoeLoraProjection& p, const Tensor& x, const ForwardContext& ctx = {});

/// Row t of the result equals moelora_forward(p, X[t]); routing is decided
/// independently per row regardless of p.routing.
Tensor per_token_routing(const MoeLoraProjection& p, const Tensor& X, const ForwardContext& ctx = {});

/// out[t] = sum over i in selected[t] of weights[t,i] * scale * A_i (B_i X[t]).
/// Differentiable in X, weights and every expert. Only selected (t, i)
/// pairs are computed.
Tensor mix_experts(const Tensor& X, const Tensor& weights, const std::vector<std::vector<std::size_t>>& selected,
                   const std::vector<LoraExpert>& experts, double scale, FlopCounter* flops = nullptr);

}  // namespace moelora
