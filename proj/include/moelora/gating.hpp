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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moelora/rng.hpp"
#include "moelora/tensor.hpp"

namespace moelora {

/// Noisy softmax router over N experts.
///
/// Clean logits are W_g x. In training mode each logit receives
///   mu_i + exp(log_sigma_i) * softplus(W_noise x)_i * z_i,   z_i ~ N(0, 1),
/// so the learnable mean and scale of the noise are per expert and the
/// input modulates its magnitude. In evaluation mode the noise is exactly 0.
struct GatingRouter {
  Tensor W_g;        // [N x m]
  Tensor W_noise;    // [N x m]
  Tensor mu;         // [N]
  Tensor log_sigma;  // [N]
  std::size_t k = 1;
  bool train_mode = false;
  /// Rescale the selected weights to sum to one. Off by default: the mixture
  /// uses the full-softmax weights of the selected experts as they are.
  bool renormalize_topk = false;

  std::size_t num_experts() const { return W_g.rows(); }
  std::size_t in_dim() const { return W_g.cols(); }
  std::size_t num_params() const { return W_g.size() + W_noise.size() + mu.size() + log_sigma.size(); }
};

/// W_g ~ N(0, 1/m); W_noise, mu and log_sigma start at zero.
GatingRouter make_router(std::size_t num_experts, std::size_t in_dim, std::size_t k, Rng& rng);

struct GateDecision {
  Tensor weights;                     // [N]
  std::vector<std::size_t> selected;  // k indices, heaviest first
};

/// Per-row decisions for a batch of token vectors.
struct RowGateDecision {
  Tensor weights;                                  // [T x N]
  std::vector<std::vector<std::size_t>> selected;  // T lists of k indices
};

/// Indices of the k largest weights, descending, ties to the lower index.
std::vector<std::size_t> select_topk(std::span<const double> weights, std::size_t k);

/// Gate for a single input vector x [m]. `rng` is only read in training
/// mode. `site` names the projection in error messages.
GateDecision compute_gate(const GatingRouter& g, const Tensor& x, Rng* rng, const std::string& site = "gate");

/// Gate for every row of X [T x m], each row routed independently.
RowGateDecision compute_row_gates(const GatingRouter& g, const Tensor& X, Rng* rng,
                                  const std::string& site = "gate");

}  // namespace moelora
