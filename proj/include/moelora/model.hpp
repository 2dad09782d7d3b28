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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moelora/backbone.hpp"
#include "moelora/rng.hpp"
#include "moelora/tensor.hpp"

namespace moelora {

/// Trainable back end: mean over time, tanh MLP, two logits
/// (class 0 = bonafide, class 1 = spoof).
struct Head {
  Tensor W1;  // [h x d]
  Tensor b1;  // [h]
  Tensor W2;  // [2 x h]
  Tensor b2;  // [2]

  std::size_t num_params() const { return W1.size() + b1.size() + W2.size() + b2.size(); }
};

/// W1 ~ N(0, 1/d); b1, W2 and b2 start at zero, so every clip initially
/// scores 0.
Head make_head(std::size_t d, std::size_t hidden, Rng& rng);

/// frames [T x d] -> logits [2].
Tensor classify(const Head& head, const Tensor& frames);

/// logit_bonafide - logit_spoof; higher means more bonafide.
inline double bonafide_score(std::span<const double> logits) { return logits[0] - logits[1]; }

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Frozen encoder with its adapters plus the classifier head.
class Model {
 public:
  /// The frozen backbone depends only on `backbone_seed`; adapters and head
  /// depend only on `init_seed`.
  Model(const BackboneConfig& cfg, std::uint64_t backbone_seed, std::uint64_t init_seed);

  const BackboneConfig& config() const { return encoder.config; }

  Tensor logits(const Tensor& frames, const ForwardContext& ctx = {}) const;
  /// Evaluation-mode score without recording a graph.
  double score(const Tensor& frames) const;

  /// Adapters, routers and head, in a stable order with stable names.
  std::vector<NamedTensor> trainable() const;
  std::size_t num_trainable() const;
  void set_train_mode(bool on) { encoder.set_train_mode(on); }

  FrozenEncoder encoder;
  Head head;
  std::uint64_t backbone_seed;
  std::uint64_t init_seed;
};

/// Scores many clips. Uses up to `threads` workers; evaluation mode only.
std::vector<double> score_clips(const Model& model, std::span<const Tensor> clips, unsigned threads = 1);

/// Worker cap from MOELORA_THREADS, default 1.
unsigned thread_budget();

}  // namespace moelora
