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
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "moelora/checkpoint.hpp"
#include "moelora/corpus.hpp"
#include "moelora/model.hpp"

namespace moelora {

struct TrainConfig {
  double lr_min = 1e-7;
  double lr_max = 1e-5;
  std::size_t cycle_epochs = 2;
  double weight_decay = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers aligned with Model::trainable() order.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One AdamW update: bias-corrected Adam step, then p <- p - lr*wd*p.
/// Missing gradients count as zero. A non-finite gradient throws
/// NumericError naming the parameter.
void optimizer_step(std::span<NamedTensor> params, AdamState& state, double lr, double weight_decay,
                    const AdamHyper& hyper = {});

/// Triangular wave with period `steps_per_cycle`: lr_min at step 0, lr_max
/// at half cycle.
double cyclic_lr(std::uint64_t step, std::uint64_t steps_per_cycle, double lr_min = 1e-7, double lr_max = 1e-5);

/// Tracks the best (lowest) metric. update() returns true once more than
/// `patience` consecutive epochs have failed to improve strictly.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  bool update(int epoch, double metric);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  std::size_t stale_ = 0;
  bool improved_ = false;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_eer = 0.0;
  double lr = 0.0;  // at the epoch's last step
};

std::string training_log_csv(std::span<const EpochLog> log);

struct FitHooks {
  /// Replaces the dev-set EER as the early-stopping metric when set.
  std::function<double(int epoch, const Model& model)> dev_metric;
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  int epochs_run = 0;
  bool early_stopped = false;
};

/// Mean NLL of a batch of clips; records a graph unless recording is off.
Tensor batch_loss(const Model& model, std::span<const Clip* const> batch, const ForwardContext& ctx = {});

/// Dev-set EER of `model` in evaluation mode.
double dev_eer(const Model& model, std::span<const Clip* const> dev, unsigned threads = 1);

/// Trains adapters and head; on return `model` holds the best-epoch weights
/// as stored in the returned checkpoint.
FitResult fit(Model& model, const Dataset& data, const TrainConfig& cfg, const FitHooks& hooks = {});

/// Finite-difference check of the whole model (encoder, adapters, routers,
/// head, NLL) on a few short generated clips. Every trainable tensor is first
/// filled with small random values so no gradient path is trivially zero.
/// Gate noise is replayed from the same seed on every evaluation.
GradCheckResult model_grad_check(const BackboneConfig& cfg, std::uint64_t seed, std::size_t clips = 2,
                                 std::size_t frames = 6, double eps = 1e-6);

}  // namespace moelora
