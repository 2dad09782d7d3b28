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

#include "moelora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "moelora/errors.hpp"
#include "moelora/metrics.hpp"

namespace moelora {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("train config: " + msg); };
  if (!(lr_min > 0.0) || !(lr_max >= lr_min)) fail("need 0 < lr_min <= lr_max");
  if (cycle_epochs < 1) fail("cycle_epochs must be at least 1");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (patience < 1) fail("patience must be at least 1");
}

void optimizer_step(std::span<NamedTensor> params, AdamState& state, double lr, double weight_decay,
                    const AdamHyper& h) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].tensor.grad();
    for (double x : g) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t), c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].tensor.mutable_data();
    const auto g = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + h.eps);
      p[j] -= lr * weight_decay * p[j];
    }
  }
}

double cyclic_lr(std::uint64_t step, std::uint64_t steps_per_cycle, double lr_min, double lr_max) {
  if (steps_per_cycle < 2) throw ValidationError("cyclic_lr: steps_per_cycle must be at least 2");
  const double x = static_cast<double>(step % steps_per_cycle) / static_cast<double>(steps_per_cycle);
  const double tri = 1.0 - std::abs(2.0 * x - 1.0);
  return std::clamp(lr_min + (lr_max - lr_min) * tri, lr_min, lr_max);
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw ValidationError("patience must be at least 1");
}

bool EarlyStopper::update(int epoch, double metric) {
  improved_ = metric < best_;
  if (improved_) {
    best_ = metric;
    best_epoch_ = epoch;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return stale_ > patience_;
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::ostringstream os;
  os << "epoch,train_loss,dev_eer,lr\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.dev_eer, e.lr);
    os << buf;
  }
  return os.str();
}

Tensor batch_loss(const Model& model, std::span<const Clip* const> batch, const ForwardContext& ctx) {
  std::vector<Tensor> rows;
  std::vector<int> labels;
  rows.reserve(batch.size());
  for (const Clip* c : batch) {
    rows.push_back(model.logits(c->frames, ctx));
    labels.push_back(c->label);
  }
  return log_softmax_nll(stack_rows(rows), labels);
}

double dev_eer(const Model& model, std::span<const Clip* const> dev, unsigned threads) {
  std::vector<Tensor> frames;
  frames.reserve(dev.size());
  for (const Clip* c : dev) frames.push_back(c->frames);
  const auto scores = score_clips(model, frames, threads);
  std::vector<double> bona, spoof;
  for (std::size_t i = 0; i < dev.size(); ++i) (dev[i]->label == kBonafide ? bona : spoof).push_back(scores[i]);
  return compute_eer(bona, spoof).eer;
}

FitResult fit(Model& model, const Dataset& data, const TrainConfig& cfg, const FitHooks& hooks) {
  cfg.validate();
  const auto train = data.split(Split::Train);
  const auto dev = data.split(Split::Dev);
  if (train.empty()) throw ValidationError("fit: train split is empty");
  if (dev.empty()) throw ValidationError("fit: dev split is empty");

  const unsigned threads = thread_budget();
  auto metric = [&](int epoch) {
    model.set_train_mode(false);
    return hooks.dev_metric ? hooks.dev_metric(epoch, model) : dev_eer(model, dev, threads);
  };

  const Rng root(cfg.seed);
  Rng noise = root.derive("gate-noise");
  const Rng shuffle_root = root.derive("shuffle");
  auto params = model.trainable();
  AdamState adam;
  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t steps_per_cycle = std::max<std::uint64_t>(2, cfg.cycle_epochs * steps_per_epoch);

  auto take_snapshot = [&](int epoch, double eer) {
    Checkpoint c = snapshot(model);
    c.epoch = epoch;
    c.dev_eer = eer;
    c.optimizer_step = adam.step;
    for (std::size_t i = 0; i < params.size() && i < adam.m.size(); ++i) {
      c.tensors.push_back({"opt.m." + params[i].name, params[i].tensor.shape(),
                           std::vector<float>(adam.m[i].begin(), adam.m[i].end())});
    }
    for (std::size_t i = 0; i < params.size() && i < adam.v.size(); ++i) {
      c.tensors.push_back({"opt.v." + params[i].name, params[i].tensor.shape(),
                           std::vector<float>(adam.v[i].begin(), adam.v[i].end())});
    }
    return c;
  };

  FitResult result;
  if (cfg.max_epochs == 0) {
    result.best = take_snapshot(0, metric(0));
    return result;
  }

  EarlyStopper stopper(cfg.patience);
  std::vector<std::size_t> order(train.size());
  std::vector<const Clip*> batch;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = shuffle_root.derive(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    model.set_train_mode(true);
    const ForwardContext ctx{&noise, nullptr};
    double loss_sum = 0.0, lr = cfg.lr_min;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      for (auto& p : params) p.tensor.zero_grad();
      const Tensor loss = batch_loss(model, batch, ctx);
      loss_sum += loss.item() * static_cast<double>(batch.size());
      backward(loss);
      lr = cyclic_lr(adam.step, steps_per_cycle, cfg.lr_min, cfg.lr_max);
      optimizer_step(params, adam, lr, cfg.weight_decay);
    }
    for (auto& p : params) p.tensor.zero_grad();

    EpochLog entry{static_cast<int>(epoch), loss_sum / static_cast<double>(order.size()), 0.0, lr};
    entry.dev_eer = metric(entry.epoch);
    result.log.push_back(entry);
    result.epochs_run = entry.epoch;
    if (hooks.on_epoch) hooks.on_epoch(entry);
    const bool stop = stopper.update(entry.epoch, entry.dev_eer);
    if (stopper.improved()) result.best = take_snapshot(entry.epoch, entry.dev_eer);
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  load_weights(result.best, model);
  model.set_train_mode(false);
  return result;
}

GradCheckResult model_grad_check(const BackboneConfig& cfg, std::uint64_t seed, std::size_t clips, std::size_t frames,
                                 double eps) {
  Model model(cfg, seed, seed);
  Rng rng = Rng(seed).derive("grad-check");
  for (auto& nt : model.trainable()) {
    for (auto& v : nt.tensor.mutable_data()) v = rng.gaussian(0.0, 0.3);
  }
  GenerationParams gen;
  gen.feature_dim = cfg.input_dim;
  gen.band_start = 0;
  gen.band_width = 0;
  std::vector<Clip> data;
  const char* families[] = {"bona", "A01", "A02", "A03"};
  for (std::size_t i = 0; i < clips; ++i) data.push_back(gen_clip(families[i % 4], frames, rng, gen));
  std::vector<const Clip*> batch;
  for (const auto& c : data) batch.push_back(&c);

  model.set_train_mode(true);
  std::vector<Tensor> params;
  for (const auto& nt : model.trainable()) params.push_back(nt.tensor);
  const Rng noise_seed = Rng(seed).derive("grad-check-noise");
  auto loss_fn = [&] {
    Rng noise = noise_seed;
    return batch_loss(model, batch, ForwardContext{&noise, nullptr});
  };
  return grad_check(loss_fn, params, eps);
}

}  // namespace moelora
