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

#include "moelora/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include "moelora/errors.hpp"

namespace moelora {

Head make_head(std::size_t d, std::size_t hidden, Rng& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> w1(hidden * d);
  for (auto& v : w1) v = rng.gaussian(0.0, stddev);
  return Head{Tensor::from_data({hidden, d}, std::move(w1), true), Tensor::zeros({hidden}, true),
              Tensor::zeros({2, hidden}, true), Tensor::zeros({2}, true)};
}

Tensor classify(const Head& head, const Tensor& frames) {
  const Tensor pooled = mean_rows(frames);
  const Tensor hidden = tanh(add(matmul(head.W1, pooled), head.b1));
  return add(matmul(head.W2, hidden), head.b2);
}

Model::Model(const BackboneConfig& cfg, std::uint64_t backbone_seed_, std::uint64_t init_seed_)
    : backbone_seed(backbone_seed_), init_seed(init_seed_) {
  const Rng init(init_seed);
  encoder = build_backbone(cfg, Rng(backbone_seed), init.derive("adapters"));
  Rng head_rng = init.derive("head");
  head = make_head(cfg.model_dim, cfg.head_hidden, head_rng);
}

Tensor Model::logits(const Tensor& frames, const ForwardContext& ctx) const {
  return classify(head, encode(encoder, frames, ctx));
}

double Model::score(const Tensor& frames) const {
  NoGradGuard guard;
  return bonafide_score(logits(frames).data());
}

std::vector<NamedTensor> Model::trainable() const {
  std::vector<NamedTensor> out;
  for (const auto* p : encoder.projections()) {
    const std::string prefix = "L" + std::to_string(p->layer) + "." + std::string(site_name(p->site));
    for (std::size_t i = 0; i < p->experts.size(); ++i) {
      const std::string e = prefix + ".e" + std::to_string(i);
      out.push_back({e + ".A", p->experts[i].A});
      out.push_back({e + ".B", p->experts[i].B});
    }
    if (p->router) {
      out.push_back({prefix + ".router.W_g", p->router->W_g});
      out.push_back({prefix + ".router.W_noise", p->router->W_noise});
      out.push_back({prefix + ".router.mu", p->router->mu});
      out.push_back({prefix + ".router.log_sigma", p->router->log_sigma});
    }
  }
  out.push_back({"head.W1", head.W1});
  out.push_back({"head.b1", head.b1});
  out.push_back({"head.W2", head.W2});
  out.push_back({"head.b2", head.b2});
  return out;
}

std::size_t Model::num_trainable() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t.tensor.size();
  return n;
}

unsigned thread_budget() {
  if (const char* env = std::getenv("MOELORA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

std::vector<double> score_clips(const Model& model, std::span<const Tensor> clips, unsigned threads) {
  std::vector<double> scores(clips.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(clips.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) scores[i] = model.score(clips[i]);
    return scores;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < clips.size(); i += threads) scores[i] = model.score(clips[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return scores;
}

}  // namespace moelora
