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

#include "moelora/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "moelora/errors.hpp"

namespace moelora {
namespace {

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.gaussian(0.0, stddev);
  return Tensor::from_data({rows, cols}, std::move(v));
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

std::string_view adapter_mode_name(AdapterMode mode) {
  switch (mode) {
    case AdapterMode::None: return "none";
    case AdapterMode::SingleLora: return "single_lora";
    case AdapterMode::MoeLora: return "moe_lora";
  }
  return "?";
}

AdapterMode parse_adapter_mode(std::string_view name) {
  if (name == "none") return AdapterMode::None;
  if (name == "single_lora") return AdapterMode::SingleLora;
  if (name == "moe_lora") return AdapterMode::MoeLora;
  throw ValidationError("unknown adapter_mode '" + std::string(name) + "'");
}

std::string_view routing_name(Routing routing) {
  return routing == Routing::PerToken ? "per_token" : "per_utterance";
}

Routing parse_routing(std::string_view name) {
  if (name == "per_token") return Routing::PerToken;
  if (name == "per_utterance") return Routing::PerUtterance;
  throw ValidationError("unknown routing '" + std::string(name) + "'");
}

void BackboneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("backbone config: " + msg); };
  if (layers == 0 || model_dim == 0 || heads == 0 || ffn_dim == 0 || input_dim == 0 || head_hidden == 0) {
    fail("all dimensions must be positive");
  }
  if (model_dim % heads != 0) fail("model_dim " + std::to_string(model_dim) + " not divisible by heads " + std::to_string(heads));
  if (adapter_mode == AdapterMode::None) return;
  if (lora_rank < 1 || lora_rank > model_dim) fail("lora_rank must lie in [1, model_dim]");
  if (adapter_mode == AdapterMode::MoeLora) {
    if (num_experts < 1) fail("num_experts must be positive");
    if (top_k < 1 || top_k > num_experts) fail("top_k must lie in [1, num_experts]");
  }
}

std::vector<Tensor> FrozenEncoder::frozen_tensors() const {
  std::vector<Tensor> out{embed_w, embed_b};
  for (const auto& l : layers) {
    out.insert(out.end(), {l.ln1_gamma, l.ln1_beta});
    for (const auto& p : l.attn) out.push_back(p.W0);
    out.insert(out.end(), {l.ln2_gamma, l.ln2_beta, l.ffn_w1, l.ffn_b1, l.ffn_w2, l.ffn_b2});
  }
  out.insert(out.end(), {final_gamma, final_beta});
  return out;
}

std::vector<const MoeLoraProjection*> FrozenEncoder::projections() const {
  std::vector<const MoeLoraProjection*> out;
  for (const auto& l : layers)
    for (const auto& p : l.attn) out.push_back(&p);
  return out;
}

std::vector<MoeLoraProjection*> FrozenEncoder::projections() {
  std::vector<MoeLoraProjection*> out;
  for (auto& l : layers)
    for (auto& p : l.attn) out.push_back(&p);
  return out;
}

void FrozenEncoder::set_train_mode(bool on) {
  for (auto* p : projections()) {
    if (p->router) p->router->train_mode = on;
  }
}

FrozenEncoder build_backbone(const BackboneConfig& cfg, const Rng& frozen_rng, const Rng& adapter_rng) {
  cfg.validate();
  const std::size_t d = cfg.model_dim, f = cfg.ffn_dim;
  Rng rng = frozen_rng.derive("frozen-backbone");

  FrozenEncoder enc;
  enc.config = cfg;
  enc.embed_w = gaussian_matrix(d, cfg.input_dim, inv_sqrt(cfg.input_dim), rng);
  enc.embed_b = Tensor::zeros({d});
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderLayer layer;
    layer.ln1_gamma = Tensor::full({d}, 1.0);
    layer.ln1_beta = Tensor::zeros({d});
    for (Site s : kAllSites) {
      auto& p = layer.attn[static_cast<std::size_t>(s)];
      p.W0 = gaussian_matrix(d, d, inv_sqrt(d), rng);
      p.site = s;
      p.layer = l;
      p.routing = cfg.routing;
      p.lora_scale = cfg.lora_scale;
    }
    layer.ln2_gamma = Tensor::full({d}, 1.0);
    layer.ln2_beta = Tensor::zeros({d});
    layer.ffn_w1 = gaussian_matrix(f, d, inv_sqrt(d), rng);
    layer.ffn_b1 = Tensor::zeros({f});
    layer.ffn_w2 = gaussian_matrix(d, f, inv_sqrt(f), rng);
    layer.ffn_b2 = Tensor::zeros({d});
    enc.layers.push_back(std::move(layer));
  }
  enc.final_gamma = Tensor::full({d}, 1.0);
  enc.final_beta = Tensor::zeros({d});

  if (cfg.adapter_mode != AdapterMode::None) {
    for (auto* p : enc.projections()) {
      Rng site_rng = adapter_rng.derive("layer" + std::to_string(p->layer) + "/" + std::string(site_name(p->site)));
      const std::size_t n = cfg.adapter_mode == AdapterMode::MoeLora ? cfg.num_experts : 1;
      for (std::size_t i = 0; i < n; ++i) p->experts.push_back(lora_init(d, d, cfg.lora_rank, site_rng));
      if (cfg.adapter_mode == AdapterMode::MoeLora) {
        p->router = make_router(n, d, cfg.top_k, site_rng);
        p->router->renormalize_topk = cfg.renormalize_topk;
      }
      validate_projection(*p);
    }
  }
  return enc;
}

Tensor positional_encoding(std::size_t T, std::size_t d) {
  std::vector<double> pe(T * d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * rate;
      pe[t * d + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_data({T, d}, std::move(pe));
}

Tensor multi_head_attention(const Tensor& Q, const Tensor& K, const Tensor& V, std::size_t heads) {
  const std::size_t d = Q.cols();
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? Q : slice_cols(Q, h * dh, dh);
    const Tensor kh = heads == 1 ? K : slice_cols(K, h * dh, dh);
    const Tensor vh = heads == 1 ? V : slice_cols(V, h * dh, dh);
    const Tensor attn = softmax(scale(matmul_nt(qh, kh), inv));
    outs.push_back(matmul(attn, vh));
  }
  return heads == 1 ? outs.front() : concat_cols(outs);
}

Tensor encode(const FrozenEncoder& enc, const Tensor& X, const ForwardContext& ctx) {
  const auto& cfg = enc.config;
  if (X.dim() != 2 || X.cols() != cfg.input_dim) {
    throw DimensionError("encode: expected [T x " + std::to_string(cfg.input_dim) + "] input, got " +
                         shape_str(X.shape()));
  }
  Tensor h = add(add_row(matmul_nt(X, enc.embed_w), enc.embed_b), positional_encoding(X.rows(), cfg.model_dim));
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const auto& layer = enc.layers[l];
    try {
      const Tensor z = layer_norm(h, layer.ln1_gamma, layer.ln1_beta);
      const Tensor q = moelora_forward(layer.attn[0], z, ctx);
      const Tensor k = moelora_forward(layer.attn[1], z, ctx);
      const Tensor v = moelora_forward(layer.attn[2], z, ctx);
      const Tensor a = multi_head_attention(q, k, v, cfg.heads);
      h = add(h, moelora_forward(layer.attn[3], a, ctx));
      const Tensor z2 = layer_norm(h, layer.ln2_gamma, layer.ln2_beta);
      const Tensor ff = add_row(matmul_nt(gelu(add_row(matmul_nt(z2, layer.ffn_w1), layer.ffn_b1)), layer.ffn_w2),
                                layer.ffn_b2);
      h = add(h, ff);
      check_finite(h, "output");
    } catch (const NumericError& e) {
      throw NumericError("encoder layer " + std::to_string(l) + ": " + e.what());
    }
  }
  return layer_norm(h, enc.final_gamma, enc.final_beta);
}

}  // namespace moelora
