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

#include "moelora/gating.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "moelora/errors.hpp"

namespace moelora {
namespace {

// Zeroes unselected weights and divides the rest by their sum, row-wise.
Tensor renormalize_selected(const Tensor& w, const std::vector<std::vector<std::size_t>>& selected) {
  const std::size_t t_rows = w.rows(), n = w.cols();
  const auto x = w.data();
  std::vector<double> out(x.size(), 0.0);
  auto sums = std::make_shared<std::vector<double>>(t_rows, 0.0);
  for (std::size_t t = 0; t < t_rows; ++t) {
    double s = 0.0;
    for (auto i : selected[t]) s += x[t * n + i];
    (*sums)[t] = s;
    for (auto i : selected[t]) out[t * n + i] = x[t * n + i] / s;
  }
  return Tensor::from_op(w.shape(), std::move(out), {w}, [w, selected, sums, n](std::span<const double> g) {
    auto gw = w.grad_buffer();
    const auto x = w.data();
    for (std::size_t t = 0; t < selected.size(); ++t) {
      const double s = (*sums)[t];
      double dot = 0.0;
      for (auto i : selected[t]) dot += g[t * n + i] * x[t * n + i];
      for (auto j : selected[t]) gw[t * n + j] += g[t * n + j] / s - dot / (s * s);
    }
  });
}

Tensor gate_logits(const GatingRouter& g, const Tensor& X, Rng* rng, const std::string& site) {
  if (X.cols() != g.in_dim()) {
    throw DimensionError(site + ": gate expects inputs of width " + std::to_string(g.in_dim()) + ", got " +
                         shape_str(X.shape()));
  }
  Tensor logits = matmul_nt(X, g.W_g);
  if (g.train_mode) {
    if (rng == nullptr) throw ContractError(site + ": training-mode gate needs an Rng stream");
    std::vector<double> z(logits.size());
    for (auto& v : z) v = rng->gaussian();
    const Tensor noise_scale = softplus(matmul_nt(X, g.W_noise));
    Tensor noise = mul(noise_scale, Tensor::from_data(logits.shape(), std::move(z)));
    noise = add_row(mul_row(noise, exp(g.log_sigma)), g.mu);
    logits = add(logits, noise);
  }
  for (double v : logits.data()) {
    if (!std::isfinite(v)) throw NumericError(site + ": non-finite gate logits");
  }
  return logits;
}

}  // namespace

GatingRouter make_router(std::size_t num_experts, std::size_t in_dim, std::size_t k, Rng& rng) {
  if (num_experts == 0 || in_dim == 0) throw ValidationError("make_router: empty router");
  if (k < 1 || k > num_experts) {
    throw ValidationError("make_router: top-k " + std::to_string(k) + " outside [1, " +
                          std::to_string(num_experts) + "]");
  }
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<double> wg(num_experts * in_dim);
  for (auto& v : wg) v = rng.gaussian(0.0, stddev);
  GatingRouter g;
  g.W_g = Tensor::from_data({num_experts, in_dim}, std::move(wg), true);
  g.W_noise = Tensor::zeros({num_experts, in_dim}, true);
  g.mu = Tensor::zeros({num_experts}, true);
  g.log_sigma = Tensor::zeros({num_experts}, true);
  g.k = k;
  return g;
}

std::vector<std::size_t> select_topk(std::span<const double> weights, std::size_t k) {
  if (k < 1 || k > weights.size()) {
    throw ValidationError("select_topk: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(weights.size()) + "]");
  }
  std::vector<std::size_t> idx(weights.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return weights[a] > weights[b] || (weights[a] == weights[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

GateDecision compute_gate(const GatingRouter& g, const Tensor& x, Rng* rng, const std::string& site) {
  if (x.dim() != 1) throw DimensionError(site + ": compute_gate expects a vector, got " + shape_str(x.shape()));
  Tensor weights = softmax(gate_logits(g, x, rng, site));
  std::vector<std::vector<std::size_t>> selected{select_topk(weights.data(), g.k)};
  if (g.renormalize_topk) weights = renormalize_selected(weights, selected);
  return GateDecision{std::move(weights), std::move(selected.front())};
}

RowGateDecision compute_row_gates(const GatingRouter& g, const Tensor& X, Rng* rng, const std::string& site) {
  if (X.dim() != 2) throw DimensionError(site + ": expected token rows, got " + shape_str(X.shape()));
  Tensor weights = softmax(gate_logits(g, X, rng, site));
  const std::size_t n = g.num_experts();
  std::vector<std::vector<std::size_t>> selected(X.rows());
  const auto w = weights.data();
  for (std::size_t t = 0; t < X.rows(); ++t) selected[t] = select_topk(w.subspan(t * n, n), g.k);
  if (g.renormalize_topk) weights = renormalize_selected(weights, selected);
  return RowGateDecision{std::move(weights), std::move(selected)};
}

}  // namespace moelora
