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

#include "moelora/moe_lora.hpp"

#include <memory>

#include "moelora/errors.hpp"
#include "moelora/linalg.hpp"

namespace moelora {
namespace {

struct ExpertCache {
  std::vector<std::size_t> rows;  // token indices routed to this expert
  std::vector<double> x;          // gathered inputs [rows x m]
  std::vector<double> u;          // B x          [rows x r]
  std::vector<double> v;          // scale * A B x [rows x d]
};

void count_router(const MoeLoraProjection& p, std::size_t tokens, FlopCounter* flops) {
  if (flops == nullptr || !p.router) return;
  const auto per_matrix = static_cast<std::uint64_t>(tokens * p.router->num_experts() * p.in_dim());
  flops->router_macs += p.router->train_mode ? 2 * per_matrix : per_matrix;
}

}  // namespace

std::string_view site_name(Site site) {
  switch (site) {
    case Site::Q: return "Q";
    case Site::K: return "K";
    case Site::V: return "V";
    case Site::P: return "P";
  }
  return "?";
}

std::string MoeLoraProjection::label() const {
  return "layer " + std::to_string(layer) + " site " + std::string(site_name(site));
}

void validate_projection(const MoeLoraProjection& p) {
  if (!p.W0.defined() || p.W0.dim() != 2) throw ValidationError(p.label() + ": missing frozen weight");
  if (p.W0.requires_grad()) throw ValidationError(p.label() + ": frozen weight must not require grad");
  for (const auto& e : p.experts) {
    if (e.out_dim() != p.out_dim() || e.in_dim() != p.in_dim() || e.rank() != p.experts.front().rank()) {
      throw ValidationError(p.label() + ": experts must share (d, m, r) with the frozen weight");
    }
  }
  if (p.router) {
    if (p.router->num_experts() != p.experts.size() || p.router->in_dim() != p.in_dim()) {
      throw ValidationError(p.label() + ": router does not match the expert set");
    }
  } else if (p.experts.size() > 1) {
    throw ValidationError(p.label() + ": several experts need a router");
  }
}

Tensor mix_experts(const Tensor& X, const Tensor& weights, const std::vector<std::vector<std::size_t>>& selected,
                   const std::vector<LoraExpert>& experts, double scale, FlopCounter* flops) {
  const std::size_t T = X.rows(), m = X.cols(), n_exp = experts.size();
  const std::size_t d = experts.front().out_dim();
  if (weights.rows() != T || weights.cols() != n_exp || selected.size() != T) {
    throw DimensionError("mix_experts: weights " + shape_str(weights.shape()) + " do not match inputs " +
                         shape_str(X.shape()) + " and " + std::to_string(n_exp) + " experts");
  }
  const auto xs = X.data();
  const auto ws = weights.data();
  auto caches = std::make_shared<std::vector<ExpertCache>>(n_exp);
  for (std::size_t t = 0; t < T; ++t)
    for (auto i : selected[t]) (*caches)[i].rows.push_back(t);

  std::vector<double> out(T * d, 0.0);
  for (std::size_t i = 0; i < n_exp; ++i) {
    auto& c = (*caches)[i];
    const std::size_t rows = c.rows.size();
    if (rows == 0) continue;
    const auto& e = experts[i];
    const std::size_t r = e.rank();
    c.x.resize(rows * m);
    for (std::size_t j = 0; j < rows; ++j)
      std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(c.rows[j] * m), m, c.x.begin() + static_cast<std::ptrdiff_t>(j * m));
    c.u.assign(rows * r, 0.0);
    c.v.assign(rows * d, 0.0);
    linalg::gemm(false, true, rows, r, m, c.x.data(), e.B.data().data(), c.u.data(), false);
    linalg::gemm(false, true, rows, d, r, c.u.data(), e.A.data().data(), c.v.data(), false);
    if (scale != 1.0) {
      for (auto& v : c.v) v *= scale;
    }
    for (std::size_t j = 0; j < rows; ++j) {
      const std::size_t t = c.rows[j];
      const double w = ws[t * n_exp + i];
      for (std::size_t o = 0; o < d; ++o) out[t * d + o] += w * c.v[j * d + o];
    }
    if (flops) flops->adapter_macs += static_cast<std::uint64_t>(rows * (r * m + d * r));
  }

  std::vector<Tensor> inputs{X, weights};
  for (const auto& e : experts) {
    inputs.push_back(e.A);
    inputs.push_back(e.B);
  }
  return Tensor::from_op(
      {T, d}, std::move(out), inputs,
      [X, weights, experts, caches, scale, T, m, d, n_exp](std::span<const double> g) {
        const auto ws = weights.data();
        for (std::size_t i = 0; i < n_exp; ++i) {
          const auto& c = (*caches)[i];
          const std::size_t rows = c.rows.size();
          if (rows == 0) continue;
          const auto& e = experts[i];
          const std::size_t r = e.rank();
          if (weights.requires_grad()) {
            auto gw = weights.grad_buffer();
            for (std::size_t j = 0; j < rows; ++j) {
              const std::size_t t = c.rows[j];
              double dot = 0.0;
              for (std::size_t o = 0; o < d; ++o) dot += g[t * d + o] * c.v[j * d + o];
              gw[t * n_exp + i] += dot;
            }
          }
          if (!(X.requires_grad() || e.A.requires_grad() || e.B.requires_grad())) continue;
          // dV = scale * w * g for the routed rows.
          std::vector<double> dv(rows * d);
          for (std::size_t j = 0; j < rows; ++j) {
            const std::size_t t = c.rows[j];
            const double w = scale * ws[t * n_exp + i];
            for (std::size_t o = 0; o < d; ++o) dv[j * d + o] = w * g[t * d + o];
          }
          if (e.A.requires_grad()) {
            linalg::gemm(true, false, d, r, rows, dv.data(), c.u.data(), e.A.grad_buffer().data(), true);
          }
          if (!(X.requires_grad() || e.B.requires_grad())) continue;
          std::vector<double> du(rows * r, 0.0);
          linalg::gemm(false, false, rows, r, d, dv.data(), e.A.data().data(), du.data(), false);
          if (e.B.requires_grad()) {
            linalg::gemm(true, false, r, m, rows, du.data(), c.x.data(), e.B.grad_buffer().data(), true);
          }
          if (X.requires_grad()) {
            std::vector<double> dx(rows * m, 0.0);
            linalg::gemm(false, false, rows, m, r, du.data(), e.B.data().data(), dx.data(), false);
            auto gx = X.grad_buffer();
            for (std::size_t j = 0; j < rows; ++j) {
              const std::size_t t = c.rows[j];
              for (std::size_t q = 0; q < m; ++q) gx[t * m + q] += dx[j * m + q];
            }
          }
        }
        (void)T;
      });
}

Tensor per_token_routing(const MoeLoraProjection& p, const Tensor& X, const ForwardContext& ctx) {
  if (X.dim() != 2 || X.cols() != p.in_dim()) {
    throw DimensionError(p.label() + ": input " + shape_str(X.shape()) + " does not fit frozen weight " +
                         shape_str(p.W0.shape()));
  }
  const std::size_t T = X.rows();
  if (ctx.flops) ctx.flops->tokens += T;
  Tensor base = matmul_nt(X, p.W0);
  if (p.experts.empty()) return base;
  if (!p.router) {
    std::vector<std::vector<std::size_t>> all(T, std::vector<std::size_t>{0});
    const Tensor ones = Tensor::full({T, 1}, 1.0);
    return add(base, mix_experts(X, ones, all, p.experts, p.lora_scale, ctx.flops));
  }
  count_router(p, T, ctx.flops);
  const auto gate = compute_row_gates(*p.router, X, ctx.rng, p.label());
  return add(base, mix_experts(X, gate.weights, gate.selected, p.experts, p.lora_scale, ctx.flops));
}

Tensor moelora_forward(const MoeLoraProjection& p, const Tensor& x, const ForwardContext& ctx) {
  if (x.dim() == 1) {
    if (x.size() != p.in_dim()) {
      throw DimensionError(p.label() + ": input " + shape_str(x.shape()) + " does not fit frozen weight " +
                           shape_str(p.W0.shape()));
    }
    return reshape(per_token_routing(p, reshape(x, {1, x.size()}), ctx), {p.out_dim()});
  }
  if (p.routing == Routing::PerToken || !p.router || p.experts.empty()) return per_token_routing(p, x, ctx);

  if (x.dim() != 2 || x.cols() != p.in_dim()) {
    throw DimensionError(p.label() + ": input " + shape_str(x.shape()) + " does not fit frozen weight " +
                         shape_str(p.W0.shape()));
  }
  const std::size_t T = x.rows();
  if (ctx.flops) ctx.flops->tokens += T;
  count_router(p, 1, ctx.flops);
  const auto gate = compute_gate(*p.router, mean_rows(x), ctx.rng, p.label());
  std::vector<std::vector<std::size_t>> selected(T, gate.selected);
  return add(matmul_nt(x, p.W0),
             mix_experts(x, repeat_rows(gate.weights, T), selected, p.experts, p.lora_scale, ctx.flops));
}

}  // namespace moelora
