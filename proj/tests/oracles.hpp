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

// Reference implementations shared by the unit tests and the acceptance run.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "moelora/lora.hpp"
#include "moelora/moe_lora.hpp"
#include "test_util.hpp"

namespace moelora::test {

inline MoeLoraProjection random_projection(std::size_t d, std::size_t m, std::size_t n, std::size_t r, std::size_t k,
                                           Rng& rng) {
  MoeLoraProjection p;
  p.W0 = random_tensor({d, m}, rng, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    LoraExpert e = lora_init(d, m, r, rng);
    for (auto& v : e.B.mutable_data()) v = rng.gaussian();
    p.experts.push_back(e);
  }
  p.router = make_router(n, m, k, rng);
  validate_projection(p);
  return p;
}

// Dense-sum oracle: every expert's update matrix is materialized with plain
// loops and masked by a 0/1 selection vector built from a full sort.
inline std::vector<double> dense_oracle(const MoeLoraProjection& p, std::span<const double> x) {
  const std::size_t d = p.out_dim(), m = p.in_dim(), n = p.experts.size(), k = p.router->k;
  std::vector<double> logits(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) logits[i] += p.router->W_g.at(i, j) * x[j];
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) z += (w[i] = std::exp(logits[i] - mx));
  for (auto& v : w) v /= z;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  std::vector<double> mask(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1.0;

  std::vector<double> h(d, 0.0);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t j = 0; j < m; ++j) h[a] += p.W0.at(a, j) * x[j];
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = p.experts[i];
    for (std::size_t a = 0; a < d; ++a) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double dw = 0.0;
        for (std::size_t q = 0; q < e.rank(); ++q) dw += e.A.at(a, q) * e.B.at(q, j);
        acc += dw * x[j];
      }
      h[a] += mask[i] * w[i] * acc;
    }
  }
  return h;
}

// Midpoint sweep: thresholds strictly between consecutive distinct scores,
// plus one below and one above everything; counts by linear scan.
inline double midpoint_eer(const std::vector<double>& bona, const std::vector<double>& spoof) {
  std::vector<double> all(bona);
  all.insert(all.end(), spoof.begin(), spoof.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> th{all.front() - 1.0};
  for (std::size_t i = 1; i < all.size(); ++i) th.push_back(0.5 * (all[i - 1] + all[i]));
  th.push_back(all.back() + 1.0);
  std::vector<double> frr, far;
  for (double t : th) {
    double rej = 0, acc = 0;
    for (double s : bona) rej += s < t;
    for (double s : spoof) acc += s >= t;
    frr.push_back(rej / static_cast<double>(bona.size()));
    far.push_back(acc / static_cast<double>(spoof.size()));
  }
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double di = frr[i] - far[i];
    if (di < 0) continue;
    if (i == 0 || di == 0) return frr[i];
    const double dp = frr[i - 1] - far[i - 1];
    const double a = -dp / (di - dp);
    return frr[i - 1] + a * (frr[i] - frr[i - 1]);
  }
  return 1.0;
}

// Explicit dense A*B for an SVD reference.
inline Eigen::MatrixXd explicit_update(const LoraExpert& e) {
  Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(e.out_dim(), e.in_dim());
  for (std::size_t i = 0; i < e.out_dim(); ++i)
    for (std::size_t j = 0; j < e.in_dim(); ++j)
      for (std::size_t q = 0; q < e.rank(); ++q) dw(i, j) += e.A.at(i, q) * e.B.at(q, j);
  return dw;
}

}  // namespace moelora::test
