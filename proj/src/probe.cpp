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

#include "moelora/probe.hpp"

#include <cmath>

#include "moelora/errors.hpp"

namespace moelora {

std::vector<double> probe_features(const Tensor& frames, ProbeFeatures kind) {
  const std::size_t T = frames.rows(), D = frames.cols();
  const auto x = frames.data();
  const std::size_t groups = kind == ProbeFeatures::Mean ? 1 : 4;
  std::vector<double> f(groups * D, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < D; ++j) f[j] += x[t * D + j] / static_cast<double>(T);
  if (kind == ProbeFeatures::Mean) return f;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < D; ++j) f[2 * D + j] += x[t * D + j] * x[t * D + j] / static_cast<double>(T);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < D; ++j) {
      const double dx = x[t * D + j] - x[(t - 1) * D + j];
      f[D + j] += dx * dx / static_cast<double>(T - 1);
    }
  }
  for (std::size_t j = 0; j < D; ++j) f[3 * D + j] = std::log(f[D + j] + 1e-6);
  return f;
}

int LinearProbe::predict(const Tensor& frames) const {
  const auto f = probe_features(frames, kind);
  double z = bias;
  for (std::size_t i = 0; i < f.size(); ++i) z += w[i] * (f[i] - mean[i]) / scale[i];
  return z > 0.0 ? kSpoof : kBonafide;
}

LinearProbe fit_probe(std::span<const Clip* const> clips, ProbeFeatures kind, std::size_t iterations, double l2) {
  if (clips.empty()) throw ValidationError("fit_probe: no clips");
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const Clip* c : clips) {
    X.push_back(probe_features(c->frames, kind));
    y.push_back(c->label == kSpoof ? 1.0 : 0.0);
  }
  const std::size_t n = X.size(), p = X.front().size();
  LinearProbe probe;
  probe.kind = kind;
  probe.mean.assign(p, 0.0);
  probe.scale.assign(p, 0.0);
  for (const auto& row : X)
    for (std::size_t i = 0; i < p; ++i) probe.mean[i] += row[i] / static_cast<double>(n);
  for (const auto& row : X)
    for (std::size_t i = 0; i < p; ++i) probe.scale[i] += std::pow(row[i] - probe.mean[i], 2) / static_cast<double>(n);
  for (auto& s : probe.scale) s = std::sqrt(s) + 1e-12;
  for (auto& row : X)
    for (std::size_t i = 0; i < p; ++i) row[i] = (row[i] - probe.mean[i]) / probe.scale[i];

  // Full-batch gradient descent on the L2-regularized logistic loss.
  probe.w.assign(p, 0.0);
  std::vector<double> gw(p);
  const double step = 0.5;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double z = probe.bias;
      for (std::size_t i = 0; i < p; ++i) z += probe.w[i] * X[k][i];
      const double r = 1.0 / (1.0 + std::exp(-z)) - y[k];
      for (std::size_t i = 0; i < p; ++i) gw[i] += r * X[k][i];
      gb += r;
    }
    for (std::size_t i = 0; i < p; ++i) probe.w[i] -= step * (gw[i] / static_cast<double>(n) + l2 * probe.w[i]);
    probe.bias -= step * gb / static_cast<double>(n);
  }
  return probe;
}

ProbeAccuracy probe_accuracy(const LinearProbe& probe, std::span<const Clip* const> clips) {
  ProbeAccuracy acc;
  std::map<std::string, std::size_t> hits, total;
  std::size_t all_hits = 0;
  for (const Clip* c : clips) {
    const bool hit = probe.predict(c->frames) == c->label;
    all_hits += hit;
    hits[c->family] += hit;
    ++total[c->family];
  }
  acc.overall = clips.empty() ? 0.0 : static_cast<double>(all_hits) / static_cast<double>(clips.size());
  for (const auto& [fam, n] : total) acc.by_family[fam] = static_cast<double>(hits[fam]) / static_cast<double>(n);
  return acc;
}

}  // namespace moelora
