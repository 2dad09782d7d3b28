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

// Logistic-regression probe on clip-level statistics of the raw frames.
// Used as a sanity oracle: the in-domain task should be easy for it and the
// held-out families should not be.

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "moelora/corpus.hpp"

namespace moelora {

enum class ProbeFeatures {
  Mean,       // per-dimension mean of the frames
  FrameStats  // per dimension: mean x, mean dx^2, mean x^2, log(mean dx^2 + 1e-6)
};

std::vector<double> probe_features(const Tensor& frames, ProbeFeatures kind = ProbeFeatures::FrameStats);

struct LinearProbe {
  std::vector<double> mean, scale;  // feature standardization
  std::vector<double> w;
  ProbeFeatures kind = ProbeFeatures::FrameStats;
  double bias = 0.0;

  /// 1 = spoof.
  int predict(const Tensor& frames) const;
};

LinearProbe fit_probe(std::span<const Clip* const> clips, ProbeFeatures kind = ProbeFeatures::FrameStats,
                      std::size_t iterations = 2000, double l2 = 1e-3);

struct ProbeAccuracy {
  double overall = 0.0;
  std::map<std::string, double> by_family;
};

ProbeAccuracy probe_accuracy(const LinearProbe& probe, std::span<const Clip* const> clips);

}  // namespace moelora
