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

#include <array>
#include <cstdint>
#include <string_view>

namespace moelora {

/// xoshiro256** seeded through splitmix64. Gaussian draws use Box-Muller
/// with the second variate cached, so a stream is fully determined by its
/// seed and the sequence of calls.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// Independent substream keyed by a label; does not advance this stream.
  Rng derive(std::string_view label) const;
  Rng derive(std::uint64_t key) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a, used to turn labels into substream keys.
std::uint64_t hash_label(std::string_view label);

}  // namespace moelora
