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

#include <doctest.h>

#include <cmath>

#include "moelora/rng.hpp"

using moelora::Rng;

TEST_CASE("equal seeds give identical streams") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  Rng g1(5), g2(5);
  for (int i = 0; i < 101; ++i) CHECK(g1.gaussian() == g2.gaussian());
}

TEST_CASE("derive gives stable, label-dependent substreams without advancing the parent") {
  Rng parent(9);
  Rng x = parent.derive("layer0/Q"), y = parent.derive("layer0/Q"), z = parent.derive("layer0/K");
  CHECK(x.next_u64() == y.next_u64());
  CHECK(x.next_u64() != z.next_u64());
  Rng fresh(9);
  CHECK(parent.next_u64() == fresh.next_u64());
}

TEST_CASE("uniform, below and gaussian have the right ranges and moments") {
  Rng rng(1);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    CHECK(rng.below(7) < 7u);
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.01);
}
