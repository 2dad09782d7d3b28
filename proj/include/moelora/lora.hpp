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

#include <cstddef>

#include "moelora/rng.hpp"
#include "moelora/tensor.hpp"

namespace moelora {

/// Low-rank update dW = A * B for a frozen [d x m] weight.
/// A is [d x r], B is [r x m].
struct LoraExpert {
  Tensor A;
  Tensor B;

  std::size_t rank() const { return A.cols(); }
  std::size_t out_dim() const { return A.rows(); }
  std::size_t in_dim() const { return B.cols(); }
  std::size_t num_params() const { return A.size() + B.size(); }
};

/// A ~ N(0, 1/r), B = 0, both trainable. The adapted layer therefore starts
/// exactly at the frozen weight.
LoraExpert lora_init(std::size_t d, std::size_t m, std::size_t r, Rng& rng);

/// W0 x + A (B x), evaluated right to left. x may be [m] or a row batch
/// [T x m]; the result is [d] or [T x d]. `scale` multiplies the low-rank
/// term.
Tensor lora_forward(const LoraExpert& e, const Tensor& W0, const Tensor& x, double scale = 1.0);

/// W0 + scale * A B.
Tensor lora_merge(const LoraExpert& e, const Tensor& W0, double scale = 1.0);

/// Largest singular value of A B, computed on r x r factors only.
double sigma_max(const LoraExpert& e);

}  // namespace moelora
