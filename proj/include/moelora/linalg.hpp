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

// Raw row-major kernels shared by the tensor ops.

#pragma once

#include <cstddef>

namespace moelora::linalg {

/// C[m,n] (+)= op(A) * op(B), all row-major. op(A) is [m,k]: A is stored
/// [m,k], or [k,m] when trans_a. op(B) is [k,n]: B is stored [k,n], or
/// [n,k] when trans_b.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

}  // namespace moelora::linalg
