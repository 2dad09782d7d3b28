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

#include "moelora/linalg.hpp"

#include <Eigen/Core>

namespace moelora::linalg {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

template <typename L, typename R>
void store(MutMap& c, const L& lhs, const R& rhs, bool accumulate) {
  if (accumulate) {
    c.noalias() += lhs * rhs;
  } else {
    c.noalias() = lhs * rhs;
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  MutMap cm(c, M, N);
  const ConstMap am = trans_a ? ConstMap(a, K, M) : ConstMap(a, M, K);
  const ConstMap bm = trans_b ? ConstMap(b, N, K) : ConstMap(b, K, N);
  if (trans_a && trans_b) {
    store(cm, am.transpose(), bm.transpose(), accumulate);
  } else if (trans_a) {
    store(cm, am.transpose(), bm, accumulate);
  } else if (trans_b) {
    store(cm, am, bm.transpose(), accumulate);
  } else {
    store(cm, am, bm, accumulate);
  }
}

}  // namespace moelora::linalg
