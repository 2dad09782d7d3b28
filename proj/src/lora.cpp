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

#include "moelora/lora.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "moelora/errors.hpp"

namespace moelora {

LoraExpert lora_init(std::size_t d, std::size_t m, std::size_t r, Rng& rng) {
  if (r < 1 || r > std::min(d, m)) {
    throw ValidationError("lora_init: rank " + std::to_string(r) + " outside [1, min(" + std::to_string(d) + ", " +
                          std::to_string(m) + ")]");
  }
  const double stddev = 1.0 / std::sqrt(static_cast<double>(r));
  std::vector<double> a(d * r);
  for (auto& v : a) v = rng.gaussian(0.0, stddev);
  return LoraExpert{Tensor::from_data({d, r}, std::move(a), true), Tensor::zeros({r, m}, true)};
}

Tensor lora_forward(const LoraExpert& e, const Tensor& W0, const Tensor& x, double scale) {
  if (W0.dim() != 2 || W0.rows() != e.out_dim() || W0.cols() != e.in_dim()) {
    throw DimensionError("lora_forward: frozen weight " + shape_str(W0.shape()) + " does not fit adapter " +
                         shape_str(e.A.shape()) + " x " + shape_str(e.B.shape()));
  }
  // Rows of x are tokens, so every product is taken against transposed weights.
  const Tensor base = matmul_nt(x, W0);
  Tensor delta = matmul_nt(matmul_nt(x, e.B), e.A);
  if (scale != 1.0) delta = moelora::scale(delta, scale);
  return add(base, delta);
}

Tensor lora_merge(const LoraExpert& e, const Tensor& W0, double scale) {
  if (W0.dim() != 2 || W0.rows() != e.out_dim() || W0.cols() != e.in_dim()) {
    throw DimensionError("lora_merge: frozen weight " + shape_str(W0.shape()) + " does not fit adapter " +
                         shape_str(e.A.shape()) + " x " + shape_str(e.B.shape()));
  }
  Tensor delta = matmul(e.A, e.B);
  if (scale != 1.0) delta = moelora::scale(delta, scale);
  return add(W0, delta);
}

double sigma_max(const LoraExpert& e) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto d = static_cast<Eigen::Index>(e.out_dim());
  const auto r = static_cast<Eigen::Index>(e.rank());
  const auto m = static_cast<Eigen::Index>(e.in_dim());
  const Mat A = Eigen::Map<const Mat>(e.A.data().data(), d, r);
  const Mat B = Eigen::Map<const Mat>(e.B.data().data(), r, m);

  // A = Q R with orthonormal Q, so AB and RB share singular values and the
  // work reduces to the r x r Gram matrix S = (RB)(RB)^T.
  Eigen::HouseholderQR<Mat> qr(A);
  const Mat R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Mat RB = R * B;
  const Mat S = RB * RB.transpose();
  const double norm = S.norm();
  if (norm == 0.0) return 0.0;

  // Power iteration by repeated squaring: P_j = S^(2^j) / |.|, so the
  // dominant eigenvector emerges even when the spectral gap is tiny.
  Mat P = S / norm;
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Mat P2 = P * P;
    const double n2 = P2.norm();
    if (n2 == 0.0) break;
    P = P2 / n2;
    Eigen::Index best = 0;
    P.colwise().norm().maxCoeff(&best);
    Eigen::VectorXd v = P.col(best);
    v.normalize();
    const double next = v.dot(S * v);
    const bool converged = std::abs(next - lambda) <= 1e-12 * std::max(next, 1e-300);
    lambda = next;
    if (converged && it > 0) break;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace moelora
