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

#include <Eigen/Dense>

#include "moelora/errors.hpp"
#include "moelora/lora.hpp"
#include "test_util.hpp"

using namespace moelora;
using test::random_tensor;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.dim() == 1 ? t.at(j) : t.at(i, j);
  return m;
}

LoraExpert random_expert(std::size_t d, std::size_t m, std::size_t r, Rng& rng) {
  LoraExpert e = lora_init(d, m, r, rng);
  for (auto& v : e.B.mutable_data()) v = rng.gaussian();
  return e;
}

}  // namespace

TEST_CASE("lora_init shapes, counts and zero update") {
  Rng rng(1);
  const auto e = lora_init(4, 4, 2, rng);
  CHECK(e.A.shape() == Shape{4, 2});
  CHECK(e.B.shape() == Shape{2, 4});
  CHECK(e.A.size() == 8);
  CHECK(e.B.size() == 8);
  CHECK(e.num_params() == 16);
  CHECK(e.A.requires_grad());
  CHECK(e.B.requires_grad());
  for (double v : e.B.data()) CHECK(v == 0.0);

  Rng again(1);
  CHECK(test::bit_equal(e.A.data(), lora_init(4, 4, 2, again).A.data()));

  const auto W0 = random_tensor({4, 4}, rng);
  const auto x = random_tensor({4}, rng);
  CHECK(test::bit_equal(lora_forward(e, W0, x).data(), matmul_nt(x, W0).data()));
  const auto merged = lora_merge(e, W0);
  CHECK(test::bit_equal(merged.data(), W0.data()));
}

TEST_CASE("lora_init rejects ranks outside [1, min(d, m)]") {
  Rng rng(1);
  CHECK_THROWS_AS(lora_init(4, 3, 4, rng), ValidationError);
  CHECK_THROWS_AS(lora_init(4, 4, 0, rng), ValidationError);
}

TEST_CASE("lora_forward hand example") {
  LoraExpert e{Tensor::from_data({2, 1}, {1, 0}), Tensor::from_data({1, 2}, {0, 1})};
  const auto W0 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const auto h = lora_forward(e, W0, Tensor::from_data({2}, {1, 2}));
  CHECK(h.data()[0] == 3.0);
  CHECK(h.data()[1] == 2.0);
  CHECK(lora_forward(e, W0, Tensor::zeros({2})).data()[0] == 0.0);
}

TEST_CASE("merged and factored paths agree") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto e = random_expert(8, 8, 2, rng);
    const auto W0 = random_tensor({8, 8}, rng);
    const auto merged = lora_merge(e, W0);
    for (int i = 0; i < 100; ++i) {
      const auto x = random_tensor({8}, rng);
      const auto a = lora_forward(e, W0, x), b = matmul(merged, x);
      for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(a.data()[j] - b.data()[j]) <= 1e-10 * std::max(1.0, std::abs(b.data()[j])));
    }
  }
}

TEST_CASE("update has rank at most r") {
  Rng rng(3);
  const auto e = random_expert(9, 7, 3, rng);
  const auto dW = to_eigen(matmul(e.A, e.B));
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(dW);
  const auto s = svd.singularValues();
  for (Eigen::Index i = 3; i < s.size(); ++i) CHECK(s(i) < 1e-10);
  CHECK(s(2) > 1e-6);
}

TEST_CASE("sigma_max examples and explicit-SVD oracle") {
  Rng rng(4);
  CHECK(sigma_max(lora_init(6, 5, 2, rng)) == 0.0);
  LoraExpert ones{Tensor::from_data({2, 1}, {1, 1}), Tensor::from_data({1, 2}, {1, 1})};
  CHECK(sigma_max(ones) == doctest::Approx(2.0).epsilon(1e-14));
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.below(10), m = 2 + rng.below(10);
    const std::size_t r = 1 + rng.below(std::min(d, m));
    const auto e = random_expert(d, m, r, rng);
    const double oracle = Eigen::JacobiSVD<Eigen::MatrixXd>(to_eigen(matmul(e.A, e.B))).singularValues()(0);
    CHECK(std::abs(sigma_max(e) - oracle) <= 1e-8);
  }
}

TEST_CASE("zero-init B: first-step gradient reaches B but not A") {
  Rng rng(5);
  const auto e = lora_init(6, 6, 2, rng);
  const auto W0 = random_tensor({6, 6}, rng);
  const auto X = random_tensor({4, 6}, rng);
  const auto target = random_tensor({4, 6}, rng);
  const auto diff = sub(lora_forward(e, W0, X), target);
  backward(sum(mul(diff, diff)));
  bool b_nonzero = false;
  for (double g : e.B.grad()) b_nonzero |= g != 0.0;
  CHECK(b_nonzero);
  for (double g : e.A.grad()) CHECK(g == 0.0);
}
