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

#include <algorithm>

#include "moelora/model.hpp"
#include "moelora/trainer.hpp"
#include "test_util.hpp"

using namespace moelora;
using test::random_tensor;

namespace {

Head random_head(std::size_t d, std::size_t h, Rng& rng) {
  Head head = make_head(d, h, rng);
  for (Tensor* t : {&head.b1, &head.W2, &head.b2})
    for (auto& v : t->mutable_data()) v = rng.gaussian();
  return head;
}

}  // namespace

TEST_CASE("two logits per clip and pooling invariant to T for constant frames") {
  Rng rng(1);
  const auto head = random_head(6, 4, rng);
  std::vector<double> row(6);
  for (auto& v : row) v = rng.gaussian();
  auto repeated = [&](std::size_t T) {
    std::vector<double> x;
    for (std::size_t t = 0; t < T; ++t) x.insert(x.end(), row.begin(), row.end());
    return Tensor::from_data({T, 6}, x);
  };
  const auto a = classify(head, repeated(1)), b = classify(head, repeated(17));
  CHECK(a.shape() == Shape{2});
  CHECK(test::max_abs_diff(a.data(), b.data()) < 1e-14);
}

TEST_CASE("zero weights reduce logits to b2") {
  Rng rng(2);
  Head head = random_head(5, 3, rng);
  for (auto& v : head.W1.mutable_data()) v = 0.0;
  for (auto& v : head.b1.mutable_data()) v = 0.0;
  const auto y = classify(head, random_tensor({4, 5}, rng));
  CHECK(test::bit_equal(y.data(), head.b2.data()));
}

TEST_CASE("score is invariant to frame order") {
  Rng rng(3);
  const auto head = random_head(5, 4, rng);
  const auto X = random_tensor({7, 5}, rng);
  std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  std::vector<double> shuffled;
  for (std::size_t t : perm) shuffled.insert(shuffled.end(), X.data().begin() + t * 5, X.data().begin() + t * 5 + 5);
  const auto a = classify(head, X), b = classify(head, Tensor::from_data({7, 5}, shuffled));
  CHECK(test::max_abs_diff(a.data(), b.data()) < 1e-14);
  CHECK(bonafide_score(a.data()) == a.data()[0] - a.data()[1]);
}

TEST_CASE("initial head scores every clip at zero") {
  Rng rng(4);
  const auto head = make_head(5, 4, rng);
  CHECK(bonafide_score(classify(head, random_tensor({3, 5}, rng)).data()) == 0.0);
}

TEST_CASE("gradient check through head and encoder") {
  BackboneConfig c;
  c.layers = 1;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.input_dim = 4;
  c.head_hidden = 5;
  c.lora_rank = 2;
  c.num_experts = 3;
  c.top_k = 3;
  const auto r = model_grad_check(c, 3, 2, 5);
  CHECK(r.valid);
  CHECK(r.max_rel_error <= 1e-4);
}
