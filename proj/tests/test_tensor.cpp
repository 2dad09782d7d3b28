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
#include <limits>

#include "moelora/errors.hpp"
#include "moelora/tensor.hpp"
#include "test_util.hpp"

using namespace moelora;
using test::random_tensor;

namespace {

// Plain triple loop, independent of the GEMM kernels.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.at(i, p) * b.at(p, j);
  return c;
}

}  // namespace

TEST_CASE("matmul worked examples") {
  const auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const auto col = Tensor::from_data({2, 1}, {1, 2});
  CHECK(matmul(eye, col).data()[0] == 1.0);
  CHECK(matmul(eye, col).data()[1] == 2.0);

  const auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const auto e = Tensor::from_data({2, 1}, {0, 1});
  const auto r = matmul(a, e);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.at(0, 0) == 2.0);
  CHECK(r.at(1, 0) == 4.0);

  Rng rng(3);
  const auto z = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, rng));
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul matches a naive product and is associative") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6), p = 1 + rng.below(6);
    const auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng), c = random_tensor({n, p}, rng);
    CHECK(test::max_abs_diff(matmul(a, b).data(), naive_matmul(a, b)) < 1e-12);
    const auto left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      CHECK(std::abs(left.data()[i] - right.data()[i]) <= 1e-9 * std::max(1.0, std::abs(right.data()[i])));
    }
    const auto bt = transpose(b);
    CHECK(test::max_abs_diff(matmul_nt(a, bt).data(), matmul(a, b).data()) < 1e-12);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const auto a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 3});
  try {
    (void)matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  const auto u = softmax(Tensor::from_data({3}, {1, 1, 1}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto s = softmax(Tensor::from_data({3}, {2, 1, 0}));
  // exp arithmetic by hand: e^2, e^1, e^0 over their sum.
  const double z = std::exp(2.0) + std::exp(1.0) + 1.0;
  CHECK(s.data()[0] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(s.data()[0] == doctest::Approx(0.66524).epsilon(1e-5));
  CHECK(s.data()[1] == doctest::Approx(0.24473).epsilon(1e-5));
  CHECK(s.data()[2] == doctest::Approx(0.09003).epsilon(1e-4));

  const auto big = softmax(Tensor::from_data({2}, {1000, 0}));
  CHECK(big.data()[0] == 1.0);
  CHECK(big.data()[1] == 0.0);

  CHECK_THROWS_AS(softmax(Tensor::from_data({2}, {std::nan(""), 0})), NumericError);
  CHECK_THROWS_AS(softmax(Tensor::from_data({2}, {std::numeric_limits<double>::infinity(), 0})), NumericError);
}

TEST_CASE("softmax property: sums to one and preserves order") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    const auto x = random_tensor({n}, rng, 1.0 + 20.0 * rng.uniform());
    const auto y = softmax(x);
    double sum = 0.0;
    for (double v : y.data()) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (x.data()[i] < x.data()[j]) CHECK(y.data()[i] <= y.data()[j]);
  }
}

TEST_CASE("log_softmax_nll examples") {
  const int zero[] = {0}, one[] = {1};
  CHECK(log_softmax_nll(Tensor::from_data({1, 2}, {0, 0}), zero).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // -log(e^10 / (e^10 + e^-10)) = log1p(e^-20)
  const double tiny = std::log1p(std::exp(-20.0));
  CHECK(log_softmax_nll(Tensor::from_data({1, 2}, {10, -10}), zero).item() == doctest::Approx(tiny).epsilon(1e-9));
  CHECK(tiny == doctest::Approx(2.06e-9).epsilon(1e-2));
  CHECK(log_softmax_nll(Tensor::from_data({1, 2}, {10, -10}), one).item() == doctest::Approx(20.0 + tiny).epsilon(1e-12));

  const int bad[] = {2};
  CHECK_THROWS_AS(log_softmax_nll(Tensor::from_data({1, 2}, {0, 0}), bad), ValidationError);
  const int two[] = {0, 1};
  CHECK_THROWS_AS(log_softmax_nll(Tensor::from_data({1, 2}, {0, 0}), two), Error);
}

TEST_CASE("softmax-NLL gradient is (prob - onehot) / batch") {
  Rng rng(9);
  const auto logits = random_tensor({4, 2}, rng, 1.0, true);
  const int labels[] = {0, 1, 1, 0};
  backward(log_softmax_nll(logits, labels));
  for (std::size_t b = 0; b < 4; ++b) {
    const double l0 = logits.at(b, 0), l1 = logits.at(b, 1);
    const double m = std::max(l0, l1);
    const double p0 = std::exp(l0 - m) / (std::exp(l0 - m) + std::exp(l1 - m));
    const double probs[2] = {p0, 1.0 - p0};
    for (std::size_t c = 0; c < 2; ++c) {
      const double expected = (probs[c] - (labels[b] == static_cast<int>(c) ? 1.0 : 0.0)) / 4.0;
      CHECK(logits.grad()[b * 2 + c] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward: outer-product gradient and unreachable parameters") {
  Rng rng(2);
  const auto W = random_tensor({3, 4}, rng, 1.0, true);
  const auto x = random_tensor({4}, rng);
  const auto unused = random_tensor({2}, rng, 1.0, true);
  backward(sum(matmul(W, x)));
  // d/dW sum(Wx) = 1 x^T
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(W.grad()[i * 4 + j] == doctest::Approx(x.data()[j]).epsilon(1e-15));
  for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward contracts") {
  Rng rng(4);
  const auto w = random_tensor({3}, rng, 1.0, true);
  CHECK_THROWS_AS(backward(mul(w, w)), ContractError);  // not a scalar
  const auto loss = sum(mul(w, w));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), ContractError);  // graph already consumed

  const auto frozen = random_tensor({3}, rng);
  backward(sum(mul(w, frozen)));
  CHECK((!frozen.has_grad() || std::all_of(frozen.grad().begin(), frozen.grad().end(), [](double g) { return g == 0.0; })));
}

TEST_CASE("NoGradGuard stops recording") {
  Rng rng(8);
  const auto w = random_tensor({2, 2}, rng, 1.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_recording_enabled());
    y = sum(matmul(w, w));
  }
  CHECK(grad_recording_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad_check on a quadratic is exact up to roundoff") {
  Rng rng(1);
  const auto w = random_tensor({5}, rng, 1.0, true);
  const auto r = grad_check([&] { return sum(mul(w, w)); }, {w});
  CHECK(r.valid);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("grad_check validates eps and flags non-deterministic functions") {
  Rng rng(1);
  const auto w = random_tensor({3}, rng, 1.0, true);
  auto f = [&] { return sum(mul(w, w)); };
  CHECK_THROWS_AS(grad_check(f, {w}, 1e-9), ValidationError);
  CHECK_THROWS_AS(grad_check(f, {w}, 1e-2), ValidationError);

  Rng noise(2);
  const auto r = grad_check([&] { return sum(scale(mul(w, w), 1.0 + noise.uniform())); }, {w});
  CHECK_FALSE(r.valid);
}

TEST_CASE("grad_check reports zero for frozen inputs") {
  Rng rng(1);
  const auto w = random_tensor({3}, rng, 1.0, true);
  const auto W0 = random_tensor({3, 3}, rng);
  const auto r = grad_check([&] { return sum(tanh(matmul(W0, w))); }, {w, W0});
  REQUIRE(r.per_param.size() == 2);
  CHECK(r.per_param[1] == 0.0);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("every op passes a finite-difference check") {
  Rng rng(21);
  const auto a = random_tensor({3, 4}, rng, 1.0, true);
  const auto b = random_tensor({3, 4}, rng, 1.0, true);
  const auto m = random_tensor({4, 2}, rng, 1.0, true);
  const auto row = random_tensor({4}, rng, 1.0, true);
  const auto gamma = random_tensor({4}, rng, 1.0, true);
  const auto weights = random_tensor({3, 4}, rng);  // makes sums non-symmetric
  auto wsum = [&](const Tensor& t) { return sum(mul(t, t.shape() == weights.shape() ? weights : t)); };

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"matmul", [&] { return wsum(matmul(a, m)); }},
      {"matmul_vec", [&] { return wsum(matmul(a, row)); }},
      {"matmul_nt", [&] { return wsum(matmul_nt(a, b)); }},
      {"transpose", [&] { return wsum(transpose(transpose(a))); }},
      {"add", [&] { return wsum(add(a, b)); }},
      {"sub", [&] { return wsum(sub(a, b)); }},
      {"mul", [&] { return wsum(mul(a, b)); }},
      {"scale", [&] { return wsum(scale(a, -1.7)); }},
      {"add_row", [&] { return wsum(add_row(a, row)); }},
      {"mul_row", [&] { return wsum(mul_row(a, row)); }},
      {"tanh", [&] { return wsum(tanh(a)); }},
      {"gelu", [&] { return wsum(gelu(a)); }},
      {"exp", [&] { return wsum(exp(scale(a, 0.5))); }},
      {"softplus", [&] { return wsum(softplus(a)); }},
      {"mean_rows", [&] { return sum(mul(mean_rows(a), row)); }},
      {"slice_concat", [&] { return wsum(concat_cols({slice_cols(a, 2, 2), slice_cols(b, 0, 2)})); }},
      {"stack_rows", [&] { return wsum(stack_rows({row, gamma, row})); }},
      {"repeat_rows", [&] { return wsum(repeat_rows(row, 3)); }},
      {"reshape", [&] { return wsum(reshape(reshape(a, {12}), {3, 4})); }},
      {"softmax", [&] { return wsum(softmax(a)); }},
      {"layer_norm", [&] { return wsum(layer_norm(a, gamma, row)); }},
      {"nll", [&] {
         const int labels[] = {1, 0, 1};
         return log_softmax_nll(matmul(a, m), labels);
       }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    const auto r = grad_check(f, {a, b, m, row, gamma});
    CHECK(r.valid);
    CHECK(r.max_rel_error < 1e-7);
  }
}

TEST_CASE("layer_norm normalizes each row") {
  Rng rng(6);
  const auto x = random_tensor({5, 8}, rng, 3.0);
  const auto y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 8.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("shape and data invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1, 2, 3}), Error);
  Rng rng(7);
  const auto w = random_tensor({2, 3}, rng, 1.0, true);
  backward(sum(mul(w, w)));
  CHECK(w.grad().size() == w.size());
  CHECK(shape_numel(w.shape()) == w.data().size());
  CHECK_THROWS_AS(check_finite(Tensor::from_data({1}, {std::nan("")}), "probe"), NumericError);
}
