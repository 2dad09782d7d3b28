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

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node. Leaves are created by the factory
// functions; every op returns a new node that remembers its inputs and a
// closure that pushes the output gradient back into them. backward() walks
// the recorded graph once in reverse topological order and then releases it.
//
// Only rank-0, rank-1 and rank-2 tensors are used by the model. Rank-1
// tensors act as row vectors wherever an op broadcasts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace moelora {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  /// Receives d(loss)/d(output) and accumulates into the inputs' gradients.
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  /// Builds an op result. When recording is off, or no input requires a
  /// gradient, the result is a plain constant and `fn` is dropped.
  static Tensor from_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                        BackwardFn fn);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size() const;
  /// Leading extent of a rank-2 tensor; 1 for vectors.
  std::size_t rows() const;
  /// Trailing extent; the length for vectors.
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Writable view of a leaf's values. Throws ContractError on op results.
  std::span<double> mutable_data();

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  /// Allocates a zero gradient on first use.
  std::span<double> grad_buffer() const;
  void zero_grad();

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  /// Same values, fresh leaf, no history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend void backward(const Tensor& loss);

  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Reverse pass from a scalar. The graph behind `loss` is consumed.
void backward(const Tensor& loss);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] or [m,k]x[k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, a:[m,k]|[k], b:[n,k]
Tensor transpose(const Tensor& a);

// Elementwise and broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);  // a:[m,n] + row:[n]
Tensor mul_row(const Tensor& a, const Tensor& row);  // a:[m,n] * row:[n]
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);

// Reductions and reshaping.
Tensor sum(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [T,d] -> [d]
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor stack_rows(const std::vector<Tensor>& rows);  // each [n] -> [k,n]
Tensor repeat_rows(const Tensor& row, std::size_t times);
Tensor reshape(const Tensor& a, Shape shape);

// Normalization and probabilities.
Tensor softmax(const Tensor& a);  // over the last axis
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Mean negative log-likelihood of two-class logits [batch,2].
Tensor log_softmax_nll(const Tensor& logits, std::span<const int> labels);

/// Throws NumericError naming `where` if any value is NaN or Inf.
void check_finite(const Tensor& t, const std::string& where);

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// One entry per parameter; frozen parameters report 0.
  std::vector<double> per_param;
  /// False when two evaluations at the same point disagreed.
  bool valid = true;
};

/// Compares backward() gradients with central differences,
/// |analytic - numeric| / max(1, |numeric|), maximized over every entry.
/// `loss_fn` must rebuild the graph on each call.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                           double eps = 1e-6);

}  // namespace moelora
