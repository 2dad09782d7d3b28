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

#include "moelora/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "moelora/errors.hpp"
#include "moelora/linalg.hpp"

namespace moelora {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  Tensor::BackwardFn fn;
};

}  // namespace detail

namespace {

thread_local bool g_recording = true;

void require(bool cond, const char* op, const Shape& a, const Shape& b) {
  if (!cond) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

template <typename F>
Tensor unary(const Tensor& a, F&& f, auto&& dfdx) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor::from_op(a.shape(), std::move(out), {a}, [a, y, dfdx](std::span<const double> g) {
    auto ga = a.grad_buffer();
    const auto x = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], (*y)[i]);
  });
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto s : shape) {
    if (s == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                         " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

Tensor Tensor::from_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                       BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_recording) {
    for (const auto& in : inputs) {
      if (in.defined() && in.node_->requires_grad) node->inputs.push_back(in.node_);
    }
    if (!node->inputs.empty()) {
      node->requires_grad = true;
      node->leaf = false;
      node->fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return dim() == 2 ? shape()[0] : 1; }
std::size_t Tensor::cols() const { return dim() == 0 ? 1 : shape().back(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  if (!node_->leaf) throw ContractError("mutable_data() is only allowed on leaf tensors");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw ContractError("set_requires_grad() is only allowed on leaf tensors");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::grad_buffer() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }
double Tensor::at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

Tensor Tensor::detach() const { return from_data(shape(), node_->value, false); }

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() { return g_recording; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  auto root = loss.node_;
  if (root->consumed) throw ContractError("backward() called twice on the same graph");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf || !node->fn || node->grad.empty()) continue;
    node->fn(node->grad);
  }
  for (auto* node : order) {
    if (node->leaf) continue;
    node->fn = nullptr;
    node->inputs.clear();
    node->consumed = true;
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  const std::size_t m = a.rows(), k = a.cols();
  if (b.dim() == 1) {
    require(b.size() == k, "matmul", a.shape(), b.shape());
    std::vector<double> out(m, 0.0);
    linalg::gemm(false, false, m, 1, k, a.data().data(), b.data().data(), out.data(), false);
    return Tensor::from_op({m}, std::move(out), {a, b}, [a, b, m, k](std::span<const double> g) {
      if (a.requires_grad()) linalg::gemm(false, true, m, k, 1, g.data(), b.data().data(), a.grad_buffer().data(), true);
      if (b.requires_grad()) linalg::gemm(true, false, k, 1, m, a.data().data(), g.data(), b.grad_buffer().data(), true);
    });
  }
  require_rank2(b, "matmul");
  require(b.rows() == k, "matmul", a.shape(), b.shape());
  const std::size_t n = b.cols();
  std::vector<double> out(m * n, 0.0);
  linalg::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [a, b, m, n, k](std::span<const double> g) {
    if (a.requires_grad()) linalg::gemm(false, true, m, k, n, g.data(), b.data().data(), a.grad_buffer().data(), true);
    if (b.requires_grad()) linalg::gemm(true, false, k, n, m, a.data().data(), g.data(), b.grad_buffer().data(), true);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(b, "matmul_nt");
  const std::size_t n = b.rows(), k = b.cols();
  const bool vec = a.dim() == 1;
  if (!vec) require_rank2(a, "matmul_nt");
  const std::size_t m = vec ? 1 : a.rows();
  require(a.cols() == k, "matmul_nt", a.shape(), b.shape());
  std::vector<double> out(m * n, 0.0);
  linalg::gemm(false, true, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  Shape shape = vec ? Shape{n} : Shape{m, n};
  return Tensor::from_op(std::move(shape), std::move(out), {a, b}, [a, b, m, n, k](std::span<const double> g) {
    if (a.requires_grad()) linalg::gemm(false, false, m, k, n, g.data(), b.data().data(), a.grad_buffer().data(), true);
    if (b.requires_grad()) linalg::gemm(true, false, n, k, m, g.data(), a.data().data(), b.grad_buffer().data(), true);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return Tensor::from_op({n, m}, std::move(out), {a}, [a, m, n](std::span<const double> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add", a.shape(), b.shape());
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    for (const auto* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    const auto x = a.data(), y = b.data();
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [a, s](std::span<const double> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.dim() == 1 && row.size() == a.cols() && a.dim() >= 1, "add_row", a.shape(), row.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto r = row.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
  return Tensor::from_op(a.shape(), std::move(out), {a, row}, [a, row, m, n](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (row.requires_grad()) {
      auto gr = row.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  require(row.dim() == 1 && row.size() == a.cols() && a.dim() >= 1, "mul_row", a.shape(), row.shape());
  const std::size_t m = a.rows(), n = a.cols();
  const auto x = a.data(), r = row.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * r[j];
  return Tensor::from_op(a.shape(), std::move(out), {a, row}, [a, row, m, n](std::span<const double> g) {
    const auto x = a.data(), r = row.data();
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * r[j];
    }
    if (row.requires_grad()) {
      auto gr = row.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j] * x[i * n + j];
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double u = kC * (x + kA * x * x * x);
        const double t = std::tanh(u);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::from_op({}, {s}, {a}, [a](std::span<const double> g) {
    for (auto& v : a.grad_buffer()) v += g[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  require_rank2(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const auto x = a.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (auto& v : out) v *= inv;
  return Tensor::from_op({n}, std::move(out), {a}, [a, m, n, inv](std::span<const double> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_str(a.shape()));
  }
  const auto x = a.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * n + begin), count, out.begin() + static_cast<std::ptrdiff_t>(i * count));
  return Tensor::from_op({m, count}, std::move(out), {a}, [a, m, n, begin, count](std::span<const double> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += g[i * count + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    require(p.rows() == m, "concat_cols", parts.front().shape(), p.shape());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto x = p.data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * n + offset));
    offset += c;
  }
  return Tensor::from_op({m, n}, std::move(out), parts, [parts, m, n](std::span<const double> g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t c = p.cols();
      if (p.requires_grad()) {
        auto gp = p.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * n + offset + j];
      }
      offset += c;
    }
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t n = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    require(r.dim() == 1 && r.size() == n, "stack_rows", rows.front().shape(), r.shape());
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return Tensor::from_op({rows.size(), n}, std::move(out), rows, [rows, n](std::span<const double> g) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].requires_grad()) continue;
      auto gr = rows[i].grad_buffer();
      for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

Tensor repeat_rows(const Tensor& row, std::size_t times) {
  if (row.dim() != 1 || times == 0) {
    throw DimensionError("repeat_rows: expected a vector and positive count, got " + shape_str(row.shape()));
  }
  const std::size_t n = row.size();
  std::vector<double> out;
  out.reserve(n * times);
  for (std::size_t i = 0; i < times; ++i) out.insert(out.end(), row.data().begin(), row.data().end());
  return Tensor::from_op({times, n}, std::move(out), {row}, [row, n, times](std::span<const double> g) {
    auto gr = row.grad_buffer();
    for (std::size_t i = 0; i < times; ++i)
      for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::from_op(std::move(shape), std::move(out), {a}, [a](std::span<const double> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor softmax(const Tensor& a) {
  if (a.dim() == 0) throw DimensionError("softmax: needs at least one axis");
  check_finite(a, "softmax input");
  const std::size_t m = a.rows(), n = a.cols();
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    double* y = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor::from_op(a.shape(), std::move(out), {a}, [a, y, m, n](std::span<const double> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* yi = y->data() + i * n;
      const double* gi = g.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gi[j] * yi[j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += yi[j] * (gi[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = a.rows(), n = a.cols();
  require(gamma.dim() == 1 && gamma.size() == n, "layer_norm", a.shape(), gamma.shape());
  require(beta.dim() == 1 && beta.size() == n, "layer_norm", a.shape(), beta.shape());
  const auto x = a.data(), gm = gamma.data(), bt = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * gm[j] + bt[j];
    }
  }
  return Tensor::from_op(a.shape(), std::move(out), {a, gamma, beta},
                         [a, gamma, beta, xhat, inv_std, m, n](std::span<const double> g) {
                           const auto gm = gamma.data();
                           if (gamma.requires_grad() || beta.requires_grad()) {
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) {
                                 if (gamma.requires_grad()) gamma.grad_buffer()[j] += g[i * n + j] * (*xhat)[i * n + j];
                                 if (beta.requires_grad()) beta.grad_buffer()[j] += g[i * n + j];
                               }
                           }
                           if (!a.requires_grad()) return;
                           auto ga = a.grad_buffer();
                           const double inv_n = 1.0 / static_cast<double>(n);
                           for (std::size_t i = 0; i < m; ++i) {
                             double s1 = 0.0, s2 = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               const double dh = g[i * n + j] * gm[j];
                               s1 += dh;
                               s2 += dh * (*xhat)[i * n + j];
                             }
                             for (std::size_t j = 0; j < n; ++j) {
                               const double dh = g[i * n + j] * gm[j];
                               ga[i * n + j] += (*inv_std)[i] * (dh - inv_n * s1 - (*xhat)[i * n + j] * inv_n * s2);
                             }
                           }
                         });
}

Tensor log_softmax_nll(const Tensor& logits, std::span<const int> labels) {
  if (logits.dim() != 2 || logits.cols() != 2) {
    throw DimensionError("log_softmax_nll: expected [batch x 2] logits, got " + shape_str(logits.shape()));
  }
  const std::size_t b = logits.rows();
  if (labels.size() != b) {
    throw ValidationError("log_softmax_nll: " + std::to_string(labels.size()) + " labels for batch of " +
                          std::to_string(b));
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("log_softmax_nll: label " + std::to_string(y) + " not in {0,1}");
  }
  check_finite(logits, "log_softmax_nll logits");
  const auto x = logits.data();
  auto probs = std::make_shared<std::vector<double>>(2 * b);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double a0 = x[2 * i], a1 = x[2 * i + 1];
    const double mx = std::max(a0, a1);
    const double lse = mx + std::log(std::exp(a0 - mx) + std::exp(a1 - mx));
    loss -= (labels[i] == 0 ? a0 : a1) - lse;
    (*probs)[2 * i] = std::exp(a0 - lse);
    (*probs)[2 * i + 1] = std::exp(a1 - lse);
  }
  loss /= static_cast<double>(b);
  std::vector<int> ys(labels.begin(), labels.end());
  return Tensor::from_op({}, {loss}, {logits}, [logits, probs, ys, b](std::span<const double> g) {
    auto gl = logits.grad_buffer();
    const double s = g[0] / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      gl[2 * i] += s * ((*probs)[2 * i] - (ys[i] == 0 ? 1.0 : 0.0));
      gl[2 * i + 1] += s * ((*probs)[2 * i + 1] - (ys[i] == 1 ? 1.0 : 0.0));
    }
  });
}

void check_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + where);
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ValidationError("grad_check: eps must lie in [1e-7, 1e-3]");
  GradCheckResult result;
  result.per_param.assign(params.size(), 0.0);

  for (auto& p : params) {
    if (p.requires_grad()) p.zero_grad();
  }
  const Tensor loss = loss_fn();
  const double base = loss.item();
  backward(loss);
  {
    NoGradGuard guard;
    if (loss_fn().item() != base) {
      result.valid = false;
      return result;
    }
  }

  NoGradGuard guard;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    if (!p.requires_grad()) continue;
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(p.size(), 0.0);
    auto values = p.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss_fn().item();
      values[i] = saved - eps;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    result.per_param[pi] = worst;
    result.max_rel_error = std::max(result.max_rel_error, worst);
  }
  return result;
}

}  // namespace moelora
