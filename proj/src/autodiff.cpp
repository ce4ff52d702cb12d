// Copyright 2026 The conlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "conlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace conlab::ad {

namespace detail {
struct TensorAccess {
  // Builds a tensor without re-validating; callers check finiteness.
  static Tensor make(Shape shape, std::vector<double> values) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->values = std::move(values);
    return t;
  }
  static void mark_recorded(Tensor& t, const Tape* tape) {
    t.s_->requires_grad = true;
    t.s_->producer = tape;
  }
};
}  // namespace detail

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void check_finite(std::span<const double> v, const char* op, const char* which) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string(op) + ": non-finite " + which);
    }
  }
}

void check_inputs(std::initializer_list<const Tensor*> inputs, const char* op) {
  for (const Tensor* t : inputs) {
    if (!t->defined()) shape_fail(op, "undefined input tensor");
    check_finite(t->values(), op, "input");
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values) {
  check_finite(values, op, "output");
  return detail::TensorAccess::make(std::move(shape), std::move(values));
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  shape_fail(op, "expected rank 1 or 2, got " + shape_str(t.shape()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) shape_fail(op, "expected rank 2, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
  if (product(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor", "value");
  s_ = std::make_shared<detail::Storage>();
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const { return rank() == 1 ? 1 : s_->shape[0]; }
std::size_t Tensor::cols() const { return rank() == 1 ? s_->shape[0] : s_->shape[1]; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return s_->values[0];
}

std::span<double> Tensor::mutable_grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() { s_->grad.clear(); }

Tensor Tensor::detach() const { return detail::TensorAccess::make(shape(), s_->values); }

// ---------------------------------------------------------------------------
// Tape

void Tape::record(std::vector<Tensor> inputs, Tensor& output, BackwardRule rule) {
  if (consumed_) throw TapeError("tape: recording on a consumed tape");
  detail::TensorAccess::mark_recorded(output, this);
  nodes_.push_back(Node{std::move(inputs), output, std::move(rule)});
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw TapeError("backward: tape already consumed");
  if (!root.defined() || root.shape() != Shape{1}) {
    throw TapeError("backward: root must have shape [1], got " +
                    (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  if (root.producer() != this) throw TapeError("backward: root was not produced on this tape");
  consumed_ = true;
  Tensor r = root;
  r.mutable_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->rule();
  }
  nodes_.clear();
}

void backward(Tape& tape, const Tensor& root) { tape.backward(root); }

Tape* active_tape() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  constexpr const char* op = "matmul";
  check_inputs({&a, &b}, op);
  require_rank2(a, op);
  require_rank2(b, op);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    shape_fail(op, "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor y = make_result(op, {m, n}, std::move(out));
  if (recording({&a, &b})) {
    active_tape()->record({a, b}, y, [a, b, y, m, k, n]() mutable {
      auto dy = y.grad();
      if (a.requires_grad()) gemm_nt(dy.data(), b.values().data(), a.mutable_grad().data(), m, n, k);
      if (b.requires_grad()) gemm_tn(a.values().data(), dy.data(), b.mutable_grad().data(), m, k, n);
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  constexpr const char* op = "add";
  check_inputs({&a, &b}, op);
  const bool row_bias = a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1];
  if (!row_bias) require_same_shape(a, b, op);
  const std::size_t n = a.size(), c = a.cols();
  std::vector<double> out(n);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[row_bias ? i % c : i];
  Tensor y = make_result(op, a.shape(), std::move(out));
  if (recording({&a, &b})) {
    active_tape()->record({a, b}, y, [a, b, y, row_bias, n, c]() mutable {
      auto dy = y.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) db[row_bias ? i % c : i] += dy[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  constexpr const char* op = "mul";
  check_inputs({&a, &b}, op);
  require_same_shape(a, b, op);
  const std::size_t n = a.size();
  std::vector<double> out(n);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  Tensor y = make_result(op, a.shape(), std::move(out));
  if (recording({&a, &b})) {
    active_tape()->record({a, b}, y, [a, b, y, n]() mutable {
      auto dy = y.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        auto bv = b.values();
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        auto av = a.values();
        for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
      }
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  constexpr const char* op = "softmax_rows";
  check_inputs({&x}, op);
  const auto [r, c] = rows_cols(x, op);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * c;
    double* yi = out.data() + i * c;
    const double mx = *std::max_element(xi, xi + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      total += yi[j];
    }
    for (std::size_t j = 0; j < c; ++j) yi[j] /= total;
  }
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y, r, c]() mutable {
      auto dy = y.grad();
      auto yv = y.values();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += dy[i * c + j] * yv[i * c + j];
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += yv[i * c + j] * (dy[i * c + j] - dot);
      }
    });
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  constexpr const char* op = "log_softmax_rows";
  check_inputs({&x}, op);
  const auto [r, c] = rows_cols(x, op);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * c;
    double* yi = out.data() + i * c;
    const double mx = *std::max_element(xi, xi + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(xi[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) yi[j] = xi[j] - lse;
  }
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y, r, c]() mutable {
      auto dy = y.grad();
      auto yv = y.values();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += dy[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          dx[i * c + j] += dy[i * c + j] - std::exp(yv[i * c + j]) * total;
        }
      }
    });
  }
  return y;
}

Tensor log(const Tensor& x) {
  constexpr const char* op = "log";
  check_inputs({&x}, op);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(xv[i] > 0.0)) throw NonFiniteError("log: non-positive input " + std::to_string(xv[i]));
    out[i] = std::log(xv[i]);
  }
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto xv = x.values();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] / xv[i];
    });
  }
  return y;
}

Tensor exp(const Tensor& x) {
  constexpr const char* op = "exp";
  check_inputs({&x}, op);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto yv = y.values();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * yv[i];
    });
  }
  return y;
}

Tensor relu(const Tensor& x) {
  constexpr const char* op = "relu";
  check_inputs({&x}, op);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto xv = x.values();
      auto dx = x.mutable_grad();
      // Subgradient 0 at the kink.
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (xv[i] > 0.0) dx[i] += dy[i];
      }
    });
  }
  return y;
}

namespace {

Tensor layer_norm_impl(const Tensor& x, const Tensor* gain, const Tensor* bias, double eps) {
  constexpr const char* op = "layer_norm_rows";
  check_inputs({&x}, op);
  const auto [r, c] = rows_cols(x, op);
  if (gain != nullptr) {
    check_inputs({gain, bias}, op);
    if (gain->shape() != Shape{c} || bias->shape() != Shape{c}) {
      shape_fail(op, "gain/bias must be [" + std::to_string(c) + "], got " +
                         shape_str(gain->shape()) + " and " + shape_str(bias->shape()));
    }
  }
  if (!(eps > 0.0)) shape_fail(op, "eps must be positive");
  auto xv = x.values();
  std::vector<double> xhat(x.size()), rstd(r), out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(c);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xi[j] - mu) * rstd[i];
      xhat[i * c + j] = h;
      out[i * c + j] = gain ? h * gain->values()[j] + bias->values()[j] : h;
    }
  }
  Tensor y = make_result(op, x.shape(), std::move(out));
  const bool affine = gain != nullptr;
  const bool rec = affine ? recording({&x, gain, bias}) : recording({&x});
  if (rec) {
    Tensor g = affine ? *gain : Tensor();
    Tensor b = affine ? *bias : Tensor();
    std::vector<Tensor> inputs{x};
    if (affine) {
      inputs.push_back(g);
      inputs.push_back(b);
    }
    active_tape()->record(std::move(inputs), y,
                          [x, g, b, y, affine, r, c, xhat = std::move(xhat),
                           rstd = std::move(rstd)]() mutable {
      auto dy = y.grad();
      std::vector<double> gh(c);
      for (std::size_t i = 0; i < r; ++i) {
        const double* dyi = dy.data() + i * c;
        const double* hi = xhat.data() + i * c;
        if (affine && g.requires_grad()) {
          auto dg = g.mutable_grad();
          for (std::size_t j = 0; j < c; ++j) dg[j] += dyi[j] * hi[j];
        }
        if (affine && b.requires_grad()) {
          auto db = b.mutable_grad();
          for (std::size_t j = 0; j < c; ++j) db[j] += dyi[j];
        }
        if (!x.requires_grad()) continue;
        double mean_gh = 0.0, mean_ghh = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gh[j] = affine ? dyi[j] * g.values()[j] : dyi[j];
          mean_gh += gh[j];
          mean_ghh += gh[j] * hi[j];
        }
        mean_gh /= static_cast<double>(c);
        mean_ghh /= static_cast<double>(c);
        auto dx = x.mutable_grad();
        for (std::size_t j = 0; j < c; ++j) {
          dx[i * c + j] += rstd[i] * (gh[j] - mean_gh - hi[j] * mean_ghh);
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return layer_norm_impl(x, &gain, &bias, eps);
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
  return layer_norm_impl(x, nullptr, nullptr, eps);
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  constexpr const char* op = "embedding_lookup";
  check_inputs({&table}, op);
  require_rank2(table, op);
  if (ids.empty()) shape_fail(op, "empty id list");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      shape_fail(op, "id " + std::to_string(ids[i]) + " out of range for table " +
                         shape_str(table.shape()));
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  Tensor y = make_result(op, {ids.size(), d}, std::move(out));
  if (recording({&table})) {
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    active_tape()->record({table}, y, [table, y, d, rows = std::move(rows)]() mutable {
      auto dy = y.grad();
      auto dt = table.mutable_grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) dt[rows[i] * d + j] += dy[i * d + j];
      }
    });
  }
  return y;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  constexpr const char* op = "concat";
  if (parts.empty()) shape_fail(op, "no inputs");
  for (const Tensor& p : parts) check_inputs({&p}, op);
  const std::size_t rank = parts[0].rank();
  if (rank > 2 || axis >= rank) {
    shape_fail(op, "axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  for (const Tensor& p : parts) {
    if (p.rank() != rank) shape_fail(op, "rank mismatch");
  }
  Shape shape = parts[0].shape();
  std::vector<double> out;
  std::vector<std::size_t> offsets;  // along axis
  if (axis == 0) {
    const std::size_t c = rank == 2 ? shape[1] : 1;
    std::size_t total = 0;
    for (const Tensor& p : parts) {
      if (rank == 2 && p.shape()[1] != c) {
        shape_fail(op, "column mismatch " + shape_str(p.shape()) + " vs " + shape_str(shape));
      }
      offsets.push_back(total);
      total += p.shape()[0];
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
    shape[0] = total;
  } else {
    const std::size_t r = shape[0];
    std::size_t total = 0;
    for (const Tensor& p : parts) {
      if (p.shape()[0] != r) {
        shape_fail(op, "row mismatch " + shape_str(p.shape()) + " vs " + shape_str(shape));
      }
      offsets.push_back(total);
      total += p.shape()[1];
    }
    out.resize(r * total);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t w = parts[k].shape()[1];
      auto pv = parts[k].values();
      for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(pv.data() + i * w, w, out.data() + i * total + offsets[k]);
      }
    }
    shape[1] = total;
  }
  Tensor y = make_result(op, shape, std::move(out));
  const bool any = active_tape() != nullptr &&
                   std::any_of(parts.begin(), parts.end(),
                               [](const Tensor& p) { return p.requires_grad(); });
  if (any) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    active_tape()->record(inputs, y, [inputs, y, axis, offsets]() mutable {
      auto dy = y.grad();
      const std::size_t total_cols = y.rank() == 2 ? y.shape()[1] : 1;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& p = inputs[k];
        if (!p.requires_grad()) continue;
        auto dp = p.mutable_grad();
        if (axis == 0) {
          const std::size_t base = offsets[k] * total_cols;
          for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += dy[base + i];
        } else {
          const std::size_t r = p.shape()[0], w = p.shape()[1];
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) dp[i * w + j] += dy[i * total_cols + offsets[k] + j];
          }
        }
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  constexpr const char* op = "slice";
  check_inputs({&x}, op);
  if (x.rank() > 2 || axis >= x.rank()) {
    shape_fail(op, "axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  if (begin >= end || end > x.shape()[axis]) {
    shape_fail(op, "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") invalid for " + shape_str(x.shape()) + " axis " + std::to_string(axis));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t c = x.rank() == 2 ? x.shape()[1] : 1;
  auto xv = x.values();
  std::vector<double> out;
  out.reserve(product(shape));
  if (axis == 0) {
    out.assign(xv.begin() + begin * c, xv.begin() + end * c);
  } else {
    for (std::size_t i = 0; i < x.shape()[0]; ++i) {
      out.insert(out.end(), xv.begin() + i * c + begin, xv.begin() + i * c + end);
    }
  }
  Tensor y = make_result(op, shape, std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y, axis, begin, end, c]() mutable {
      auto dy = y.grad();
      auto dx = x.mutable_grad();
      if (axis == 0) {
        for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * c + i] += dy[i];
      } else {
        const std::size_t w = end - begin;
        for (std::size_t i = 0; i < x.shape()[0]; ++i) {
          for (std::size_t j = 0; j < w; ++j) dx[i * c + begin + j] += dy[i * w + j];
        }
      }
    });
  }
  return y;
}

Tensor transpose(const Tensor& x) {
  constexpr const char* op = "transpose";
  check_inputs({&x}, op);
  require_rank2(x, op);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  auto xv = x.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  Tensor y = make_result(op, {c, r}, std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y, r, c]() mutable {
      auto dy = y.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[j * r + i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double factor) {
  constexpr const char* op = "scale";
  check_inputs({&x}, op);
  if (!std::isfinite(factor)) throw NonFiniteError("scale: non-finite factor");
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y, factor]() mutable {
      auto dy = y.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  constexpr const char* op = "sum";
  check_inputs({&x}, op);
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor y = make_result(op, {1}, {total});
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y]() mutable {
      const double g = y.grad()[0];
      for (double& d : x.mutable_grad()) d += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  constexpr const char* op = "mean";
  check_inputs({&x}, op);
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double n = static_cast<double>(x.size());
  Tensor y = make_result(op, {1}, {total / n});
  if (recording({&x})) {
    active_tape()->record({x}, y, [x, y, n]() mutable {
      const double g = y.grad()[0] / n;
      for (double& d : x.mutable_grad()) d += g;
    });
  }
  return y;
}

Tensor dropout_mask_apply(const Tensor& x, const Tensor& mask, double keep_scale) {
  constexpr const char* op = "dropout_mask_apply";
  check_inputs({&x, &mask}, op);
  require_same_shape(x, mask, op);
  if (mask.requires_grad()) shape_fail(op, "mask must be a constant");
  for (double m : mask.values()) {
    if (m != 0.0 && m != 1.0) shape_fail(op, "mask entries must be 0 or 1");
  }
  auto xv = x.values(), mv = mask.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * (mv[i] * keep_scale);
  Tensor y = make_result(op, x.shape(), std::move(out));
  if (recording({&x})) {
    active_tape()->record({x, mask}, y, [x, mask, y, keep_scale]() mutable {
      auto dy = y.grad();
      auto mv = mask.values();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (mv[i] * keep_scale);
    });
  }
  return y;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kRelu: return "relu";
    case OpKind::kLayerNormRows: return "layer_norm_rows";
    case OpKind::kEmbeddingLookup: return "embedding_lookup";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kScale: return "scale";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kDropoutMaskApply: return "dropout_mask_apply";
  }
  return "unknown";
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kAdd: need(2); return add(inputs[0], inputs[1]);
    case OpKind::kMul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::kSoftmaxRows: need(1); return softmax_rows(inputs[0]);
    case OpKind::kLogSoftmaxRows: need(1); return log_softmax_rows(inputs[0]);
    case OpKind::kLog: need(1); return log(inputs[0]);
    case OpKind::kExp: need(1); return exp(inputs[0]);
    case OpKind::kRelu: need(1); return relu(inputs[0]);
    case OpKind::kLayerNormRows:
      if (inputs.size() == 1) return layer_norm_rows(inputs[0], attrs.eps);
      need(3);
      return layer_norm_rows(inputs[0], inputs[1], inputs[2], attrs.eps);
    case OpKind::kEmbeddingLookup: need(1); return embedding_lookup(inputs[0], attrs.ids);
    case OpKind::kConcat: return concat(inputs, attrs.axis);
    case OpKind::kSlice: need(1); return slice(inputs[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::kTranspose: need(1); return transpose(inputs[0]);
    case OpKind::kScale: need(1); return scale(inputs[0], attrs.scalar);
    case OpKind::kSum: need(1); return sum(inputs[0]);
    case OpKind::kMean: need(1); return mean(inputs[0]);
    case OpKind::kDropoutMaskApply: need(2); return dropout_mask_apply(inputs[0], inputs[1], attrs.scalar);
  }
  throw ShapeError("forward_op: unknown op kind");
}

std::vector<std::vector<double>> finite_difference_grad(const std::function<double()>& loss_fn,
                                                        std::span<Tensor> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_grad: h must be positive");
  const double base = loss_fn();
  if (loss_fn() != base) {
    throw std::runtime_error("finite_difference_grad: loss function is not deterministic");
  }
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (Tensor& p : params) {
    auto v = p.mutable_values();
    std::vector<double> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss_fn();
      v[i] = orig - h;
      const double down = loss_fn();
      v[i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace conlab::ad
