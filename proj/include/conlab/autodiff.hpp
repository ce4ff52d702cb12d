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

// Reverse-mode automatic differentiation over small dense tensors.
//
// A Tensor is a shared handle to row-major float64 storage. Operations record
// a node on the thread's active Tape (see TapeScope) whenever one of their
// inputs requires a gradient; with no active tape nothing is recorded, which
// is how inference and beam search run. Backward visits the recorded nodes
// in exact reverse order and accumulates into leaf gradients additively.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace conlab::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first touched
  bool requires_grad = false;
  const Tape* producer = nullptr;
};
struct TensorAccess;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  // Throws NonFiniteError if any value is NaN/Inf and ShapeError if the
  // shape does not match the value count.
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->values.size(); }
  // Rank-1 tensors are viewed as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return s_->values; }
  // Writable view for leaves (parameter updates, finite differences).
  std::span<double> mutable_values() { return s_->values; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return s_->values[r * cols() + c]; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }
  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  // Allocates a zero gradient on first use. Handles share storage, so this is
  // available on const handles too.
  std::span<double> mutable_grad() const;
  void zero_grad();

  const Tape* producer() const { return s_->producer; }
  bool same_as(const Tensor& other) const { return s_ == other.s_; }
  // Value copy with no gradient history.
  Tensor detach() const;

 private:
  friend class Tape;
  friend struct detail::TensorAccess;
  std::shared_ptr<detail::Storage> s_;
};

class Tape {
 public:
  using BackwardRule = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor> inputs, Tensor& output, BackwardRule rule);

  // root must be a [1]-shaped tensor recorded on this tape. A tape supports a
  // single backward pass.
  void backward(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule rule;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

Tape* active_tape() noexcept;

// Makes `tape` the recording target for the current thread until destroyed.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

enum class OpKind {
  kMatmul,
  kAdd,
  kMul,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kLog,
  kExp,
  kRelu,
  kLayerNormRows,
  kEmbeddingLookup,
  kConcat,
  kSlice,
  kTranspose,
  kScale,
  kSum,
  kMean,
  kDropoutMaskApply,
};

const char* op_name(OpKind kind);

// Non-tensor arguments for forward_op.
struct OpAttrs {
  double scalar = 1.0;            // scale factor; dropout keep-scale
  std::size_t axis = 0;           // concat / slice
  std::size_t begin = 0;          // slice
  std::size_t end = 0;            // slice (exclusive)
  std::vector<std::size_t> ids;   // embedding_lookup rows
  double eps = 1e-5;              // layer_norm_rows
};

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// Same shape, or [m,n] + [n] added to every row.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor relu(const Tensor& x);
// Row normalization with optional per-column gain and bias (both [n]).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor layer_norm_rows(const Tensor& x, double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// x * mask * keep_scale, where mask is a constant 0/1 tensor of x's shape.
Tensor dropout_mask_apply(const Tensor& x, const Tensor& mask, double keep_scale);

void backward(Tape& tape, const Tensor& root);

// Central differences (loss(p + h e_i) - loss(p - h e_i)) / 2h for every
// coordinate of every tensor in `params`. Values are restored afterwards.
std::vector<std::vector<double>> finite_difference_grad(
    const std::function<double()>& loss_fn, std::span<Tensor> params, double h = 1e-5);

}  // namespace conlab::ad
