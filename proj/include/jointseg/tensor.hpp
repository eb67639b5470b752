// Copyright (c) 2026 The jointseg Authors
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jointseg/error.hpp"

namespace jointseg
{

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape & shape);
std::size_t shape_numel(const Shape & shape);

template<typename T>
struct TensorNode
{
  Shape shape;
  std::vector<T> values;
  // Empty until a backward pass reaches this node.
  std::vector<T> grad;
  bool requires_grad = false;
  const char * op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(TensorNode &)> backward_fn;

  bool is_leaf() const {return !backward_fn;}
  std::vector<T> & grad_buffer()
  {
    if (grad.size() != values.size()) {
      grad.assign(values.size(), T(0));
    }
    return grad;
  }
};

/// Dense row-major tensor participating in a reverse-mode differentiation
/// graph. Handles are cheap to copy and share the underlying node.
///
/// Values are immutable once an op has produced them. Leaf parameters are the
/// exception: the optimizer writes through mutable_values().
template<typename T>
class Tensor
{
public:
  using Scalar = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node)
  : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const {return static_cast<bool>(node_);}
  const Shape & shape() const {return node_->shape;}
  std::size_t rank() const {return node_->shape.size();}
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const {return dim(0);}
  std::size_t cols() const {return dim(1);}
  std::size_t numel() const {return node_->values.size();}

  std::span<const T> values() const {return node_->values;}
  std::span<T> mutable_values() {return node_->values;}
  T at(std::size_t row, std::size_t col) const;
  T item() const;

  bool requires_grad() const {return node_->requires_grad;}
  bool has_grad() const {return node_->grad.size() == node_->values.size() && numel() > 0;}
  std::span<const T> grad() const {return node_->grad;}
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; interior gradients are recomputed each time.
  void backward() const;

  const char * op_name() const {return node_->op;}
  const std::shared_ptr<TensorNode<T>> & node() const {return node_;}

private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Topologically ordered list of the nodes reachable from `root` that take
/// part in differentiation; every node appears after all of its inputs.
template<typename T>
std::vector<const TensorNode<T> *> computation_record(const Tensor<T> & root);

// ---------------------------------------------------------------------------
// Recording control

/// Whether ops on this thread currently build graph edges.
bool grad_recording_enabled();

class NoGradGuard
{
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

/// Hash of every branch decision taken by non-smooth ops (relu masks, max
/// winners, hinge activity, L1 signs) while the signature is alive. Two
/// evaluations with equal signatures lie on the same smooth piece.
class KinkSignature
{
public:
  KinkSignature();
  ~KinkSignature();
  KinkSignature(const KinkSignature &) = delete;
  KinkSignature & operator=(const KinkSignature &) = delete;

  std::uint64_t value() const {return hash_;}

  static bool active();
  static void mix(std::uint64_t bits);

private:
  std::uint64_t hash_;
  KinkSignature * previous_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives

enum class Activation { kRelu, kNone };
enum class ElementwiseOp { kAdd, kMul, kSigmoid, kRelu };

template<typename T>
Tensor<T> matmul(const Tensor<T> & a, const Tensor<T> & b);

// Binary ops accept equal shapes, or a rank-2 operand with extent 1 along a
// single axis that is broadcast against the other operand.
template<typename T>
Tensor<T> add(const Tensor<T> & a, const Tensor<T> & b);
template<typename T>
Tensor<T> sub(const Tensor<T> & a, const Tensor<T> & b);
template<typename T>
Tensor<T> mul(const Tensor<T> & a, const Tensor<T> & b);
template<typename T>
Tensor<T> scale(const Tensor<T> & x, T factor);
template<typename T>
Tensor<T> relu(const Tensor<T> & x);
template<typename T>
Tensor<T> sigmoid(const Tensor<T> & x);

template<typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T> & x);
template<typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T> & a, const Tensor<T> & b);

/// Mean along `axis`; that extent collapses to 1.
template<typename T>
Tensor<T> reduce_mean(const Tensor<T> & x, std::size_t axis);
/// Sum of all elements as a rank-0 scalar.
template<typename T>
Tensor<T> sum(const Tensor<T> & x);
/// Repeat `count` times along `axis`.
template<typename T>
Tensor<T> tile(const Tensor<T> & x, std::size_t axis, std::size_t count);
/// Column-wise concatenation of two matrices with equal row counts.
template<typename T>
Tensor<T> concat(const Tensor<T> & a, const Tensor<T> & b);

template<typename T>
Tensor<T> gather_rows(const Tensor<T> & x, std::span<const std::size_t> rows);
/// Max over consecutive groups of `group_size` rows. Ties go to the first row.
template<typename T>
Tensor<T> group_max(const Tensor<T> & x, std::size_t group_size);
/// out[i] = sum_j weights[i*k+j] * x[rows[i*k+j]]; weights and rows are
/// constants of the graph.
template<typename T>
Tensor<T> weighted_rows(
  const Tensor<T> & x, std::span<const std::size_t> rows, std::span<const T> weights,
  std::size_t k);

/// Kernel-size-1 convolution: x * weight + bias, then activation.
template<typename T>
Tensor<T> pointwise_conv(
  const Tensor<T> & x, const Tensor<T> & weight, const Tensor<T> & bias,
  Activation activation);

/// Mean over rows of -log softmax(logits)[label].
template<typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T> & logits, std::span<const int> labels);

namespace detail
{
/// Builds an op output. `backward` is attached only when recording is on and
/// some input requires a gradient.
template<typename T>
Tensor<T> make_op(
  const char * name, Shape shape, std::vector<T> values,
  std::vector<Tensor<T>> inputs, std::function<void(TensorNode<T> &)> backward);
}  // namespace detail

// ---------------------------------------------------------------------------
// Parameters

struct InitSpec
{
  enum class Kind { kZeros, kHeUniform, kLecunUniform, kConstant };
  Kind kind = Kind::kZeros;
  std::size_t fan_in = 1;
  double value = 0.0;
};

template<typename T>
struct Parameter
{
  std::string name;
  Tensor<T> tensor;
  InitSpec init;
};

/// Owns the named trainable tensors of a model in creation order.
template<typename T>
class ParameterStore
{
public:
  Tensor<T> create(const std::string & name, Shape shape, InitSpec init, std::mt19937_64 & rng);

  std::vector<Parameter<T>> & all() {return params_;}
  const std::vector<Parameter<T>> & all() const {return params_;}
  const Parameter<T> * find(const std::string & name) const;
  std::size_t scalar_count() const;
  void zero_grad();

private:
  std::vector<Parameter<T>> params_;
};

template<typename T>
struct ConvLayer
{
  Tensor<T> weight;
  Tensor<T> bias;
  Activation activation = Activation::kRelu;

  static ConvLayer create(
    ParameterStore<T> & store, const std::string & name, std::size_t in, std::size_t out,
    Activation activation, std::mt19937_64 & rng);

  Tensor<T> operator()(const Tensor<T> & x) const
  {
    return pointwise_conv(x, weight, bias, activation);
  }
  std::size_t in_channels() const {return weight.rows();}
  std::size_t out_channels() const {return weight.cols();}
};

}  // namespace jointseg
