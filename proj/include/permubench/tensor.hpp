// Copyright (c) the permubench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// A TensorT is a shared handle onto a node holding shape, values and an
// optional gradient buffer. Operations (ops.hpp) executed while a Tape is
// active on the current thread, and with at least one input that requires
// grad, append a backward rule to that tape. Tape::backward() replays the
// rules in reverse recording order, which is a valid reverse topological
// order because an op can only consume tensors that already exist.
//
// TensorT<float> is used for training and evaluation; TensorT<double>
// exists for finite-difference gradient checks.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace permubench {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass populates it
  bool requires_grad = false;
  const Tape<T>* tape = nullptr;  // producing tape; null for leaves
  std::uint64_t grad_generation = 0;  // backward pass that last zeroed grad
};

}  // namespace detail

template <typename T>
class TensorT {
 public:
  using Node = detail::TensorNode<T>;

  TensorT() = default;
  TensorT(Shape shape, std::vector<T> data, bool requires_grad = false);

  static TensorT zeros(Shape shape);
  static TensorT full(Shape shape, T value);
  static TensorT scalar(T value);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(node_->data.size());
  }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  TensorT& set_requires_grad(bool value);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  // Deep copy with no gradient history.
  TensorT detach() const;

  // Same values converted to another scalar type; never requires grad.
  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return TensorT<U>(node_->shape, std::move(out));
  }

  bool same_storage(const TensorT& other) const {
    return node_ == other.node_;
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

template <typename T>
class Tape {
 public:
  using Node = detail::TensorNode<T>;
  // Receives the output gradient and accumulates into input gradients.
  using BackwardFn = std::function<void(std::span<const T> out_grad)>;

  // Becomes the active tape for this thread until destroyed.
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // Active tape if any input requires grad, otherwise null.
  static Tape* recording(std::initializer_list<const TensorT<T>*> inputs);

  void record(const TensorT<T>& output,
              std::vector<std::shared_ptr<Node>> inputs, BackwardFn fn);

  // Zeroes the gradients of every tensor on the tape, seeds d(loss)=1 and
  // propagates. The tape is empty afterwards, so a second call on the same
  // loss is a UsageError.
  void backward(const TensorT<T>& loss);

  std::size_t size() const { return entries_.size(); }
  void clear();

 private:
  struct Entry {
    std::shared_ptr<Node> output;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
  std::uint64_t generation_ = 0;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

extern template class TensorT<float>;
extern template class TensorT<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace permubench
