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

#include "permubench/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "permubench/error.hpp"

namespace permubench {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
TensorT<T>::TensorT(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  for (auto d : shape) {
    if (d <= 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_str(shape));
    }
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return TensorT(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
TensorT<T> TensorT<T>::scalar(T value) {
  return TensorT(Shape{}, std::vector<T>{value});
}

template <typename T>
std::int64_t TensorT<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T TensorT<T>::item() const {
  if (node_->data.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

template <typename T>
TensorT<T>& TensorT<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
  return *this;
}

template <typename T>
TensorT<T> TensorT<T>::detach() const {
  return TensorT(node_->shape, node_->data);
}

namespace {

// Shared by all tapes so a node zeroed by one pass is never mistaken for
// being zeroed in another.
std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T>::Tape() : previous_(active_slot<T>()) {
  active_slot<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  clear();
  active_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot<T>();
}

template <typename T>
Tape<T>* Tape<T>::recording(std::initializer_list<const TensorT<T>*> inputs) {
  Tape* tape = active_slot<T>();
  if (tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
void Tape<T>::record(const TensorT<T>& output,
                     std::vector<std::shared_ptr<Node>> inputs,
                     BackwardFn fn) {
  output.node()->requires_grad = true;
  output.node()->tape = this;
  entries_.push_back({output.node(), std::move(inputs), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const TensorT<T>& loss) {
  if (!loss.defined() || loss.node()->tape != this || entries_.empty()) {
    throw UsageError(
        "backward() called on a tensor that was not recorded on this tape");
  }
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  generation_ = next_generation();
  auto reset = [this](Node& node) {
    if (!node.requires_grad || node.grad_generation == generation_) return;
    node.grad_generation = generation_;
    node.grad.assign(node.data.size(), T(0));
  };
  for (auto& entry : entries_) {
    reset(*entry.output);
    for (auto& in : entry.inputs) reset(*in);
  }
  loss.node()->grad.assign(1, T(1));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->fn(it->output->grad);
  }
  clear();
}

template <typename T>
void Tape<T>::clear() {
  for (auto& entry : entries_) {
    if (entry.output->tape == this) entry.output->tape = nullptr;
  }
  entries_.clear();
}

template class TensorT<float>;
template class TensorT<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace permubench
