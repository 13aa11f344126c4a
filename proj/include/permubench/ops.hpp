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

// Differentiable operations over TensorT. Every op registers its gradient
// rule on the active tape when an input requires grad. Shape errors throw
// DimensionError naming the offending shapes. Negative axes count from the
// back.

#include <cstdint>
#include <span>
#include <vector>

#include "permubench/tensor.hpp"

namespace permubench::ops {

constexpr double kLayerNormEps = 1e-5;

// Elementwise, identical shapes.
template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> scale(const TensorT<T>& x, T factor);

// x + y where y's shape equals a trailing suffix of x's shape (bias rows,
// positional tables, token broadcast).
template <typename T>
TensorT<T> broadcast_add(const TensorT<T>& x, const TensorT<T>& y);

template <typename T> TensorT<T> relu(const TensorT<T>& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T> TensorT<T> gelu(const TensorT<T>& x);
template <typename T> TensorT<T> sigmoid(const TensorT<T>& x);
template <typename T> TensorT<T> tanh(const TensorT<T>& x);

// Reductions to a scalar.
template <typename T> TensorT<T> sum(const TensorT<T>& x);
template <typename T> TensorT<T> mean(const TensorT<T>& x);
// Reductions that drop one axis.
template <typename T> TensorT<T> sum_axis(const TensorT<T>& x, int axis);
template <typename T> TensorT<T> mean_axis(const TensorT<T>& x, int axis);

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape);
// Swaps two axes (materialized copy).
template <typename T>
TensorT<T> transpose(const TensorT<T>& x, int axis_a, int axis_b);
template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis);
template <typename T>
TensorT<T> slice(const TensorT<T>& x, int axis, std::int64_t start,
                 std::int64_t length);
// Selects entries along `axis` in the given order (index_select).
template <typename T>
TensorT<T> gather(const TensorT<T>& x, int axis,
                  std::span<const std::int64_t> indices);

// [m x k] . [k x n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);
// [B x m x k] . [B x k x n]
template <typename T>
TensorT<T> batched_matmul(const TensorT<T>& a, const TensorT<T>& b);
// x[... x in] . weight[in x out] (+ bias[out]); bias may be undefined.
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& weight,
                  const TensorT<T>& bias);

// Max-subtracted softmax. NaN inputs propagate NaN through the row.
template <typename T>
TensorT<T> softmax(const TensorT<T>& x, int axis = -1);

// Normalizes the last axis then applies gamma/beta of that width.
template <typename T>
TensorT<T> layernorm(const TensorT<T>& x, const TensorT<T>& gamma,
                     const TensorT<T>& beta, double eps = kLayerNormEps);

// Mean over the batch of -log softmax(logits)[label]. Throws IndexError for
// labels outside [0, classes).
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, std::span<const int> labels);

}  // namespace permubench::ops
