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

#include "permubench/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gemm.hpp"
#include "permubench/error.hpp"

namespace permubench::ops {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

template <typename T>
T* grad_ptr(const NodePtr<T>& node) {
  return node->requires_grad ? node->grad.data() : nullptr;
}

int normalize_axis(int axis, const Shape& shape) {
  const int rank = static_cast<int>(shape.size());
  const int resolved = axis < 0 ? axis + rank : axis;
  if (resolved < 0 || resolved >= rank) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
  }
  return resolved;
}

std::int64_t product(const Shape& shape, std::size_t begin, std::size_t end) {
  std::int64_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= shape[i];
  return n;
}

template <typename T>
void require_same_shape(const char* op, const TensorT<T>& a,
                        const TensorT<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
  }
}

template <typename T>
TensorT<T> uninitialized(const Shape& shape) {
  return TensorT<T>(shape,
                    std::vector<T>(static_cast<std::size_t>(shape_numel(shape))));
}

// Elementwise map with derivative expressed through input and output.
template <typename T, typename Forward, typename Derivative>
TensorT<T> unary(const TensorT<T>& x, Forward f, Derivative dfdx) {
  TensorT<T> out = uninitialized<T>(x.shape());
  auto xs = x.data();
  auto ys = out.mutable_data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    NodePtr<T> yn = out.node();
    tape->record(out, {xn}, [xn, yn, dfdx](std::span<const T> g) {
      T* gx = grad_ptr(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * dfdx(xn->data[i], yn->data[i]);
      }
    });
  }
  return out;
}

// dst[o, j, m, i, n] = src[o, i, m, j, n] for axes a < b.
template <typename T>
void swap_axes_copy(const T* src, T* dst, const Shape& shape, int a, int b) {
  const std::int64_t outer = product(shape, 0, a);
  const std::int64_t len_a = shape[a];
  const std::int64_t mid = product(shape, a + 1, b);
  const std::int64_t len_b = shape[b];
  const std::int64_t inner = product(shape, b + 1, shape.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t j = 0; j < len_b; ++j) {
      for (std::int64_t m = 0; m < mid; ++m) {
        for (std::int64_t i = 0; i < len_a; ++i) {
          const T* s = src + ((((o * len_a + i) * mid + m) * len_b + j) * inner);
          T* d = dst + ((((o * len_b + j) * mid + m) * len_a + i) * inner);
          std::copy(s, s + inner, d);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape("add", a, b);
  TensorT<T> out = uninitialized<T>(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] + b.data()[i];
  if (auto* tape = Tape<T>::recording({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node();
    tape->record(out, {an, bn}, [an, bn](std::span<const T> g) {
      for (T* gx : {grad_ptr(an), grad_ptr(bn)}) {
        if (!gx) continue;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape("sub", a, b);
  TensorT<T> out = uninitialized<T>(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] - b.data()[i];
  if (auto* tape = Tape<T>::recording({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node();
    tape->record(out, {an, bn}, [an, bn](std::span<const T> g) {
      if (T* ga = grad_ptr(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (T* gb = grad_ptr(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape("mul", a, b);
  TensorT<T> out = uninitialized<T>(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * b.data()[i];
  if (auto* tape = Tape<T>::recording({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node();
    tape->record(out, {an, bn}, [an, bn](std::span<const T> g) {
      if (T* ga = grad_ptr(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
      }
      if (T* gb = grad_ptr(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
TensorT<T> broadcast_add(const TensorT<T>& x, const TensorT<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() ||
      !std::equal(ys.begin(), ys.end(), xs.end() - ys.size())) {
    throw DimensionError("broadcast_add: " + shape_str(ys) +
                         " is not a trailing suffix of " + shape_str(xs));
  }
  const std::int64_t inner = y.numel();
  const std::int64_t outer = x.numel() / inner;
  TensorT<T> out = uninitialized<T>(xs);
  auto o = out.mutable_data();
  for (std::int64_t r = 0; r < outer; ++r) {
    for (std::int64_t i = 0; i < inner; ++i) {
      o[r * inner + i] = x.data()[r * inner + i] + y.data()[i];
    }
  }
  if (auto* tape = Tape<T>::recording({&x, &y})) {
    NodePtr<T> xn = x.node(), yn = y.node();
    tape->record(out, {xn, yn}, [xn, yn, outer, inner](std::span<const T> g) {
      if (T* gx = grad_ptr(xn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (T* gy = grad_ptr(yn)) {
        for (std::int64_t r = 0; r < outer; ++r) {
          for (std::int64_t i = 0; i < inner; ++i) gy[i] += g[r * inner + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  TensorT<T> out = uninitialized<T>(x.shape());
  auto xs = x.data();
  auto ys = out.mutable_data();
  const bool recording = Tape<T>::recording({&x}) != nullptr;
  std::vector<T> t(recording ? xs.size() : 0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const T v = xs[i];
    const T th = std::tanh(kC * (v + kA * v * v * v));
    ys[i] = T(0.5) * v * (T(1) + th);
    if (recording) t[i] = th;
  }
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    tape->record(out, {xn}, [xn, t = std::move(t)](std::span<const T> g) {
      T* gx = grad_ptr(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = xn->data[i];
        const T th = t[i];
        gx[i] += g[i] * (T(0.5) * (T(1) + th) +
                         T(0.5) * v * (T(1) - th * th) * kC *
                             (T(1) + T(3) * kA * v * v));
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  TensorT<T> out = TensorT<T>::scalar(total);
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    tape->record(out, {xn}, [xn](std::span<const T> g) {
      if (T* gx = grad_ptr(xn)) {
        for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g[0];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
TensorT<T> sum_axis(const TensorT<T>& x, int axis) {
  const Shape& shape = x.shape();
  const int ax = normalize_axis(axis, shape);
  const std::int64_t outer = product(shape, 0, ax);
  const std::int64_t len = shape[ax];
  const std::int64_t inner = product(shape, ax + 1, shape.size());
  Shape out_shape = shape;
  out_shape.erase(out_shape.begin() + ax);
  TensorT<T> out = TensorT<T>::zeros(out_shape);
  auto o = out.mutable_data();
  auto xs = x.data();
  for (std::int64_t a = 0; a < outer; ++a) {
    for (std::int64_t k = 0; k < len; ++k) {
      for (std::int64_t i = 0; i < inner; ++i) {
        o[a * inner + i] += xs[(a * len + k) * inner + i];
      }
    }
  }
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    tape->record(out, {xn}, [xn, outer, len, inner](std::span<const T> g) {
      T* gx = grad_ptr(xn);
      if (!gx) return;
      for (std::int64_t a = 0; a < outer; ++a) {
        for (std::int64_t k = 0; k < len; ++k) {
          for (std::int64_t i = 0; i < inner; ++i) {
            gx[(a * len + k) * inner + i] += g[a * inner + i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean_axis(const TensorT<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.shape());
  return scale(sum_axis(x, ax), T(1) / static_cast<T>(x.shape()[ax]));
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  TensorT<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    tape->record(out, {xn}, [xn](std::span<const T> g) {
      if (T* gx = grad_ptr(xn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& x, int axis_a, int axis_b) {
  int a = normalize_axis(axis_a, x.shape());
  int b = normalize_axis(axis_b, x.shape());
  if (a == b) return reshape(x, x.shape());
  if (a > b) std::swap(a, b);
  Shape out_shape = x.shape();
  std::swap(out_shape[a], out_shape[b]);
  TensorT<T> out = uninitialized<T>(out_shape);
  swap_axes_copy(x.data().data(), out.mutable_data().data(), x.shape(), a, b);
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    tape->record(out, {xn}, [xn, out_shape, a, b](std::span<const T> g) {
      T* gx = grad_ptr(xn);
      if (!gx) return;
      std::vector<T> back(g.size());
      swap_axes_copy(g.data(), back.data(), out_shape, a, b);
      for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const int ax = normalize_axis(axis, first);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (static_cast<int>(d) != ax && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " +
                           shape_str(first) + " along axis " +
                           std::to_string(ax));
    }
    total += s[ax];
  }
  Shape out_shape = first;
  out_shape[ax] = total;
  const std::int64_t outer = product(first, 0, ax);
  const std::int64_t inner = product(first, ax + 1, first.size());
  TensorT<T> out = uninitialized<T>(out_shape);
  auto o = out.mutable_data();
  std::int64_t offset = 0;
  std::vector<std::int64_t> lengths;
  for (const auto& p : parts) {
    const std::int64_t len = p.shape()[ax];
    for (std::int64_t a = 0; a < outer; ++a) {
      std::copy_n(p.data().begin() + a * len * inner, len * inner,
                  o.begin() + (a * total + offset) * inner);
    }
    offset += len;
    lengths.push_back(len);
  }
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (auto* t = Tape<T>::recording({&p})) tape = t;
  }
  if (tape) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(out, nodes,
                 [nodes, lengths, outer, inner, total](std::span<const T> g) {
                   std::int64_t off = 0;
                   for (std::size_t p = 0; p < nodes.size(); ++p) {
                     const std::int64_t len = lengths[p];
                     if (T* gp = grad_ptr(nodes[p])) {
                       for (std::int64_t a = 0; a < outer; ++a) {
                         for (std::int64_t i = 0; i < len * inner; ++i) {
                           gp[a * len * inner + i] +=
                               g[(a * total + off) * inner + i];
                         }
                       }
                     }
                     off += len;
                   }
                 });
  }
  return out;
}

template <typename T>
TensorT<T> slice(const TensorT<T>& x, int axis, std::int64_t start,
                 std::int64_t length) {
  const Shape& shape = x.shape();
  const int ax = normalize_axis(axis, shape);
  if (start < 0 || length <= 0 || start + length > shape[ax]) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for " +
                         shape_str(shape) + " axis " + std::to_string(ax));
  }
  const std::int64_t outer = product(shape, 0, ax);
  const std::int64_t len = shape[ax];
  const std::int64_t inner = product(shape, ax + 1, shape.size());
  Shape out_shape = shape;
  out_shape[ax] = length;
  TensorT<T> out = uninitialized<T>(out_shape);
  auto o = out.mutable_data();
  for (std::int64_t a = 0; a < outer; ++a) {
    std::copy_n(x.data().begin() + (a * len + start) * inner, length * inner,
                o.begin() + a * length * inner);
  }
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    tape->record(out, {xn},
                 [xn, outer, len, inner, start, length](std::span<const T> g) {
                   T* gx = grad_ptr(xn);
                   if (!gx) return;
                   for (std::int64_t a = 0; a < outer; ++a) {
                     for (std::int64_t i = 0; i < length * inner; ++i) {
                       gx[(a * len + start) * inner + i] +=
                           g[a * length * inner + i];
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
TensorT<T> gather(const TensorT<T>& x, int axis,
                  std::span<const std::int64_t> indices) {
  const Shape& shape = x.shape();
  const int ax = normalize_axis(axis, shape);
  const std::int64_t outer = product(shape, 0, ax);
  const std::int64_t len = shape[ax];
  const std::int64_t inner = product(shape, ax + 1, shape.size());
  if (indices.empty()) throw DimensionError("gather: empty index list");
  for (auto idx : indices) {
    if (idx < 0 || idx >= len) {
      throw IndexError("gather: index " + std::to_string(idx) +
                       " out of range for axis of length " +
                       std::to_string(len));
    }
  }
  const auto count = static_cast<std::int64_t>(indices.size());
  Shape out_shape = shape;
  out_shape[ax] = count;
  TensorT<T> out = uninitialized<T>(out_shape);
  auto o = out.mutable_data();
  for (std::int64_t a = 0; a < outer; ++a) {
    for (std::int64_t k = 0; k < count; ++k) {
      std::copy_n(x.data().begin() + (a * len + indices[k]) * inner, inner,
                  o.begin() + (a * count + k) * inner);
    }
  }
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node();
    std::vector<std::int64_t> idx(indices.begin(), indices.end());
    tape->record(out, {xn}, [xn, idx, outer, len, inner](std::span<const T> g) {
      T* gx = grad_ptr(xn);
      if (!gx) return;
      const auto count = static_cast<std::int64_t>(idx.size());
      for (std::int64_t a = 0; a < outer; ++a) {
        for (std::int64_t k = 0; k < count; ++k) {
          for (std::int64_t i = 0; i < inner; ++i) {
            gx[(a * len + idx[k]) * inner + i] += g[(a * count + k) * inner + i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  }
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  TensorT<T> out = uninitialized<T>({m, n});
  kernels::matmul(m, k, n, a.data().data(), b.data().data(),
                  out.mutable_data().data(), false);
  if (auto* tape = Tape<T>::recording({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node();
    tape->record(out, {an, bn}, [an, bn, m, k, n](std::span<const T> g) {
      if (T* ga = grad_ptr(an)) {
        std::vector<T> bt(static_cast<std::size_t>(n * k));
        kernels::transpose(k, n, bn->data.data(), bt.data());
        kernels::matmul(m, n, k, g.data(), bt.data(), ga, true);
      }
      if (T* gb = grad_ptr(bn)) {
        kernels::matmul_tn_acc(m, k, n, an->data.data(), g.data(), gb);
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> batched_matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != b.shape()[1]) {
    throw DimensionError("batched_matmul: cannot multiply " +
                         shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::int64_t batch = a.shape()[0];
  const std::int64_t m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  TensorT<T> out = uninitialized<T>({batch, m, n});
  for (std::int64_t i = 0; i < batch; ++i) {
    kernels::matmul(m, k, n, a.data().data() + i * m * k, b.data().data() + i * k * n,
                    out.mutable_data().data() + i * m * n, false);
  }
  if (auto* tape = Tape<T>::recording({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node();
    tape->record(out, {an, bn}, [an, bn, batch, m, k, n](std::span<const T> g) {
      T* ga = grad_ptr(an);
      T* gb = grad_ptr(bn);
      std::vector<T> bt(ga ? static_cast<std::size_t>(n * k) : 0);
      for (std::int64_t i = 0; i < batch; ++i) {
        const T* gi = g.data() + i * m * n;
        if (ga) {
          kernels::transpose(k, n, bn->data.data() + i * k * n, bt.data());
          kernels::matmul(m, n, k, gi, bt.data(), ga + i * m * k, true);
        }
        if (gb) {
          kernels::matmul_tn_acc(m, k, n, an->data.data() + i * m * k, gi,
                                 gb + i * k * n);
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& weight,
                  const TensorT<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.shape()[0]) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::int64_t in = weight.shape()[0], outw = weight.shape()[1];
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != outw)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outw;
  TensorT<T> out = uninitialized<T>(out_shape);
  T* o = out.mutable_data().data();
  kernels::matmul(rows, in, outw, x.data().data(), weight.data().data(), o, false);
  if (bias.defined()) {
    const T* bv = bias.data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t j = 0; j < outw; ++j) o[r * outw + j] += bv[j];
    }
  }
  const bool has_bias = bias.defined();
  Tape<T>* tape = has_bias ? Tape<T>::recording({&x, &weight, &bias})
                           : Tape<T>::recording({&x, &weight});
  if (tape) {
    NodePtr<T> xn = x.node(), wn = weight.node();
    NodePtr<T> bn = has_bias ? bias.node() : nullptr;
    std::vector<NodePtr<T>> inputs{xn, wn};
    if (bn) inputs.push_back(bn);
    tape->record(out, inputs, [xn, wn, bn, rows, in, outw](std::span<const T> g) {
      if (T* gx = grad_ptr(xn)) {
        std::vector<T> wt(static_cast<std::size_t>(outw * in));
        kernels::transpose(in, outw, wn->data.data(), wt.data());
        kernels::matmul(rows, outw, in, g.data(), wt.data(), gx, true);
      }
      if (T* gw = grad_ptr(wn)) {
        kernels::matmul_tn_acc(rows, in, outw, xn->data.data(), g.data(), gw);
      }
      if (bn) {
        if (T* gb = grad_ptr(bn)) {
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t j = 0; j < outw; ++j) gb[j] += g[r * outw + j];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& x, int axis) {
  const Shape& shape = x.shape();
  const int ax = normalize_axis(axis, shape);
  const std::int64_t outer = product(shape, 0, ax);
  const std::int64_t len = shape[ax];
  const std::int64_t inner = product(shape, ax + 1, shape.size());
  TensorT<T> out = uninitialized<T>(shape);
  auto xs = x.data();
  auto ys = out.mutable_data();
  for (std::int64_t a = 0; a < outer; ++a) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = a * len * inner + i;
      T peak = xs[base];
      for (std::int64_t k = 1; k < len; ++k) {
        peak = std::max(peak, xs[base + k * inner]);
      }
      if (std::isnan(peak)) peak = T(0);  // NaN then propagates via exp
      T total = T(0);
      for (std::int64_t k = 0; k < len; ++k) {
        const T e = std::exp(xs[base + k * inner] - peak);
        ys[base + k * inner] = e;
        total += e;
      }
      for (std::int64_t k = 0; k < len; ++k) ys[base + k * inner] /= total;
    }
  }
  if (auto* tape = Tape<T>::recording({&x})) {
    NodePtr<T> xn = x.node(), yn = out.node();
    tape->record(out, {xn}, [xn, yn, outer, len, inner](std::span<const T> g) {
      T* gx = grad_ptr(xn);
      if (!gx) return;
      const auto& y = yn->data;
      for (std::int64_t a = 0; a < outer; ++a) {
        for (std::int64_t i = 0; i < inner; ++i) {
          const std::int64_t base = a * len * inner + i;
          T dot = T(0);
          for (std::int64_t k = 0; k < len; ++k) {
            dot += g[base + k * inner] * y[base + k * inner];
          }
          for (std::int64_t k = 0; k < len; ++k) {
            const std::int64_t at = base + k * inner;
            gx[at] += y[at] * (g[at] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> layernorm(const TensorT<T>& x, const TensorT<T>& gamma,
                     const TensorT<T>& beta, double eps) {
  const std::int64_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layernorm: gamma " + shape_str(gamma.shape()) +
                         " / beta " + shape_str(beta.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  const std::int64_t rows = x.numel() / d;
  TensorT<T> out = uninitialized<T>(x.shape());
  std::vector<T> normalized(static_cast<std::size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  auto xs = x.data();
  auto ys = out.mutable_data();
  auto gs = gamma.data();
  auto bs = beta.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xs.data() + r * d;
    T mu = T(0);
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[r] = rstd;
    for (std::int64_t j = 0; j < d; ++j) {
      const T n = (row[j] - mu) * rstd;
      normalized[r * d + j] = n;
      ys[r * d + j] = n * gs[j] + bs[j];
    }
  }
  if (auto* tape = Tape<T>::recording({&x, &gamma, &beta})) {
    NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node();
    tape->record(out, {xn, gn, bn},
                 [xn, gn, bn, rows, d, normalized = std::move(normalized),
                  inv_std = std::move(inv_std)](std::span<const T> g) {
                   T* gx = grad_ptr(xn);
                   T* gg = grad_ptr(gn);
                   T* gb = grad_ptr(bn);
                   const auto& gamma_v = gn->data;
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const T* gr = g.data() + r * d;
                     const T* nr = normalized.data() + r * d;
                     T mean_dn = T(0), mean_dn_n = T(0);
                     for (std::int64_t j = 0; j < d; ++j) {
                       const T dn = gr[j] * gamma_v[j];
                       mean_dn += dn;
                       mean_dn_n += dn * nr[j];
                       if (gg) gg[j] += gr[j] * nr[j];
                       if (gb) gb[j] += gr[j];
                     }
                     if (!gx) continue;
                     mean_dn /= static_cast<T>(d);
                     mean_dn_n /= static_cast<T>(d);
                     for (std::int64_t j = 0; j < d; ++j) {
                       const T dn = gr[j] * gamma_v[j];
                       gx[r * d + j] +=
                           inv_std[r] * (dn - mean_dn - nr[j] * mean_dn_n);
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits,
                         std::span<const int> labels) {
  if (logits.rank() != 2 ||
      logits.shape()[0] != static_cast<std::int64_t>(labels.size())) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::int64_t batch = logits.shape()[0];
  const std::int64_t classes = logits.shape()[1];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) +
                       " at position " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<T> probs(static_cast<std::size_t>(logits.numel()));
  T total = T(0);
  auto xs = logits.data();
  for (std::int64_t r = 0; r < batch; ++r) {
    const T* row = xs.data() + r * classes;
    const T peak = *std::max_element(row, row + classes);
    T denom = T(0);
    for (std::int64_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - peak);
      denom += probs[r * classes + c];
    }
    for (std::int64_t c = 0; c < classes; ++c) probs[r * classes + c] /= denom;
    total += -(row[labels[r]] - peak - std::log(denom));
  }
  TensorT<T> out = TensorT<T>::scalar(total / static_cast<T>(batch));
  if (auto* tape = Tape<T>::recording({&logits})) {
    NodePtr<T> xn = logits.node();
    std::vector<int> label_copy(labels.begin(), labels.end());
    tape->record(out, {xn},
                 [xn, batch, classes, probs = std::move(probs),
                  label_copy = std::move(label_copy)](std::span<const T> g) {
                   T* gx = grad_ptr(xn);
                   if (!gx) return;
                   const T factor = g[0] / static_cast<T>(batch);
                   for (std::int64_t r = 0; r < batch; ++r) {
                     for (std::int64_t c = 0; c < classes; ++c) {
                       const T onehot = c == label_copy[r] ? T(1) : T(0);
                       gx[r * classes + c] +=
                           factor * (probs[r * classes + c] - onehot);
                     }
                   }
                 });
  }
  return out;
}

#define PERMUBENCH_INSTANTIATE_OPS(T)                                          \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);               \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);               \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);               \
  template TensorT<T> scale(const TensorT<T>&, T);                             \
  template TensorT<T> broadcast_add(const TensorT<T>&, const TensorT<T>&);     \
  template TensorT<T> relu(const TensorT<T>&);                                 \
  template TensorT<T> gelu(const TensorT<T>&);                                 \
  template TensorT<T> sigmoid(const TensorT<T>&);                              \
  template TensorT<T> tanh(const TensorT<T>&);                                 \
  template TensorT<T> sum(const TensorT<T>&);                                  \
  template TensorT<T> mean(const TensorT<T>&);                                 \
  template TensorT<T> sum_axis(const TensorT<T>&, int);                        \
  template TensorT<T> mean_axis(const TensorT<T>&, int);                       \
  template TensorT<T> reshape(const TensorT<T>&, Shape);                       \
  template TensorT<T> transpose(const TensorT<T>&, int, int);                  \
  template TensorT<T> concat(const std::vector<TensorT<T>>&, int);             \
  template TensorT<T> slice(const TensorT<T>&, int, std::int64_t,              \
                            std::int64_t);                                     \
  template TensorT<T> gather(const TensorT<T>&, int,                           \
                             std::span<const std::int64_t>);                   \
  template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);            \
  template TensorT<T> batched_matmul(const TensorT<T>&, const TensorT<T>&);    \
  template TensorT<T> linear(const TensorT<T>&, const TensorT<T>&,             \
                             const TensorT<T>&);                               \
  template TensorT<T> softmax(const TensorT<T>&, int);                         \
  template TensorT<T> layernorm(const TensorT<T>&, const TensorT<T>&,          \
                                const TensorT<T>&, double);                    \
  template TensorT<T> cross_entropy(const TensorT<T>&, std::span<const int>);

PERMUBENCH_INSTANTIATE_OPS(float)
PERMUBENCH_INSTANTIATE_OPS(double)

#undef PERMUBENCH_INSTANTIATE_OPS

}  // namespace permubench::ops
