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

// Test-only helpers: a central finite-difference gradient oracle that is
// independent of the tape, and small random fillers.

#include <cmath>
#include <functional>
#include <vector>

#include "permubench/ops.hpp"
#include "permubench/rng.hpp"
#include "permubench/tensor.hpp"

namespace permubench::testing {

template <typename T>
TensorT<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                         double hi = 1.0) {
  Xoshiro256StarStar rng(seed);
  std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return TensorT<T>(std::move(shape), std::move(values));
}

// ||a - b||_2 / max(||a||_2, ||b||_2); zero when both vanish.
inline double relative_error(const std::vector<double>& a,
                             const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

using ScalarFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

struct GradCheck {
  double worst_relative_error = 0;
  std::vector<std::vector<double>> analytic;
  std::vector<std::vector<double>> numeric;
};

// Compares tape gradients of f at `inputs` against central differences with
// step h. Inputs are cloned; the caller's tensors are untouched.
inline GradCheck check_gradients(const ScalarFn& f,
                                 const std::vector<Tensor64>& inputs,
                                 double h = 1e-5) {
  GradCheck result;
  std::vector<Tensor64> leaves;
  for (const auto& t : inputs) {
    leaves.push_back(t.detach());
    leaves.back().set_requires_grad(true);
  }
  {
    Tape<double> tape;
    Tensor64 loss = f(leaves);
    tape.backward(loss);
  }
  for (auto& leaf : leaves) {
    result.analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<Tensor64> probe;
    for (const auto& t : inputs) probe.push_back(t.detach());
    std::vector<double> numeric(static_cast<std::size_t>(inputs[i].numel()));
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      auto values = probe[i].mutable_data();
      const double saved = values[j];
      values[j] = saved + h;
      const double plus = f(probe).item();
      values[j] = saved - h;
      const double minus = f(probe).item();
      values[j] = saved;
      numeric[j] = (plus - minus) / (2 * h);
    }
    result.worst_relative_error = std::max(
        result.worst_relative_error, relative_error(result.analytic[i], numeric));
    result.numeric.push_back(std::move(numeric));
  }
  return result;
}

// Collapses any tensor to a scalar through a fixed random projection so that
// every output element contributes to the checked gradient.
inline Tensor64 project(const Tensor64& y, std::uint64_t seed = 99) {
  return ops::sum(ops::mul(y, random_tensor<double>(y.shape(), seed)));
}

}  // namespace permubench::testing
