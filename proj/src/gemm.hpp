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

// Dense row-major products used by the differentiable ops.
//
// Every output element is accumulated over the inner dimension in index
// order, one multiply-add at a time, and vector lanes only ever run across
// output columns. A result therefore does not depend on buffer alignment,
// on the number of rows in the call, or on which other rows share it.

#include <cstdint>

namespace permubench::kernels {

// c[m x n] (+)= a[m x k] * b[k x n]
template <typename T>
void matmul(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b,
            T* c, bool accumulate);

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void matmul_tn_acc(std::int64_t m, std::int64_t k, std::int64_t n, const T* a,
                   const T* b, T* c);

// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* in, T* out);

}  // namespace permubench::kernels
