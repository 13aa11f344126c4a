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


#include "gemm.hpp"

#include <algorithm>
#include <cmath>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace permubench::kernels {

namespace {

// lhs(r, p) = a[r * a_row + p * a_col]; rhs(p, j) = b[p * n + j].
struct Lhs {
  std::int64_t row, col;
};

#if defined(__AVX2__) && defined(__FMA__)

// Every element is built as acc = fma(lhs, rhs, acc) for p ascending, both
// in the vector tiles and in the scalar edges, so tiling never changes a
// result.

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using R = __m256;
  static constexpr int kWidth = 8;
  static R load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, R v) { _mm256_storeu_ps(p, v); }
  static R zero() { return _mm256_setzero_ps(); }
  static R splat(float v) { return _mm256_set1_ps(v); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_ps(a, b, c); }
};

template <>
struct Vec<double> {
  using R = __m256d;
  static constexpr int kWidth = 4;
  static R load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, R v) { _mm256_storeu_pd(p, v); }
  static R zero() { return _mm256_setzero_pd(); }
  static R splat(double v) { return _mm256_set1_pd(v); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_pd(a, b, c); }
};

// MR rows x two vectors of columns.
template <typename T, int MR>
inline void tile(std::int64_t depth, const T* a, Lhs lhs, const T* b, std::int64_t n,
                 T* c, bool accumulate) {
  using V = Vec<T>;
  constexpr int W = V::kWidth;
  typename V::R acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = accumulate ? V::load(c + r * n) : V::zero();
    acc[r][1] = accumulate ? V::load(c + r * n + W) : V::zero();
  }
  for (std::int64_t p = 0; p < depth; ++p) {
    const auto b0 = V::load(b + p * n);
    const auto b1 = V::load(b + p * n + W);
    for (int r = 0; r < MR; ++r) {
      const auto s = V::splat(a[r * lhs.row + p * lhs.col]);
      acc[r][0] = V::fma(s, b0, acc[r][0]);
      acc[r][1] = V::fma(s, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    V::store(c + r * n, acc[r][0]);
    V::store(c + r * n + W, acc[r][1]);
  }
}

template <typename T>
void product(std::int64_t rows, std::int64_t depth, std::int64_t n, const T* a, Lhs lhs,
             const T* b, T* c, bool accumulate) {
  constexpr std::int64_t kCols = 2 * Vec<T>::kWidth;
  const std::int64_t full_cols = n - n % kCols;
  std::int64_t i = 0;
  for (; i + 4 <= rows; i += 4) {
    for (std::int64_t j = 0; j < full_cols; j += kCols) {
      tile<T, 4>(depth, a + i * lhs.row, lhs, b + j, n, c + i * n + j, accumulate);
    }
  }
  for (; i < rows; ++i) {
    for (std::int64_t j = 0; j < full_cols; j += kCols) {
      tile<T, 1>(depth, a + i * lhs.row, lhs, b + j, n, c + i * n + j, accumulate);
    }
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = full_cols; j < n; ++j) {
      T acc = accumulate ? c[r * n + j] : T(0);
      for (std::int64_t p = 0; p < depth; ++p) {
        acc = std::fma(a[r * lhs.row + p * lhs.col], b[p * n + j], acc);
      }
      c[r * n + j] = acc;
    }
  }
}

#else

template <typename T>
void product(std::int64_t rows, std::int64_t depth, std::int64_t n, const T* a, Lhs lhs,
             const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + rows * n, T(0));
  for (std::int64_t r = 0; r < rows; ++r) {
    T* c_row = c + r * n;
    for (std::int64_t p = 0; p < depth; ++p) {
      const T s = a[r * lhs.row + p * lhs.col];
      const T* b_row = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) c_row[j] += s * b_row[j];
    }
  }
}

#endif

}  // namespace

template <typename T>
void matmul(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b,
            T* c, bool accumulate) {
  product(m, k, n, a, Lhs{k, 1}, b, c, accumulate);
}

template <typename T>
void matmul_tn_acc(std::int64_t m, std::int64_t k, std::int64_t n, const T* a,
                   const T* b, T* c) {
  product(k, m, n, a, Lhs{1, k}, b, c, true);
}

template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* in, T* out) {
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

template void matmul<float>(std::int64_t, std::int64_t, std::int64_t, const float*,
                            const float*, float*, bool);
template void matmul<double>(std::int64_t, std::int64_t, std::int64_t, const double*,
                             const double*, double*, bool);
template void matmul_tn_acc<float>(std::int64_t, std::int64_t, std::int64_t,
                                   const float*, const float*, float*);
template void matmul_tn_acc<double>(std::int64_t, std::int64_t, std::int64_t,
                                    const double*, const double*, double*);
template void transpose<float>(std::int64_t, std::int64_t, const float*, float*);
template void transpose<double>(std::int64_t, std::int64_t, const double*, double*);

}  // namespace permubench::kernels
