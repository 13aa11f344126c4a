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


// Baseline-JPEG quantization round trip without the entropy stage, which is
// lossless and therefore does not change the decoded pixels.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "permubench/corruptions.hpp"
#include "permubench/error.hpp"

namespace permubench::detail {

namespace {

// ITU-T T.81 Annex K tables K.1 and K.2, natural order.
constexpr std::array<int, 64> kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr std::array<int, 64> kChrominance = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  double c[8][8];  // c[u][x]
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
      for (int x = 0; x < 8; ++x) {
        c[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

std::uint8_t to_sample(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

// A w x h 8-bit plane, padded to multiples of 8 by edge replication,
// quantized blockwise and decoded back; the padding is dropped.
std::vector<std::uint8_t> quantize_plane(const std::vector<std::uint8_t>& plane, int w,
                                         int h, const std::array<int, 64>& q) {
  const int pw = (w + 7) / 8 * 8, ph = (h + 7) / 8 * 8;
  std::vector<double> padded(pw * ph);
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      padded[y * pw + x] = plane[std::min(y, h - 1) * w + std::min(x, w - 1)] - 128.0;
    }
  }
  const auto& c = basis().c;
  std::vector<std::uint8_t> out(w * h);
  double block[8][8], tmp[8][8], coef[8][8];
  for (int by = 0; by < ph; by += 8) {
    for (int bx = 0; bx < pw; bx += 8) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) block[y][x] = padded[(by + y) * pw + bx + x];
      }
      // coef = C . block . C^T
      for (int u = 0; u < 8; ++u) {
        for (int x = 0; x < 8; ++x) {
          double s = 0;
          for (int y = 0; y < 8; ++y) s += c[u][y] * block[y][x];
          tmp[u][x] = s;
        }
      }
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          double s = 0;
          for (int x = 0; x < 8; ++x) s += tmp[u][x] * c[v][x];
          const int step = q[u * 8 + v];
          coef[u][v] = std::round(s / step) * step;
        }
      }
      // block = C^T . coef . C
      for (int y = 0; y < 8; ++y) {
        for (int v = 0; v < 8; ++v) {
          double s = 0;
          for (int u = 0; u < 8; ++u) s += c[u][y] * coef[u][v];
          tmp[y][v] = s;
        }
      }
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          double s = 0;
          for (int v = 0; v < 8; ++v) s += tmp[y][v] * c[v][x];
          const int oy = by + y, ox = bx + x;
          if (oy < h && ox < w) out[oy * w + ox] = to_sample(s + 128.0);
        }
      }
    }
  }
  return out;
}

}  // namespace

std::array<int, 64> jpeg_quant_table(int quality, bool chroma) {
  if (quality < 1 || quality > 100) {
    throw SpecError("jpeg quality " + std::to_string(quality) + " outside [1, 100]");
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChrominance : kLuminance;
  std::array<int, 64> out;
  for (int i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

void jpeg_roundtrip(std::span<const float> image, std::span<float> out, int quality) {
  constexpr int n = kImageSize;
  std::vector<std::uint8_t> y(n * n);
  std::vector<double> cb(n * n), cr(n * n);
  for (int i = 0; i < n * n; ++i) {
    const double r = to_sample(image[i * 3] * 255.0);
    const double g = to_sample(image[i * 3 + 1] * 255.0);
    const double b = to_sample(image[i * 3 + 2] * 255.0);
    y[i] = to_sample(0.299 * r + 0.587 * g + 0.114 * b);
    cb[i] = std::clamp(std::round(-0.168736 * r - 0.331264 * g + 0.5 * b + 128.0), 0.0, 255.0);
    cr[i] = std::clamp(std::round(0.5 * r - 0.418688 * g - 0.081312 * b + 128.0), 0.0, 255.0);
  }
  // 4:2:0 over the image extended to whole 16x16 MCUs by edge replication:
  // each chroma sample is the rounded mean of a 2x2 block.
  constexpr int mcu_span = (n + 15) / 16 * 16, chroma_span = mcu_span / 2;
  std::vector<std::uint8_t> cb_small(chroma_span * chroma_span),
      cr_small(chroma_span * chroma_span);
  for (int sy = 0; sy < chroma_span; ++sy) {
    for (int sx = 0; sx < chroma_span; ++sx) {
      double sb = 0, sr = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int i = std::min(2 * sy + dy, n - 1) * n + std::min(2 * sx + dx, n - 1);
          sb += cb[i];
          sr += cr[i];
        }
      }
      cb_small[sy * chroma_span + sx] = to_sample(sb / 4);
      cr_small[sy * chroma_span + sx] = to_sample(sr / 4);
    }
  }
  const auto y_out = quantize_plane(y, n, n, jpeg_quant_table(quality, false));
  const auto chroma_table = jpeg_quant_table(quality, true);
  const auto cb_out = quantize_plane(cb_small, chroma_span, chroma_span, chroma_table);
  const auto cr_out = quantize_plane(cr_small, chroma_span, chroma_span, chroma_table);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const int i = row * n + col;
      const int s = (row / 2) * chroma_span + col / 2;
      const double yy = y_out[i], db = cb_out[s] - 128.0, dr = cr_out[s] - 128.0;
      out[i * 3] = to_sample(yy + 1.402 * dr) / 255.0f;
      out[i * 3 + 1] = to_sample(yy - 0.344136 * db - 0.714136 * dr) / 255.0f;
      out[i * 3 + 2] = to_sample(yy + 1.772 * db) / 255.0f;
    }
  }
}

}  // namespace permubench::detail
