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

// Common image corruptions at three severities. All parameters live in one
// SeverityTable so alternates can be configured; default_severity_table()
// holds the stock values.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "permubench/data.hpp"

namespace permubench {

enum class CorruptionKind {
  kGaussianNoise,
  kGaussianBlur,
  kBrightnessContrast,
  kJpeg,
  kCutout,
};

inline constexpr CorruptionKind kAllCorruptionKinds[] = {
    CorruptionKind::kGaussianNoise, CorruptionKind::kGaussianBlur,
    CorruptionKind::kBrightnessContrast, CorruptionKind::kJpeg,
    CorruptionKind::kCutout};

std::string_view corruption_id(CorruptionKind kind);  // "gaussian_noise", ...
CorruptionKind parse_corruption(std::string_view text);  // throws SpecError

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;  // 1..3
  std::uint64_t seed = 0;

  // "gaussian_noise:2"
  std::string setting() const;
  static CorruptionSpec parse_setting(std::string_view text, std::uint64_t seed = 0);

  bool operator==(const CorruptionSpec&) const = default;
};

struct SeverityTable {
  std::array<double, 3> noise_sigma = {0.04, 0.08, 0.16};
  std::array<double, 3> blur_sigma = {0.5, 1.0, 1.5};
  std::array<double, 3> contrast = {0.8, 0.6, 0.4};
  std::array<double, 3> brightness = {0.05, 0.10, 0.15};
  std::array<int, 3> jpeg_quality = {80, 50, 25};
  std::array<int, 3> cutout_side = {6, 10, 14};

  // Throws SpecError unless every degradation parameter strictly grows with
  // severity (noise sigma, blur sigma, |1 - contrast|, 100 - quality,
  // cutout side) and all values are in range.
  void validate() const;
};

const SeverityTable& default_severity_table();

// The 15 specs, kinds in declaration order, severities ascending.
std::vector<CorruptionSpec> corruption_grid(std::uint64_t seed = 0);

// Per-image randomness comes from derive_seed(spec.seed, kind id,
// "corruption") split by the image id, so corrupting a batch equals
// corrupting its images one at a time. Output pixels are clamped to [0,1];
// labels and ids are copied. Throws SpecError for severities outside 1..3.
ImageBatch apply(const CorruptionSpec& spec, const ImageBatch& batch,
                 const SeverityTable& table = default_severity_table());

namespace detail {

// Normalized 1-D Gaussian taps of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);
// Mirror index without repeating the edge sample (-1 -> 1, n -> n - 2).
int reflect_index(int i, int n);
// Annex K luminance (chroma=false) or chrominance table scaled by the IJG
// quality rule, natural (row-major) order.
std::array<int, 64> jpeg_quant_table(int quality, bool chroma);
// One 28x28x3 image through colour conversion, 4:2:0 subsampling, 8x8 DCT
// quantization at `quality`, and back; values in [0,1].
void jpeg_roundtrip(std::span<const float> image, std::span<float> out, int quality);

}  // namespace detail

}  // namespace permubench
