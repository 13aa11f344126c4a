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


#include "permubench/corruptions.hpp"

#include <algorithm>
#include <cmath>

#include "permubench/error.hpp"
#include "permubench/rng.hpp"

namespace permubench {

namespace {

constexpr std::string_view kIds[] = {"gaussian_noise", "gaussian_blur",
                                     "brightness_contrast", "jpeg", "cutout"};

template <typename T>
void require_increasing(const std::array<T, 3>& values, const char* what) {
  if (!(values[0] < values[1] && values[1] < values[2])) {
    throw SpecError(std::string("severity table: ") + what +
                    " must strictly increase with severity");
  }
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void add_noise(std::span<float> img, double sigma, Xoshiro256StarStar& rng) {
  for (float& v : img) v = clamp01(v + sigma * rng.normal());
}

void blur(std::span<float> img, double sigma) {
  const auto taps = detail::gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  constexpr int n = kImageSize, ch = kImageChannels;
  std::vector<double> rows(img.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int k = -radius; k <= radius; ++k) {
          s += taps[k + radius] * img[(y * n + detail::reflect_index(x + k, n)) * ch + c];
        }
        rows[(y * n + x) * ch + c] = s;
      }
    }
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int k = -radius; k <= radius; ++k) {
          s += taps[k + radius] * rows[(detail::reflect_index(y + k, n) * n + x) * ch + c];
        }
        img[(y * n + x) * ch + c] = clamp01(s);
      }
    }
  }
}

void cutout(std::span<float> img, int side, Xoshiro256StarStar& rng) {
  const int span = kImageSize - side + 1;
  const int top = static_cast<int>(rng.below(span));
  const int left = static_cast<int>(rng.below(span));
  for (int y = top; y < top + side; ++y) {
    for (int x = left; x < left + side; ++x) {
      for (int c = 0; c < kImageChannels; ++c) {
        img[(y * kImageSize + x) * kImageChannels + c] = 0.5f;
      }
    }
  }
}

}  // namespace

std::string_view corruption_id(CorruptionKind kind) {
  return kIds[static_cast<int>(kind)];
}

CorruptionKind parse_corruption(std::string_view text) {
  for (auto kind : kAllCorruptionKinds) {
    if (corruption_id(kind) == text) return kind;
  }
  throw SpecError("unknown corruption kind '" + std::string(text) + "'");
}

std::string CorruptionSpec::setting() const {
  return std::string(corruption_id(kind)) + ":" + std::to_string(severity);
}

CorruptionSpec CorruptionSpec::parse_setting(std::string_view text, std::uint64_t seed) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon + 2 != text.size() ||
      text[colon + 1] < '1' || text[colon + 1] > '3') {
    throw SpecError("malformed corruption setting '" + std::string(text) + "'");
  }
  return {parse_corruption(text.substr(0, colon)), text[colon + 1] - '0', seed};
}

void SeverityTable::validate() const {
  require_increasing(noise_sigma, "gaussian_noise sigma");
  require_increasing(blur_sigma, "gaussian_blur sigma");
  require_increasing(std::array<double, 3>{std::abs(1 - contrast[0]), std::abs(1 - contrast[1]),
                                           std::abs(1 - contrast[2])},
                     "|1 - contrast|");
  require_increasing(std::array<int, 3>{100 - jpeg_quality[0], 100 - jpeg_quality[1],
                                        100 - jpeg_quality[2]},
                     "100 - jpeg quality");
  require_increasing(cutout_side, "cutout side");
  for (int s = 0; s < 3; ++s) {
    if (noise_sigma[s] <= 0 || blur_sigma[s] <= 0 || contrast[s] < 0 ||
        jpeg_quality[s] < 1 || jpeg_quality[s] > 100 || cutout_side[s] < 1 ||
        cutout_side[s] > kImageSize) {
      throw SpecError("severity table value out of range at severity " +
                      std::to_string(s + 1));
    }
  }
}

const SeverityTable& default_severity_table() {
  static const SeverityTable table;
  return table;
}

std::vector<CorruptionSpec> corruption_grid(std::uint64_t seed) {
  std::vector<CorruptionSpec> grid;
  for (auto kind : kAllCorruptionKinds) {
    for (int severity = 1; severity <= 3; ++severity) grid.push_back({kind, severity, seed});
  }
  return grid;
}

ImageBatch apply(const CorruptionSpec& spec, const ImageBatch& batch,
                 const SeverityTable& table) {
  if (spec.severity < 1 || spec.severity > 3) {
    throw SpecError("corruption severity " + std::to_string(spec.severity) +
                    " outside 1..3");
  }
  table.validate();
  const int s = spec.severity - 1;
  const std::uint64_t stream = derive_seed(spec.seed, corruption_id(spec.kind), "corruption");
  ImageBatch out = batch;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    auto img = out.image(i);
    Xoshiro256StarStar rng(derive_seed(stream, static_cast<std::uint64_t>(out.ids[i])));
    switch (spec.kind) {
      case CorruptionKind::kGaussianNoise:
        add_noise(img, table.noise_sigma[s], rng);
        break;
      case CorruptionKind::kGaussianBlur:
        blur(img, table.blur_sigma[s]);
        break;
      case CorruptionKind::kBrightnessContrast: {
        const double c = table.contrast[s], b = table.brightness[s];
        for (float& v : img) v = clamp01((v - 0.5) * c + 0.5 + b);
        break;
      }
      case CorruptionKind::kJpeg: {
        const std::vector<float> source(img.begin(), img.end());
        detail::jpeg_roundtrip(source, img, table.jpeg_quality[s]);
        break;
      }
      case CorruptionKind::kCutout:
        cutout(img, table.cutout_side[s], rng);
        break;
    }
  }
  return out;
}

namespace detail {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw SpecError("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  if (radius >= kImageSize) throw SpecError("blur sigma too large for 28x28 images");
  std::vector<double> taps(2 * radius + 1);
  double total = 0;
  for (int k = -radius; k <= radius; ++k) {
    taps[k + radius] = std::exp(-(k * k) / (2 * sigma * sigma));
    total += taps[k + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace detail

}  // namespace permubench
