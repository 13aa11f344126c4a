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

// MedMNIST-style datasets: loading, few-shot subsets and epoch batching.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "permubench/tensor.hpp"

namespace permubench {

enum class Task { kBinary, kMulticlass };

struct DatasetInfo {
  std::string_view name;  // "PneumoniaMNIST"
  std::string_view id;    // "pneumoniamnist", also the archive stem
  int num_classes;

  Task task() const { return num_classes == 2 ? Task::kBinary : Task::kMulticlass; }
};

// Canonical table order: Blood, Path, Breast, Pneumonia, Derma, OCT, OrganA.
std::span<const DatasetInfo> dataset_catalog();
// Accepts the display name or the lowercase id; throws ConfigError.
const DatasetInfo& find_dataset(std::string_view name);

constexpr int kImageSize = 28;
constexpr int kImageChannels = 3;
constexpr std::int64_t kPixelsPerImage = kImageSize * kImageSize * kImageChannels;

// Images in [0,1], row-major [count, 28, 28, 3].
struct ImageBatch {
  std::vector<float> pixels;
  std::vector<int> labels;
  std::vector<std::int64_t> ids;  // row index in the source split

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  bool empty() const { return labels.empty(); }

  std::span<const float> image(std::int64_t i) const {
    return std::span<const float>(pixels).subspan(i * kPixelsPerImage, kPixelsPerImage);
  }
  std::span<float> image(std::int64_t i) {
    return std::span<float>(pixels).subspan(i * kPixelsPerImage, kPixelsPerImage);
  }

  // Rows in the given order.
  ImageBatch select(std::span<const std::int64_t> rows) const;
  // Contiguous rows [start, start + count).
  ImageBatch range(std::int64_t start, std::int64_t count) const;
  Tensor to_tensor() const;

  // Throws DataError when sizes disagree, pixels leave [0,1] or labels leave
  // [0, num_classes).
  void validate(int num_classes) const;
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  ImageBatch train, val, test;

  Task task() const { return num_classes == 2 ? Task::kBinary : Task::kMulticlass; }
};

// What a training run may see; the test split is deliberately absent.
struct TrainingSplits {
  std::string name;
  int num_classes = 0;
  const ImageBatch* train = nullptr;
  const ImageBatch* val = nullptr;

  static TrainingSplits of(const Dataset& ds) {
    return {ds.name, ds.num_classes, &ds.train, &ds.val};
  }
};

// Reads <split>_images / <split>_labels for train, val and test. Images must
// be uint8 [n, 28, 28] or [n, 28, 28, 1|3]; grayscale is replicated to three
// channels and every value divided by 255. The dataset name and class count
// come from the catalog entry whose id equals the file stem; unknown stems
// fall back to the stem and max label + 1. Throws FormatError naming the
// offending array.
Dataset load_npz(const std::filesystem::path& path);
Dataset load_npz(const std::filesystem::path& path, const DatasetInfo& info);

// <dir>/<id>.npz
std::filesystem::path dataset_path(const std::filesystem::path& dir,
                                   const DatasetInfo& info);

// Per class (ascending), min(per_class, available) distinct training rows
// drawn without replacement from derive_seed(seed, name, "subset");
// concatenated in class order. Throws DataError when a class has no
// training rows.
ImageBatch fewshot_subset(const Dataset& ds, int per_class, std::uint64_t seed);
ImageBatch fewshot_subset(const ImageBatch& train, std::string_view name,
                          int num_classes, int per_class, std::uint64_t seed);

// Row order for one epoch: a full shuffle drawn from
// derive_seed(epoch_seed, epoch), split into batches of batch_size (the last
// may be short).
std::vector<std::vector<std::int64_t>> epoch_order(std::int64_t count, int batch_size,
                                                   std::uint64_t epoch_seed, int epoch);
std::vector<ImageBatch> batches(const ImageBatch& batch, int batch_size,
                                std::uint64_t epoch_seed, int epoch);

// Writes the MedMNIST archive layout: uint8 [n, 28, 28, 3] images
// (round(255 x)) and uint8 [n, 1] labels per split.
void save_npz(const std::filesystem::path& path, const Dataset& ds);

// Stand-in data in the MedMNIST layout for smoke runs when the real archives
// are unavailable. Class c has a per-class mean colour and stripe
// orientation under per-pixel Gaussian noise of `noise` sigma; labels cycle
// through the classes. Pixels are quantized to multiples of 1/255 so a
// save_npz/load_npz round trip is lossless.
struct SyntheticOptions {
  int train = 200;
  int val = 100;
  int test = 100;
  double noise = 0.25;
};
Dataset synthetic_dataset(const DatasetInfo& info, std::uint64_t seed,
                          const SyntheticOptions& options = {});
Dataset synthetic_dataset(std::string name, int num_classes, std::uint64_t seed,
                          const SyntheticOptions& options = {});

}  // namespace permubench
