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


#include "permubench/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "permubench/error.hpp"
#include "permubench/npz.hpp"
#include "permubench/rng.hpp"

namespace permubench {

namespace {

constexpr DatasetInfo kCatalog[] = {
    {"BloodMNIST", "bloodmnist", 8},       {"PathMNIST", "pathmnist", 9},
    {"BreastMNIST", "breastmnist", 2},     {"PneumoniaMNIST", "pneumoniamnist", 2},
    {"DermaMNIST", "dermamnist", 7},       {"OCTMNIST", "octmnist", 4},
    {"OrganAMNIST", "organamnist", 11},
};

const NpyArray& member(const std::map<std::string, NpyArray>& arrays,
                       const std::string& key, const std::string& where) {
  auto it = arrays.find(key);
  if (it == arrays.end()) throw FormatError(where + ": missing array " + key);
  return it->second;
}

ImageBatch decode_split(const std::map<std::string, NpyArray>& arrays,
                        const std::string& split, const std::string& where) {
  const std::string image_key = split + "_images";
  const std::string label_key = split + "_labels";
  const NpyArray& images = member(arrays, image_key, where);
  const NpyArray& labels = member(arrays, label_key, where);
  if (images.descr != "|u1") {
    throw FormatError(where + ": " + image_key + " has dtype " + images.descr +
                      ", expected uint8");
  }
  const auto& s = images.shape;
  const bool gray = s.size() == 3 || (s.size() == 4 && s[3] == 1);
  const bool rgb = s.size() == 4 && s[3] == 3;
  if (!(gray || rgb) || s[1] != kImageSize || s[2] != kImageSize) {
    std::string shape;
    for (auto d : s) shape += (shape.empty() ? "" : "x") + std::to_string(d);
    throw FormatError(where + ": " + image_key + " has shape " + shape +
                      ", expected n x 28 x 28 [x 1|3]");
  }
  const std::int64_t n = s[0];
  std::vector<std::int64_t> raw_labels;
  try {
    raw_labels = labels.as_int64();
  } catch (const FormatError& e) {
    throw FormatError(where + ": " + label_key + ": " + e.what());
  }
  if (static_cast<std::int64_t>(raw_labels.size()) != n) {
    throw FormatError(where + ": " + label_key + " has " +
                      std::to_string(raw_labels.size()) + " entries for " +
                      std::to_string(n) + " images");
  }

  ImageBatch batch;
  batch.pixels.resize(n * kPixelsPerImage);
  const int src_channels = gray ? 1 : 3;
  const std::int64_t pixels = kImageSize * kImageSize;
  for (std::int64_t i = 0; i < n * pixels; ++i) {
    for (int c = 0; c < kImageChannels; ++c) {
      const std::uint8_t v = images.bytes[i * src_channels + (gray ? 0 : c)];
      batch.pixels[i * kImageChannels + c] = static_cast<float>(v) / 255.0f;
    }
  }
  batch.labels.resize(n);
  batch.ids.resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    if (raw_labels[i] < 0 || raw_labels[i] > std::numeric_limits<int>::max()) {
      throw FormatError(where + ": " + label_key + " contains label " +
                        std::to_string(raw_labels[i]));
    }
    batch.labels[i] = static_cast<int>(raw_labels[i]);
    batch.ids[i] = i;
  }
  return batch;
}

Dataset load_with(const std::filesystem::path& path, std::string name,
                  int num_classes) {
  const std::string where = path.string();
  const auto arrays = read_npz(path);
  Dataset ds;
  ds.name = std::move(name);
  ds.train = decode_split(arrays, "train", where);
  ds.val = decode_split(arrays, "val", where);
  ds.test = decode_split(arrays, "test", where);
  if (num_classes <= 0) {
    int top = -1;
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
      for (int l : split->labels) top = std::max(top, l);
    }
    num_classes = top + 1;
  }
  ds.num_classes = num_classes;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    try {
      split->validate(num_classes);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace

std::span<const DatasetInfo> dataset_catalog() { return kCatalog; }

const DatasetInfo& find_dataset(std::string_view name) {
  for (const auto& info : kCatalog) {
    if (info.name == name || info.id == name) return info;
  }
  throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

ImageBatch ImageBatch::select(std::span<const std::int64_t> rows) const {
  ImageBatch out;
  out.pixels.resize(rows.size() * kPixelsPerImage);
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= size()) {
      throw IndexError("select: row " + std::to_string(rows[r]) + " outside batch of " +
                       std::to_string(size()));
    }
    std::copy_n(pixels.begin() + rows[r] * kPixelsPerImage, kPixelsPerImage,
                out.pixels.begin() + r * kPixelsPerImage);
    out.labels.push_back(labels[rows[r]]);
    out.ids.push_back(ids[rows[r]]);
  }
  return out;
}

ImageBatch ImageBatch::range(std::int64_t start, std::int64_t count) const {
  std::vector<std::int64_t> rows(count);
  std::iota(rows.begin(), rows.end(), start);
  return select(rows);
}

Tensor ImageBatch::to_tensor() const {
  return Tensor({size(), kImageSize, kImageSize, kImageChannels}, pixels);
}

void ImageBatch::validate(int num_classes) const {
  if (static_cast<std::int64_t>(pixels.size()) != size() * kPixelsPerImage ||
      ids.size() != labels.size()) {
    throw DataError("image batch sizes disagree");
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel value outside [0,1]");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
  }
}

Dataset load_npz(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  for (const auto& info : kCatalog) {
    if (info.id == stem) return load_npz(path, info);
  }
  return load_with(path, stem, 0);
}

Dataset load_npz(const std::filesystem::path& path, const DatasetInfo& info) {
  return load_with(path, std::string(info.name), info.num_classes);
}

std::filesystem::path dataset_path(const std::filesystem::path& dir,
                                   const DatasetInfo& info) {
  return dir / (std::string(info.id) + ".npz");
}

ImageBatch fewshot_subset(const Dataset& ds, int per_class, std::uint64_t seed) {
  return fewshot_subset(ds.train, ds.name, ds.num_classes, per_class, seed);
}

ImageBatch fewshot_subset(const ImageBatch& train, std::string_view name,
                          int num_classes, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw DataError("per_class must be at least 1");
  std::vector<std::vector<std::int64_t>> by_class(num_classes);
  for (std::int64_t i = 0; i < train.size(); ++i) {
    const int label = train.labels[i];
    if (label < 0 || label >= num_classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
    by_class[label].push_back(i);
  }
  Xoshiro256StarStar rng(derive_seed(seed, name, "subset"));
  std::vector<std::int64_t> rows;
  for (int c = 0; c < num_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.empty()) {
      throw DataError(std::string(name) + ": class " + std::to_string(c) +
                      " has no training examples");
    }
    // Partial Fisher-Yates: the first `take` slots become the sample.
    const std::size_t take = std::min<std::size_t>(per_class, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    rows.insert(rows.end(), pool.begin(), pool.begin() + take);
  }
  return train.select(rows);
}

std::vector<std::vector<std::int64_t>> epoch_order(std::int64_t count, int batch_size,
                                                   std::uint64_t epoch_seed, int epoch) {
  if (batch_size < 1) throw DataError("batch_size must be at least 1");
  std::vector<std::int64_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Xoshiro256StarStar rng(derive_seed(epoch_seed, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t start = 0; start < count; start += batch_size) {
    const auto end = std::min<std::int64_t>(start + batch_size, count);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

std::vector<ImageBatch> batches(const ImageBatch& batch, int batch_size,
                                std::uint64_t epoch_seed, int epoch) {
  std::vector<ImageBatch> out;
  for (const auto& rows : epoch_order(batch.size(), batch_size, epoch_seed, epoch)) {
    out.push_back(batch.select(rows));
  }
  return out;
}

void save_npz(const std::filesystem::path& path, const Dataset& ds) {
  std::map<std::string, NpyArray> arrays;
  const std::pair<const char*, const ImageBatch*> splits[] = {
      {"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}};
  for (const auto& [split, batch] : splits) {
    std::vector<std::uint8_t> pixels(batch->pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      pixels[i] = static_cast<std::uint8_t>(
          std::lround(std::clamp(batch->pixels[i], 0.0f, 1.0f) * 255.0f));
    }
    std::vector<std::uint8_t> labels(batch->labels.begin(), batch->labels.end());
    const std::int64_t n = batch->size();
    arrays[std::string(split) + "_images"] =
        NpyArray::from_u8({n, kImageSize, kImageSize, kImageChannels}, std::move(pixels));
    arrays[std::string(split) + "_labels"] = NpyArray::from_u8({n, 1}, std::move(labels));
  }
  write_npz(path, arrays);
}

Dataset synthetic_dataset(const DatasetInfo& info, std::uint64_t seed,
                          const SyntheticOptions& options) {
  return synthetic_dataset(std::string(info.name), info.num_classes, seed, options);
}

Dataset synthetic_dataset(std::string name, int num_classes, std::uint64_t seed,
                          const SyntheticOptions& options) {
  if (num_classes < 2 || num_classes > 255) throw DataError("synthetic: bad class count");
  Xoshiro256StarStar rng(derive_seed(seed, name, "synthetic"));
  struct Prototype {
    double colour[3];
    double fx, fy, phase;
  };
  std::vector<Prototype> prototypes(num_classes);
  for (auto& p : prototypes) {
    for (double& c : p.colour) c = 0.3 + 0.4 * rng.uniform();
    const double angle = rng.uniform() * std::numbers::pi;
    p.fx = 0.6 * std::cos(angle);
    p.fy = 0.6 * std::sin(angle);
    p.phase = rng.uniform() * 2 * std::numbers::pi;
  }
  auto make_split = [&](int count) {
    ImageBatch b;
    b.pixels.resize(static_cast<std::size_t>(count) * kPixelsPerImage);
    for (int i = 0; i < count; ++i) {
      const int label = i % num_classes;
      const auto& p = prototypes[label];
      const double shift = rng.uniform() * 2 * std::numbers::pi;
      auto img = b.image(i);
      for (int y = 0; y < kImageSize; ++y) {
        for (int x = 0; x < kImageSize; ++x) {
          const double stripe = 0.15 * std::sin(p.fx * x + p.fy * y + p.phase + shift);
          for (int c = 0; c < kImageChannels; ++c) {
            const double v = p.colour[c] + stripe + options.noise * rng.normal();
            img[(y * kImageSize + x) * kImageChannels + c] =
                static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
          }
        }
      }
      b.labels.push_back(label);
      b.ids.push_back(i);
    }
    return b;
  };
  Dataset ds;
  ds.name = std::move(name);
  ds.num_classes = num_classes;
  ds.train = make_split(options.train);
  ds.val = make_split(options.val);
  ds.test = make_split(options.test);
  return ds;
}

}  // namespace permubench
