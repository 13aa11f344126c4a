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

// Few-shot training: Adam on softmax cross-entropy over a class-balanced
// subset of the training split, fixed epochs, no augmentation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "permubench/data.hpp"
#include "permubench/metrics.hpp"
#include "permubench/models.hpp"
#include "permubench/objective.hpp"

namespace permubench {

enum class Selection { kLastEpoch, kBestVal };

struct TrainConfig {
  int per_class = 50;
  int batch_size = 16;
  int epochs = 23;
  std::vector<int> seeds = {3, 5, 7, 11, 13};
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string optimizer = "adam";
  Selection selection = Selection::kLastEpoch;
  BinaryMetric binary_metric = BinaryMetric::kRocAuc;
  bool log_val_metric = true;

  // Throws ConfigError for non-positive sizes, lr or epochs, or an
  // optimizer other than "adam".
  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  std::optional<double> val_metric;  // empty when undefined or disabled
};

struct TrainLog {
  std::vector<EpochLog> epochs;

  // One {"epoch", "train_loss", "val_metric"} object per line.
  std::string to_jsonl() const;
};

struct AdamState {
  std::map<std::string, std::vector<float>> m, v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of every tensor in `params` from the
// same-named entry of `grads` (missing entries count as zero gradient).
void adam_step(ModelParams& params, const std::map<std::string, std::vector<float>>& grads,
               AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  ModelParams params;
  TrainLog log;
  std::vector<std::int64_t> subset_ids;
};

// The loss minimized by train(); identical to attack_loss().
LossFn training_loss();

// Initializes from `seed`, draws the few-shot subset and per-epoch shuffles
// from `seed` on independent streams ("init", "subset", "shuffle"), and runs
// cfg.epochs epochs of Adam. Only the train and val splits are visible.
// Throws TrainingError carrying the epoch and batch of a non-finite loss.
TrainResult train(const ModelSpec& spec, const TrainingSplits& data, const TrainConfig& cfg,
                  std::uint64_t seed);

}  // namespace permubench
