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

// Task metrics: ROC-AUC for binary tasks, macro-F1 for multiclass tasks.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "permubench/data.hpp"
#include "permubench/models.hpp"

namespace permubench {

enum class MetricKind { kAuc, kMacroF1, kThresholdAccuracy };

std::string_view metric_id(MetricKind kind);  // "auc", "macro_f1", "accuracy@0.5"

// Which metric binary tasks report. ROC-AUC by default; accuracy of
// p(class 1) >= 0.5 is available for comparison.
enum class BinaryMetric { kRocAuc, kThresholdAccuracy };

struct EvalResult {
  MetricKind metric = MetricKind::kAuc;
  double value = 0;
  std::int64_t n = 0;
};

// Mann-Whitney form: P(score+ > score-) + P(tie) / 2 via average ranks.
// Throws MetricError when only one class is present, labels are not 0/1, or
// a score is NaN.
double auc(std::span<const double> scores, std::span<const int> labels);

// Unweighted mean of per-class F1 over all num_classes classes; a class
// with no predictions and no labels scores 0. Throws MetricError for empty
// input or out-of-range classes.
double macro_f1(std::span<const int> pred, std::span<const int> labels, int num_classes);

// Fraction with (score >= threshold) == (label == 1).
double threshold_accuracy(std::span<const double> scores, std::span<const int> labels,
                          double threshold = 0.5);

// Row-wise argmax of [n, classes] logits; ties resolve to the lowest index.
std::vector<int> argmax_rows(std::span<const float> logits, int classes);

// softmax(logits)[:, 1] computed in double.
std::vector<double> positive_probabilities(std::span<const float> logits, int classes);

// Routes by task: two classes -> `binary` metric on p(class 1), otherwise
// macro-F1 on argmax predictions.
EvalResult score_logits(std::span<const float> logits, std::span<const int> labels,
                        int num_classes, BinaryMetric binary = BinaryMetric::kRocAuc);

// Forward over the batch in fixed chunks of `chunk` images with no tape.
std::vector<float> predict_logits(const ModelSpec& spec, const ModelParams& params,
                                  const ImageBatch& batch, int chunk = 64);

EvalResult evaluate(const ModelSpec& spec, const ModelParams& params,
                    const ImageBatch& batch, int num_classes,
                    BinaryMetric binary = BinaryMetric::kRocAuc);

}  // namespace permubench
