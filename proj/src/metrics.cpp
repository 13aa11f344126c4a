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


#include "permubench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "permubench/error.hpp"

namespace permubench {

std::string_view metric_id(MetricKind kind) {
  switch (kind) {
    case MetricKind::kAuc: return "auc";
    case MetricKind::kMacroF1: return "macro_f1";
    case MetricKind::kThresholdAccuracy: return "accuracy@0.5";
  }
  return "unknown";
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: scores and labels differ in length");
  std::int64_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw MetricError("auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw MetricError("auc: NaN score");
    positives += labels[i];
  }
  const std::int64_t negatives = static_cast<std::int64_t>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("auc: undefined with a single class present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based average ranks of the positives.
  double rank_sum = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    }
    start = end;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(positives) * (positives + 1);
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double macro_f1(std::span<const int> pred, std::span<const int> labels, int num_classes) {
  if (pred.size() != labels.size()) throw MetricError("macro_f1: length mismatch");
  if (pred.empty()) throw MetricError("macro_f1: empty input");
  if (num_classes < 1) throw MetricError("macro_f1: num_classes must be positive");
  std::vector<std::int64_t> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= num_classes || labels[i] < 0 || labels[i] >= num_classes) {
      throw MetricError("macro_f1: class index out of range");
    }
    if (pred[i] == labels[i]) {
      ++tp[pred[i]];
    } else {
      ++fp[pred[i]];
      ++fn[labels[i]];
    }
  }
  double total = 0;
  for (int c = 0; c < num_classes; ++c) {
    const std::int64_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) total += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return total / num_classes;
}

double threshold_accuracy(std::span<const double> scores, std::span<const int> labels,
                          double threshold) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw MetricError("threshold_accuracy: empty or mismatched input");
  }
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += (scores[i] >= threshold) == (labels[i] == 1);
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::vector<int> argmax_rows(std::span<const float> logits, int classes) {
  std::vector<int> out(logits.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (logits[r * classes + c] > logits[r * classes + best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

std::vector<double> positive_probabilities(std::span<const float> logits, int classes) {
  std::vector<double> out(logits.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const float* row = logits.data() + r * classes;
    const double peak = *std::max_element(row, row + classes);
    double total = 0;
    for (int c = 0; c < classes; ++c) total += std::exp(row[c] - peak);
    out[r] = std::exp(row[1] - peak) / total;
  }
  return out;
}

EvalResult score_logits(std::span<const float> logits, std::span<const int> labels,
                        int num_classes, BinaryMetric binary) {
  if (logits.size() != labels.size() * num_classes) {
    throw MetricError("score_logits: logits do not match labels x classes");
  }
  EvalResult result;
  result.n = static_cast<std::int64_t>(labels.size());
  if (num_classes == 2) {
    const auto p = positive_probabilities(logits, 2);
    if (binary == BinaryMetric::kRocAuc) {
      result.metric = MetricKind::kAuc;
      result.value = auc(p, labels);
    } else {
      result.metric = MetricKind::kThresholdAccuracy;
      result.value = threshold_accuracy(p, labels);
    }
  } else {
    result.metric = MetricKind::kMacroF1;
    result.value = macro_f1(argmax_rows(logits, num_classes), labels, num_classes);
  }
  return result;
}

std::vector<float> predict_logits(const ModelSpec& spec, const ModelParams& params,
                                  const ImageBatch& batch, int chunk) {
  std::vector<float> out;
  out.reserve(batch.size() * spec.num_classes);
  for (std::int64_t start = 0; start < batch.size(); start += chunk) {
    const auto count = std::min<std::int64_t>(chunk, batch.size() - start);
    const std::span<const float> pixels(batch.pixels.data() + start * kPixelsPerImage,
                                        count * kPixelsPerImage);
    const Tensor images({count, kImageSize, kImageSize, kImageChannels},
                        std::vector<float>(pixels.begin(), pixels.end()));
    const Tensor logits = forward(spec, params, images);
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return out;
}

EvalResult evaluate(const ModelSpec& spec, const ModelParams& params,
                    const ImageBatch& batch, int num_classes, BinaryMetric binary) {
  if (batch.empty()) throw MetricError("evaluate: empty split");
  if (spec.num_classes != num_classes) {
    throw MetricError("evaluate: model has " + std::to_string(spec.num_classes) +
                      " outputs for a " + std::to_string(num_classes) + "-class task");
  }
  return score_logits(predict_logits(spec, params, batch), batch.labels, num_classes, binary);
}

}  // namespace permubench
