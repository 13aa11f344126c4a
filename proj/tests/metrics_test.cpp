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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "permubench/error.hpp"
#include "permubench/metrics.hpp"
#include "permubench/rng.hpp"

namespace permubench {
namespace {

// Direct pair counting: wins plus half ties over all positive/negative pairs.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

TEST(AucTest, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
}

TEST(AucTest, MatchesPairCountingWithTies) {
  Xoshiro256StarStar rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(60);
    std::vector<int> l(60);
    for (int i = 0; i < 60; ++i) {
      s[i] = static_cast<double>(rng.below(12)) / 11.0;  // many ties
      l[i] = static_cast<int>(rng.below(2));
    }
    l[0] = 0;
    l[1] = 1;
    EXPECT_NEAR(auc(s, l), pairwise_auc(s, l), 1e-12);
  }
}

TEST(AucTest, InvariantUnderMonotoneMaps) {
  Xoshiro256StarStar rng(2);
  std::vector<double> s(100);
  std::vector<int> l(100);
  for (int i = 0; i < 100; ++i) {
    s[i] = rng.uniform();
    l[i] = i % 3 == 0;
  }
  const double base = auc(s, l);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = 0.1 + rng.uniform() * 5, b = rng.uniform() - 0.5, k = 1 + rng.uniform() * 3;
    std::vector<double> mapped(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) mapped[i] = a * std::pow(s[i], k) + b;
    EXPECT_EQ(auc(mapped, l), base);
  }
}

TEST(AucTest, LabelComplementSumsToOne) {
  Xoshiro256StarStar rng(3);
  std::vector<double> s(77);
  std::vector<int> l(77), flipped(77);
  for (int i = 0; i < 77; ++i) {
    s[i] = static_cast<double>(rng.below(20));
    l[i] = static_cast<int>(rng.below(2));
    flipped[i] = 1 - l[i];
  }
  EXPECT_NEAR(auc(s, l) + auc(s, flipped), 1.0, 1e-12);
}

TEST(AucTest, Errors) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), MetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), MetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1, NAN}, std::vector<int>{0, 1}), MetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), MetricError);
}

TEST(MacroF1Test, Examples) {
  EXPECT_EQ(macro_f1(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 2}, 3), 1.0);
  EXPECT_NEAR(macro_f1(std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 2}, 3), 5.0 / 9.0, 1e-15);
  EXPECT_EQ(macro_f1(std::vector<int>{0, 0, 0}, std::vector<int>{0, 0, 0}, 2), 0.5);
  EXPECT_THROW(macro_f1(std::vector<int>{}, std::vector<int>{}, 2), MetricError);
  EXPECT_THROW(macro_f1(std::vector<int>{3}, std::vector<int>{0}, 3), MetricError);
}

TEST(MacroF1Test, InvariantUnderClassRelabeling) {
  Xoshiro256StarStar rng(4);
  std::vector<int> pred(200), labels(200);
  for (int i = 0; i < 200; ++i) {
    pred[i] = static_cast<int>(rng.below(5));
    labels[i] = rng.uniform() < 0.5 ? pred[i] : static_cast<int>(rng.below(5));
  }
  const double base = macro_f1(pred, labels, 5);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  std::vector<int> p2(200), l2(200);
  for (int i = 0; i < 200; ++i) {
    p2[i] = perm[pred[i]];
    l2[i] = perm[labels[i]];
  }
  EXPECT_NEAR(macro_f1(p2, l2, 5), base, 1e-15);
}

TEST(ScoreTest, ArgmaxTiesPickLowestIndex) {
  const std::vector<float> logits = {1, 3, 3, 2, 2, 2, 0, -1, 5};
  EXPECT_EQ(argmax_rows(logits, 3), (std::vector<int>{1, 0, 2}));
}

TEST(ScoreTest, RoutesByClassCount) {
  const std::vector<float> binary = {0, 1, 0, -1, 0, 2, 0, -2};
  const std::vector<int> labels = {1, 0, 1, 0};
  const auto r = score_logits(binary, labels, 2);
  EXPECT_EQ(r.metric, MetricKind::kAuc);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.n, 4);
  const auto acc = score_logits(binary, std::vector<int>{1, 1, 1, 0}, 2,
                                BinaryMetric::kThresholdAccuracy);
  EXPECT_EQ(acc.metric, MetricKind::kThresholdAccuracy);
  EXPECT_EQ(acc.value, 0.75);
  const auto mc = score_logits(std::vector<float>{1, 0, 0, 0, 1, 0}, std::vector<int>{0, 1}, 3);
  EXPECT_EQ(mc.metric, MetricKind::kMacroF1);
  EXPECT_NEAR(mc.value, 2.0 / 3.0, 1e-15);
}

ImageBatch random_images(int n, std::uint64_t seed) {
  ImageBatch b;
  Xoshiro256StarStar rng(seed);
  b.pixels.resize(n * kPixelsPerImage);
  for (auto& v : b.pixels) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < n; ++i) {
    b.labels.push_back(i % 2);
    b.ids.push_back(i);
  }
  return b;
}

TEST(EvaluateTest, UntrainedModelIsNearChanceAndDeterministic) {
  const auto spec = default_spec(Arch::kZachVit, 2);
  const auto params = build(spec, 3);
  const auto batch = random_images(200, 5);
  const auto first = evaluate(spec, params, batch, 2);
  EXPECT_EQ(first.metric, MetricKind::kAuc);
  EXPECT_EQ(first.n, 200);
  EXPECT_NEAR(first.value, 0.5, 0.1);
  EXPECT_EQ(evaluate(spec, params, batch, 2).value, first.value);
}

TEST(EvaluateTest, SingleCorrectImageScoresOneOverClasses) {
  const auto spec = default_spec(Arch::kAbmil, 4);
  const auto params = build(spec, 3);
  auto batch = random_images(1, 6);
  batch.labels[0] = argmax_rows(predict_logits(spec, params, batch), 4)[0];
  const auto r = evaluate(spec, params, batch, 4);
  EXPECT_EQ(r.metric, MetricKind::kMacroF1);
  EXPECT_NEAR(r.value, 0.25, 1e-15);
}

TEST(EvaluateTest, ChunkingDoesNotChangeLogits) {
  const auto spec = default_spec(Arch::kTransMil, 3);
  const auto params = build(spec, 3);
  const auto batch = random_images(10, 7);
  EXPECT_EQ(predict_logits(spec, params, batch, 3), predict_logits(spec, params, batch, 64));
  EXPECT_THROW(evaluate(spec, params, batch, 2), MetricError);
  EXPECT_THROW(evaluate(spec, params, ImageBatch{}, 3), MetricError);
}

}  // namespace
}  // namespace permubench
