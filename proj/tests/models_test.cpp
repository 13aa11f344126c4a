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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "permubench/error.hpp"
#include "permubench/models.hpp"
#include "permubench/ops.hpp"
#include "permubench/rng.hpp"
#include "test_util.hpp"

namespace permubench {
namespace {

using testing::random_tensor;

Tensor pattern_image() {
  std::vector<float> px(28 * 28 * 3);
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<float>((i * 37) % 256) / 255.0f;
  }
  return Tensor({1, 28, 28, 3}, std::move(px));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float worst = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

// Replaces every parameter by N(0, 0.2) noise so that no layer is close to
// its symmetric initialization.
ModelParams randomized(const ModelParams& params, std::uint64_t seed) {
  ModelParams out = params.clone();
  Xoshiro256StarStar rng(seed);
  for (auto& [name, t] : out.tensors) {
    if (name.find("norm") != std::string::npos) continue;
    for (auto& v : t.mutable_data()) v = static_cast<float>(0.2 * rng.normal());
  }
  return out;
}

std::vector<std::int64_t> random_order(int n, Xoshiro256StarStar& rng) {
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  return order;
}

class ArchTest : public ::testing::TestWithParam<Arch> {};

TEST_P(ArchTest, BuildIsDeterministic) {
  const auto spec = default_spec(GetParam(), 4);
  auto a = build(spec, 11);
  auto b = build(spec, 11);
  ASSERT_EQ(a.names(), b.names());
  for (const auto& name : a.names()) {
    const auto& x = a.at(name);
    const auto& y = b.at(name);
    ASSERT_EQ(x.shape(), y.shape());
    EXPECT_EQ(0, std::memcmp(x.data().data(), y.data().data(),
                             x.data().size() * sizeof(float)))
        << name;
  }
  auto c = build(spec, 12);
  EXPECT_GT(max_abs_diff(a.at("head.weight"), c.at("head.weight")), 0.0f);
}

TEST_P(ArchTest, DefaultSpecsFitBudgetForEveryDatasetWidth) {
  for (int classes : {2, 4, 7, 8, 9, 11}) {
    auto params = build(default_spec(GetParam(), classes), 3);
    EXPECT_LT(count_params(params), kParameterBudget);
  }
}

TEST_P(ArchTest, ZeroImageGivesFiniteLogits) {
  const auto spec = default_spec(GetParam(), 5);
  auto params = build(spec, 3);
  auto logits = forward(spec, params, Tensor::zeros({1, 28, 28, 3}));
  EXPECT_EQ(logits.shape(), (Shape{1, 5}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST_P(ArchTest, IdenticalImagesGiveIdenticalRows) {
  const auto spec = default_spec(GetParam(), 3);
  auto params = build(spec, 5);
  auto img = pattern_image();
  auto batch = ops::concat<float>({img, img, img}, 0);
  auto logits = forward(spec, params, batch);
  for (int r = 1; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(logits.data()[c], logits.data()[r * 3 + c]);
    }
  }
}

TEST_P(ArchTest, BatchConsistency) {
  const auto spec = default_spec(GetParam(), 3);
  auto params = randomized(build(spec, 5), 77);
  auto x1 = random_tensor<float>({3, 28, 28, 3}, 1, 0, 1);
  auto x2 = random_tensor<float>({2, 28, 28, 3}, 2, 0, 1);
  auto joint = forward(spec, params, ops::concat<float>({x1, x2}, 0));
  auto split = ops::concat<float>(
      {forward(spec, params, x1), forward(spec, params, x2)}, 0);
  EXPECT_LT(max_abs_diff(joint, split), 1e-6f);
}

TEST_P(ArchTest, InputGradientMatchesFiniteDifferences) {
  const auto spec = default_spec(GetParam(), 3);
  auto params32 = randomized(build(spec, 9), 8);
  auto params64 = params32.cast<double>();
  auto image32 = random_tensor<float>({1, 28, 28, 3}, 4, 0.2, 0.8);
  const std::vector<int> label{1};

  auto loss64 = [&](const Tensor64& img) {
    return ops::cross_entropy(forward(spec, params64, img), label).item();
  };
  Tensor64 image64 = image32.cast<double>();
  image64.set_requires_grad(true);
  {
    Tape<double> tape;
    tape.backward(ops::cross_entropy(forward(spec, params64, image64), label));
  }
  Tensor image_leaf = image32.detach();
  image_leaf.set_requires_grad(true);
  {
    Tape<float> tape;
    tape.backward(ops::cross_entropy(forward(spec, params32, image_leaf), label));
  }

  Xoshiro256StarStar rng(123);
  std::vector<double> analytic64, analytic32, numeric;
  for (int i = 0; i < 10; ++i) {
    const auto pixel = static_cast<std::size_t>(rng.below(28 * 28 * 3));
    Tensor64 probe = image32.cast<double>();
    const double h = 1e-5;
    probe.mutable_data()[pixel] += h;
    const double plus = loss64(probe);
    probe.mutable_data()[pixel] -= 2 * h;
    const double minus = loss64(probe);
    numeric.push_back((plus - minus) / (2 * h));
    analytic64.push_back(image64.grad()[pixel]);
    analytic32.push_back(image_leaf.grad()[pixel]);
  }
  EXPECT_LT(testing::relative_error(analytic64, numeric), 1e-5);
  EXPECT_LT(testing::relative_error(analytic32, numeric), 1e-3);
}

INSTANTIATE_TEST_SUITE_P(All, ArchTest, ::testing::ValuesIn(kAllArchs),
                         [](const auto& info) {
                           return std::string(arch_id(info.param));
                         });

class InvariantArchTest : public ::testing::TestWithParam<Arch> {};

TEST_P(InvariantArchTest, PatchPermutationLeavesLogitsUnchanged) {
  const auto spec = default_spec(GetParam(), 4);
  auto images = random_tensor<float>({2, 28, 28, 3}, 21, 0, 1);
  Xoshiro256StarStar rng(5);
  for (const auto& params : {build(spec, 3), randomized(build(spec, 3), 6)}) {
    auto reference = forward(spec, params, images);
    float worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      auto order = random_order(spec.num_patches(), rng);
      ForwardOptions options;
      options.token_order = order;
      worst = std::max(worst, max_abs_diff(reference,
                                           forward(spec, params, images, options)));
    }
    EXPECT_LT(worst, 1e-5f);
  }
}

INSTANTIATE_TEST_SUITE_P(Symmetric, InvariantArchTest,
                         ::testing::Values(Arch::kZachVit, Arch::kAbmil,
                                           Arch::kTransMil),
                         [](const auto& info) {
                           return std::string(arch_id(info.param));
                         });

TEST(MinimalVitTest, PositionalModelHasOrderSensitivityWitness) {
  const auto spec = default_spec(Arch::kMinimalVit, 4);
  auto params = randomized(build(spec, 3), 6);
  auto images = random_tensor<float>({1, 28, 28, 3}, 22, 0, 1);
  auto reference = forward(spec, params, images);
  Xoshiro256StarStar rng(8);
  float best = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto order = random_order(spec.num_patches(), rng);
    ForwardOptions options;
    options.token_order = order;
    best = std::max(best, max_abs_diff(reference, forward(spec, params, images, options)));
  }
  EXPECT_GT(best, 1e-3f);
}

TEST(MinimalVitTest, AblationRestoresInvariance) {
  const auto spec = default_spec(Arch::kMinimalVit, 4);
  auto params = randomized(build(spec, 3), 6);
  auto images = random_tensor<float>({1, 28, 28, 3}, 23, 0, 1);
  ForwardOptions ablated;
  ablated.drop_positional = true;
  ablated.pooled_readout = true;
  auto reference = forward(spec, params, images, ablated);
  Xoshiro256StarStar rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto order = random_order(spec.num_patches(), rng);
    ForwardOptions options = ablated;
    options.token_order = order;
    EXPECT_LT(max_abs_diff(reference, forward(spec, params, images, options)), 1e-5f);
  }
}

TEST(AbmilTest, AttentionWeightsSumToOne) {
  const auto spec = default_spec(Arch::kAbmil, 2);
  auto params = randomized(build(spec, 3), 4);
  auto weights = abmil_attention(spec, params,
                                 random_tensor<float>({3, 28, 28, 3}, 5, 0, 1));
  ASSERT_EQ(weights.shape(), (Shape{3, 49}));
  for (int b = 0; b < 3; ++b) {
    double total = 0;
    for (int i = 0; i < 49; ++i) total += weights.data()[b * 49 + i];
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(TransMilTest, SingleInstanceInput) {
  auto spec = default_spec(Arch::kTransMil, 2);
  spec.patch_size = 28;
  auto params = build(spec, 3);
  auto logits = forward(spec, params, random_tensor<float>({2, 28, 28, 3}, 6, 0, 1));
  EXPECT_EQ(logits.shape(), (Shape{2, 2}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
}

// Logits of the pattern image under seed 7, three classes, default specs.
// Frozen from the implementation; guards against silent numeric drift.
TEST(GoldenTest, LogitsMatchFrozenValues) {
  struct Golden {
    Arch arch;
    float logits[3];
  };
  const Golden goldens[] = {
      {Arch::kAbmil, {-0.0664708912f, 0.0578150973f, -0.228539586f}},
      {Arch::kMinimalVit, {0.0263818819f, 0.0888650492f, -0.29566884f}},
      {Arch::kTransMil, {-0.197407007f, 0.012225775f, -0.262061059f}},
      {Arch::kZachVit, {-0.00268180785f, 0.00191129989f, -0.0089135021f}},
  };
  auto image = pattern_image();
  for (const auto& g : goldens) {
    const auto spec = default_spec(g.arch, 3);
    auto logits = forward(spec, build(spec, 7), image);
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(logits.data()[c], g.logits[c], 1e-6) << arch_id(g.arch);
    }
  }
}

TEST(CountParamsTest, Basics) {
  EXPECT_EQ(count_params(ModelParams{}), 0);
  ModelParams single;
  single.tensors.emplace("w", Tensor::zeros({10, 10}));
  EXPECT_EQ(count_params(single), 100);
}

TEST(SpecTest, OverBudgetReportsCount) {
  auto spec = default_spec(Arch::kZachVit, 2);
  spec.embed_dims = {128, 256, 384};
  try {
    build(spec, 0);
    FAIL() << "expected SpecError";
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("parameters"), std::string::npos);
  }
}

TEST(SpecTest, ShapeErrors) {
  auto spec = default_spec(Arch::kZachVit, 2);
  spec.patch_size = 5;
  EXPECT_THROW(build(spec, 0), SpecError);

  auto ok = default_spec(Arch::kZachVit, 2);
  auto params = build(ok, 0);
  EXPECT_THROW(forward(ok, params, Tensor::zeros({1, 30, 30, 3})), SpecError);
  EXPECT_THROW(forward(ok, params, Tensor::zeros({1, 32, 32, 3})), DimensionError);
  EXPECT_THROW(forward_abmil(ok, params, Tensor::zeros({1, 28, 28, 3})), SpecError);
}

TEST(SerializationTest, RoundTripAndClosure) {
  const auto spec = default_spec(Arch::kTransMil, 3);
  auto params = randomized(build(spec, 1), 2);
  const auto path = std::filesystem::temp_directory_path() / "permubench_params.bin";
  save_params(path, spec, params);
  auto [loaded_spec, loaded] = load_params(path);
  EXPECT_EQ(loaded_spec, spec);
  ASSERT_EQ(loaded.names(), params.names());
  for (const auto& name : params.names()) {
    EXPECT_EQ(max_abs_diff(params.at(name), loaded.at(name)), 0.0f) << name;
  }
  std::filesystem::remove(path);

  ModelParams target = build(spec, 5);
  ModelParams extra = params.clone();
  extra.tensors.emplace("bogus", Tensor::zeros({1}));
  EXPECT_THROW(load_into(target, extra), SpecError);
  ModelParams missing = params.clone();
  missing.tensors.erase("head.bias");
  EXPECT_THROW(load_into(target, missing), SpecError);
}

TEST(SerializationTest, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "permubench_garbage.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a parameter file";
  }
  EXPECT_THROW(load_params(path), FormatError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace permubench
