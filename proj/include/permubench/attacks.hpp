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

// Untargeted L-infinity attacks in pixel space: FGSM and PGD without random
// start. Both ascend the training objective (see objective.hpp) with respect
// to the input, use sign(0) = 0, and keep every iterate inside [0,1] and the
// epsilon ball around the clean image.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "permubench/data.hpp"
#include "permubench/models.hpp"
#include "permubench/objective.hpp"

namespace permubench {

enum class AttackKind { kFgsm, kPgd };

inline constexpr AttackKind kAllAttackKinds[] = {AttackKind::kFgsm, AttackKind::kPgd};

std::string_view attack_id(AttackKind kind);  // "fgsm", "pgd"
AttackKind parse_attack(std::string_view text);

constexpr int kPgdSteps = 10;

struct AttackSpec {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0;
  int steps = 1;
  double step_size = 0;

  static AttackSpec fgsm(double epsilon);
  static AttackSpec pgd(double epsilon);  // 10 steps of epsilon / 4

  // Throws SpecError: epsilon < 0, FGSM with steps != 1 or step_size !=
  // epsilon, PGD with steps != 10 or step_size != epsilon / 4.
  void validate() const;

  // "fgsm:4/255"; epsilons that are not whole multiples of 1/255 print as
  // decimals.
  std::string setting() const;
  static AttackSpec parse_setting(std::string_view text);
};

// Epsilons {1, 2, 4, 8} / 255, ascending.
std::vector<AttackSpec> attack_grid(AttackKind kind);

// Maps [b, 28, 28, 3] images to [b, classes] logits.
using ForwardFn = std::function<Tensor(const Tensor& images)>;
ForwardFn model_forward(const ModelSpec& spec, const ModelParams& params);

// The loss the attacks ascend; identical to training_loss().
LossFn attack_loss();

// d loss / d images for the whole batch, evaluated in chunks of `chunk`
// images; the loss is the batch-mean objective, so each image's gradient is
// scaled by 1 / chunk size (irrelevant to sign-based attacks). Throws
// NumericError naming the first image with a non-finite gradient.
std::vector<float> input_gradient(const ForwardFn& forward, const ImageBatch& batch,
                                  int chunk = 64);

// Called after each PGD step (1-based) with the current iterate.
using IterateObserver = std::function<void(int step, const ImageBatch& iterate)>;

ImageBatch fgsm(const ForwardFn& forward, const ImageBatch& batch, double epsilon);
ImageBatch pgd(const ForwardFn& forward, const ImageBatch& batch, double epsilon,
               int steps = kPgdSteps, double step_size = -1,
               const IterateObserver& observer = nullptr);
ImageBatch run_attack(const AttackSpec& spec, const ForwardFn& forward,
                      const ImageBatch& batch, const IterateObserver& observer = nullptr);

}  // namespace permubench
