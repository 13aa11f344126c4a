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


#include "permubench/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "permubench/error.hpp"

namespace permubench {

namespace {

float sign_of(float g) { return g > 0 ? 1.0f : (g < 0 ? -1.0f : 0.0f); }

}  // namespace

std::string_view attack_id(AttackKind kind) {
  return kind == AttackKind::kFgsm ? "fgsm" : "pgd";
}

AttackKind parse_attack(std::string_view text) {
  if (text == "fgsm") return AttackKind::kFgsm;
  if (text == "pgd") return AttackKind::kPgd;
  throw SpecError("unknown attack '" + std::string(text) + "'");
}

AttackSpec AttackSpec::fgsm(double epsilon) {
  return {AttackKind::kFgsm, epsilon, 1, epsilon};
}

AttackSpec AttackSpec::pgd(double epsilon) {
  return {AttackKind::kPgd, epsilon, kPgdSteps, epsilon / 4};
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) {
    throw SpecError("attack epsilon must be finite and non-negative");
  }
  if (kind == AttackKind::kFgsm && (steps != 1 || step_size != epsilon)) {
    throw SpecError("fgsm takes one step of size epsilon");
  }
  if (kind == AttackKind::kPgd && (steps != kPgdSteps || step_size != epsilon / 4)) {
    throw SpecError("pgd takes 10 steps of size epsilon / 4");
  }
}

std::string AttackSpec::setting() const {
  const double units = epsilon * 255.0;
  std::string eps;
  if (std::abs(units - std::round(units)) < 1e-9) {
    eps = std::to_string(static_cast<long long>(std::round(units))) + "/255";
  } else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", epsilon);
    eps = buf;
  }
  return std::string(attack_id(kind)) + ":" + eps;
}

AttackSpec AttackSpec::parse_setting(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw SpecError("malformed attack setting '" + std::string(text) + "'");
  }
  const AttackKind kind = parse_attack(text.substr(0, colon));
  const std::string eps(text.substr(colon + 1));
  double epsilon;
  try {
    std::size_t used = 0;
    const auto slash = eps.find('/');
    if (slash != std::string::npos) {
      const double num = std::stod(eps.substr(0, slash), &used);
      if (used != slash) throw SpecError("");
      const std::string den_text = eps.substr(slash + 1);
      const double den = std::stod(den_text, &used);
      if (used != den_text.size() || den == 0) throw SpecError("");
      epsilon = num / den;
    } else {
      epsilon = std::stod(eps, &used);
      if (used != eps.size()) throw SpecError("");
    }
  } catch (const std::exception&) {
    throw SpecError("malformed attack setting '" + std::string(text) + "'");
  }
  AttackSpec spec = kind == AttackKind::kFgsm ? fgsm(epsilon) : pgd(epsilon);
  spec.validate();
  return spec;
}

std::vector<AttackSpec> attack_grid(AttackKind kind) {
  std::vector<AttackSpec> grid;
  for (int units : {1, 2, 4, 8}) {
    const double eps = units / 255.0;
    grid.push_back(kind == AttackKind::kFgsm ? AttackSpec::fgsm(eps) : AttackSpec::pgd(eps));
  }
  return grid;
}

ForwardFn model_forward(const ModelSpec& spec, const ModelParams& params) {
  return [spec, &params](const Tensor& images) { return forward(spec, params, images); };
}

LossFn attack_loss() { return &classification_loss; }

std::vector<float> input_gradient(const ForwardFn& forward, const ImageBatch& batch,
                                  int chunk) {
  const LossFn loss = attack_loss();
  std::vector<float> grad(batch.pixels.size());
  for (std::int64_t start = 0; start < batch.size(); start += chunk) {
    const auto count = std::min<std::int64_t>(chunk, batch.size() - start);
    const auto first = batch.pixels.begin() + start * kPixelsPerImage;
    Tensor images({count, kImageSize, kImageSize, kImageChannels},
                  std::vector<float>(first, first + count * kPixelsPerImage), true);
    {
      Tape<float> tape;
      const Tensor logits = forward(images);
      tape.backward(loss(logits, std::span<const int>(batch.labels).subspan(start, count)));
    }
    const auto g = images.grad();
    for (std::int64_t i = 0; i < count; ++i) {
      for (std::int64_t k = 0; k < kPixelsPerImage; ++k) {
        if (!std::isfinite(g[i * kPixelsPerImage + k])) {
          throw NumericError("non-finite input gradient for image " +
                             std::to_string(start + i) + " (id " +
                             std::to_string(batch.ids[start + i]) + ")");
        }
      }
    }
    std::copy(g.begin(), g.end(), grad.begin() + start * kPixelsPerImage);
  }
  return grad;
}

ImageBatch fgsm(const ForwardFn& forward, const ImageBatch& batch, double epsilon) {
  AttackSpec::fgsm(epsilon).validate();
  const auto eps = static_cast<float>(epsilon);
  ImageBatch out = batch;
  if (batch.empty()) return out;
  const auto grad = input_gradient(forward, batch);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = std::clamp(batch.pixels[i] + eps * sign_of(grad[i]), 0.0f, 1.0f);
  }
  return out;
}

ImageBatch pgd(const ForwardFn& forward, const ImageBatch& batch, double epsilon, int steps,
               double step_size, const IterateObserver& observer) {
  if (step_size < 0) step_size = epsilon / 4;
  if (!(epsilon >= 0) || steps < 1 || !(step_size >= 0)) {
    throw SpecError("pgd needs epsilon >= 0, steps >= 1 and step_size >= 0");
  }
  const auto eps = static_cast<float>(epsilon);
  const auto alpha = static_cast<float>(step_size);
  ImageBatch x = batch;
  if (batch.empty()) return x;
  for (int step = 1; step <= steps; ++step) {
    const auto grad = input_gradient(forward, x);
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
      const float moved = std::clamp(x.pixels[i] + alpha * sign_of(grad[i]), 0.0f, 1.0f);
      const float clean = batch.pixels[i];
      x.pixels[i] = std::min(std::max(moved, clean - eps), clean + eps);
    }
    if (observer) observer(step, x);
  }
  return x;
}

ImageBatch run_attack(const AttackSpec& spec, const ForwardFn& forward,
                      const ImageBatch& batch, const IterateObserver& observer) {
  spec.validate();
  if (spec.kind == AttackKind::kFgsm) return fgsm(forward, batch, spec.epsilon);
  return pgd(forward, batch, spec.epsilon, spec.steps, spec.step_size, observer);
}

}  // namespace permubench
