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


#include "permubench/trainer.hpp"

#include <cmath>

#include "json.hpp"

#include "permubench/error.hpp"
#include "permubench/rng.hpp"

namespace permubench {

void TrainConfig::validate() const {
  if (per_class < 1 || batch_size < 1 || epochs < 1) {
    throw ConfigError("per_class, batch_size and epochs must be at least 1");
  }
  if (!(lr > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) ||
      !(adam_eps > 0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "'");
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json line;
    line["epoch"] = e.epoch;
    line["train_loss"] = e.train_loss;
    line["val_metric"] = e.val_metric ? nlohmann::ordered_json(*e.val_metric) : nullptr;
    out += line.dump() + "\n";
  }
  return out;
}

void adam_step(ModelParams& params, const std::map<std::string, std::vector<float>>& grads,
               AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, tensor] : params.tensors) {
    auto values = tensor.mutable_data();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(values.size(), 0.0f);
      v.assign(values.size(), 0.0f);
    }
    const auto it = grads.find(name);
    if (it != grads.end() && it->second.size() != values.size()) {
      throw DimensionError("adam_step: gradient for " + name + " has wrong size");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = it == grads.end() ? 0.0 : it->second[i];
      const double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
      values[i] = static_cast<float>(values[i] - update);
    }
  }
}

LossFn training_loss() { return &classification_loss; }

TrainResult train(const ModelSpec& spec, const TrainingSplits& data, const TrainConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate();
  if (!data.train) throw DataError("train: no training split");
  if (spec.num_classes != data.num_classes) {
    throw SpecError("train: model has " + std::to_string(spec.num_classes) +
                    " outputs for a " + std::to_string(data.num_classes) + "-class dataset");
  }
  const LossFn loss_fn = training_loss();
  TrainResult result{build(spec, seed), {}, {}};
  ModelParams& params = result.params;
  const ImageBatch subset =
      fewshot_subset(*data.train, data.name, data.num_classes, cfg.per_class, seed);
  result.subset_ids = subset.ids;
  const std::uint64_t shuffle_seed = derive_seed(seed, data.name, "shuffle");

  AdamState adam;
  std::optional<double> best_val;
  ModelParams best_params;
  params.set_requires_grad(true);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0;
    const auto order = epoch_order(subset.size(), cfg.batch_size, shuffle_seed, epoch);
    for (std::size_t b = 0; b < order.size(); ++b) {
      const ImageBatch batch = subset.select(order[b]);
      std::map<std::string, std::vector<float>> grads;
      double loss_value;
      {
        Tape<float> tape;
        const Tensor loss = loss_fn(forward(spec, params, batch.to_tensor()), batch.labels);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                              ", batch " + std::to_string(b + 1));
        }
        tape.backward(loss);
      }
      for (const auto& [name, tensor] : params.tensors) {
        if (tensor.has_grad()) grads[name].assign(tensor.grad().begin(), tensor.grad().end());
      }
      adam_step(params, grads, adam, cfg);
      loss_sum += loss_value * static_cast<double>(batch.size());
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.train_loss = loss_sum / static_cast<double>(subset.size());
    const bool need_val = cfg.log_val_metric || cfg.selection == Selection::kBestVal;
    if (need_val && data.val && !data.val->empty()) {
      try {
        entry.val_metric =
            evaluate(spec, params, *data.val, data.num_classes, cfg.binary_metric).value;
      } catch (const MetricError&) {
        entry.val_metric.reset();
      }
    }
    if (cfg.selection == Selection::kBestVal && entry.val_metric &&
        (!best_val || *entry.val_metric > *best_val)) {
      best_val = entry.val_metric;
      best_params = params.clone();
    }
    result.log.epochs.push_back(entry);
  }
  if (cfg.selection == Selection::kBestVal && best_val) params = std::move(best_params);
  params.set_requires_grad(false);
  return result;
}

}  // namespace permubench
