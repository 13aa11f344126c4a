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

// The four compact classifiers. Every model consumes images laid out as
// [batch, height, width, channels] with values in [0, 1], cuts them into
// non-overlapping patch_size x patch_size patches (row-major patch order),
// and returns [batch, num_classes] logits.
//
//   ZachVit    patch embedding without positional term, hierarchical
//              pre-norm transformer stages whose width grows per embed_dims,
//              learned bias-free residual projection on the block where the
//              width changes, global average pooling over patch tokens.
//   MinimalVit patch embedding + learned positional table + class token,
//              uniform-width blocks, class-token readout.
//   Abmil      per-patch two-layer MLP encoder, gated attention pooling.
//   TransMil   per-patch embedding + class token, exact multi-head
//              self-attention over instances, class-token readout.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "permubench/tensor.hpp"

namespace permubench {

enum class Arch { kZachVit, kMinimalVit, kAbmil, kTransMil };

inline constexpr Arch kAllArchs[] = {Arch::kAbmil, Arch::kMinimalVit,
                                     Arch::kTransMil, Arch::kZachVit};

std::string_view arch_id(Arch arch);            // "zachvit", ...
std::string_view arch_display_name(Arch arch);  // "ZACH-ViT", ...
Arch parse_arch(std::string_view text);         // accepts id or display name

constexpr std::int64_t kParameterBudget = 1'000'000;

struct ModelSpec {
  Arch arch = Arch::kZachVit;
  int height = 28;
  int width = 28;
  int channels = 3;
  int num_classes = 2;
  int patch_size = 4;
  // ZachVit: width per stage. MinimalVit/TransMil: one width. Abmil: encoder
  // layer widths.
  std::vector<int> embed_dims;
  // ZachVit: blocks per stage. MinimalVit/TransMil: total blocks.
  int depth = 2;
  int heads = 4;
  double mlp_ratio = 2.0;
  int attention_dim = 64;  // Abmil gate width
  int seed = 0;

  int num_patches() const {
    return (height / patch_size) * (width / patch_size);
  }
  int patch_dim() const { return patch_size * patch_size * channels; }

  // Throws SpecError on inconsistent geometry or widths.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

// Budget-compliant defaults for 28x28x3 inputs.
ModelSpec default_spec(Arch arch, int num_classes);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(std::string_view text);

template <typename T>
struct ModelParamsT {
  std::map<std::string, TensorT<T>> tensors;

  const TensorT<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const {
    return tensors.count(name) != 0;
  }
  std::vector<std::string> names() const;

  // Independent copy (training mutates its own).
  ModelParamsT clone() const;

  template <typename U>
  ModelParamsT<U> cast() const {
    ModelParamsT<U> out;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>());
    return out;
  }

  void set_requires_grad(bool value);
};

using ModelParams = ModelParamsT<float>;
using ModelParams64 = ModelParamsT<double>;

// Deterministic initialization, all normals truncated to +-2 sigma: patch
// embeddings, residual projections and every Abmil layer ~ N(0, 1/fan_in);
// other weights and tokens ~ N(0, 0.02); biases 0, layer-norm gamma 1 /
// beta 0. Throws SpecError when the
// instantiated parameter count reaches kParameterBudget.
ModelParams build(const ModelSpec& spec, std::uint64_t init_seed);

template <typename T>
std::int64_t count_params(const ModelParamsT<T>& params);

struct ForwardOptions {
  // Permutation applied to the patch-token axis right after the per-patch
  // embedding; empty means identity.
  std::span<const std::int64_t> token_order;
  // MinimalVit only: read out the mean of patch tokens instead of the class
  // token (ablation used to show where order sensitivity comes from).
  bool pooled_readout = false;
  // MinimalVit only: skip the positional table.
  bool drop_positional = false;
};

// images: [batch, height, width, channels]; throws SpecError when the
// spatial size is not divisible by patch_size.
template <typename T>
TensorT<T> forward(const ModelSpec& spec, const ModelParamsT<T>& params,
                   const TensorT<T>& images, const ForwardOptions& options = {});

template <typename T>
TensorT<T> forward_zachvit(const ModelSpec& spec, const ModelParamsT<T>& params,
                           const TensorT<T>& images,
                           const ForwardOptions& options = {});
template <typename T>
TensorT<T> forward_minimalvit(const ModelSpec& spec,
                              const ModelParamsT<T>& params,
                              const TensorT<T>& images,
                              const ForwardOptions& options = {});
template <typename T>
TensorT<T> forward_abmil(const ModelSpec& spec, const ModelParamsT<T>& params,
                         const TensorT<T>& images,
                         const ForwardOptions& options = {});
template <typename T>
TensorT<T> forward_transmil(const ModelSpec& spec,
                            const ModelParamsT<T>& params,
                            const TensorT<T>& images,
                            const ForwardOptions& options = {});

// Gated-attention weights [batch, num_patches] of an Abmil model.
template <typename T>
TensorT<T> abmil_attention(const ModelSpec& spec, const ModelParamsT<T>& params,
                           const TensorT<T>& images,
                           const ForwardOptions& options = {});

// Binary container: "PBPARAMS" magic, u32 version, u32-length JSON manifest
// of the ModelSpec, u32 record count, then per record u32 name length, name
// bytes, u32 rank, i64 dims, float32 values. All integers and floats are
// little-endian.
void save_params(const std::filesystem::path& path, const ModelSpec& spec,
                 const ModelParams& params);
std::pair<ModelSpec, ModelParams> load_params(const std::filesystem::path& path);

// Copies values from `source` into `target`; names must match exactly.
void load_into(ModelParams& target, const ModelParams& source);

}  // namespace permubench
