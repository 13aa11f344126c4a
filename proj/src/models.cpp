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

#include "permubench/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "permubench/error.hpp"
#include "permubench/ops.hpp"
#include "permubench/rng.hpp"

namespace permubench {

std::string_view arch_id(Arch arch) {
  switch (arch) {
    case Arch::kZachVit: return "zachvit";
    case Arch::kMinimalVit: return "minimalvit";
    case Arch::kAbmil: return "abmil";
    case Arch::kTransMil: return "transmil";
  }
  return "unknown";
}

std::string_view arch_display_name(Arch arch) {
  switch (arch) {
    case Arch::kZachVit: return "ZACH-ViT";
    case Arch::kMinimalVit: return "Minimal-ViT";
    case Arch::kAbmil: return "ABMIL";
    case Arch::kTransMil: return "TransMIL";
  }
  return "unknown";
}

Arch parse_arch(std::string_view text) {
  for (Arch a : kAllArchs) {
    if (text == arch_id(a) || text == arch_display_name(a)) return a;
  }
  throw SpecError("unknown model '" + std::string(text) + "'");
}

void ModelSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw SpecError(std::string(arch_id(arch)) + " spec: " + what);
  };
  if (height <= 0 || width <= 0 || channels <= 0) fail("non-positive input size");
  if (patch_size <= 0) fail("patch_size must be positive");
  if (height % patch_size || width % patch_size) {
    fail("input " + std::to_string(height) + "x" + std::to_string(width) +
         " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (embed_dims.empty()) fail("embed_dims is empty");
  for (int d : embed_dims) {
    if (d <= 0) fail("embed_dims must be positive");
  }
  if (depth < 1) fail("depth must be at least 1");
  if (mlp_ratio <= 0) fail("mlp_ratio must be positive");
  if (arch == Arch::kAbmil) {
    if (attention_dim <= 0) fail("attention_dim must be positive");
    return;
  }
  if (heads < 1) fail("heads must be at least 1");
  if (arch != Arch::kZachVit && embed_dims.size() != 1) {
    fail("expects exactly one embedding width");
  }
  for (int d : embed_dims) {
    if (d % heads) {
      fail("width " + std::to_string(d) + " not divisible by " +
           std::to_string(heads) + " heads");
    }
  }
}

ModelSpec default_spec(Arch arch, int num_classes) {
  ModelSpec spec;
  spec.arch = arch;
  spec.num_classes = num_classes;
  switch (arch) {
    case Arch::kZachVit:
      spec.embed_dims = {48, 96, 144};
      spec.depth = 2;
      break;
    case Arch::kMinimalVit:
      spec.embed_dims = {96};
      spec.depth = 6;
      break;
    case Arch::kAbmil:
      spec.embed_dims = {128, 128};
      spec.depth = 1;
      spec.attention_dim = 64;
      break;
    case Arch::kTransMil:
      spec.embed_dims = {96};
      spec.depth = 4;
      break;
  }
  return spec;
}

namespace {

nlohmann::json spec_json(const ModelSpec& s) {
  return {{"arch", arch_id(s.arch)},     {"height", s.height},
          {"width", s.width},            {"channels", s.channels},
          {"num_classes", s.num_classes}, {"patch_size", s.patch_size},
          {"embed_dims", s.embed_dims},  {"depth", s.depth},
          {"heads", s.heads},            {"mlp_ratio", s.mlp_ratio},
          {"attention_dim", s.attention_dim}, {"seed", s.seed}};
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec) {
  return spec_json(spec).dump();
}

ModelSpec spec_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model spec manifest: ") + e.what());
  }
  ModelSpec s = default_spec(parse_arch(j.at("arch").get<std::string>()),
                             j.value("num_classes", 2));
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.channels = j.value("channels", s.channels);
  s.patch_size = j.value("patch_size", s.patch_size);
  s.embed_dims = j.value("embed_dims", s.embed_dims);
  s.depth = j.value("depth", s.depth);
  s.heads = j.value("heads", s.heads);
  s.mlp_ratio = j.value("mlp_ratio", s.mlp_ratio);
  s.attention_dim = j.value("attention_dim", s.attention_dim);
  s.seed = j.value("seed", s.seed);
  return s;
}

template <typename T>
const TensorT<T>& ModelParamsT<T>::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw SpecError("missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
std::vector<std::string> ModelParamsT<T>::names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tensors) out.push_back(name);
  return out;
}

template <typename T>
ModelParamsT<T> ModelParamsT<T>::clone() const {
  ModelParamsT out;
  for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.detach());
  return out;
}

template <typename T>
void ModelParamsT<T>::set_requires_grad(bool value) {
  for (auto& [name, t] : tensors) t.set_requires_grad(value);
}

template <typename T>
std::int64_t count_params(const ModelParamsT<T>& params) {
  std::int64_t total = 0;
  for (const auto& [name, t] : params.tensors) total += t.numel();
  return total;
}

namespace {

constexpr double kInitStd = 0.02;

class ParamBuilder {
 public:
  explicit ParamBuilder(std::uint64_t seed) : rng_(seed) {}

  void normal(const std::string& name, Shape shape, double stddev = kInitStd) {
    std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<float>(rng_.truncated_normal(stddev));
    put(name, std::move(shape), std::move(v));
  }
  void constant(const std::string& name, Shape shape, float value) {
    std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)), value);
    put(name, std::move(shape), std::move(v));
  }
  void linear(const std::string& prefix, int in, int out, bool bias = true) {
    normal(prefix + ".weight", {in, out});
    if (bias) constant(prefix + ".bias", {out}, 0.0f);
  }
  // Variance-preserving scale 1/sqrt(in), for layers on the main signal
  // path outside transformer blocks.
  void fan_in_linear(const std::string& prefix, int in, int out, bool bias = true) {
    normal(prefix + ".weight", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
    if (bias) constant(prefix + ".bias", {out}, 0.0f);
  }
  void norm(const std::string& prefix, int width) {
    constant(prefix + ".weight", {width}, 1.0f);
    constant(prefix + ".bias", {width}, 0.0f);
  }
  void block(const std::string& prefix, int in, int out, double mlp_ratio) {
    norm(prefix + ".norm1", in);
    for (const char* proj : {"q_proj", "k_proj", "v_proj", "out_proj"}) {
      linear(prefix + ".attn." + proj, in, in);
    }
    norm(prefix + ".norm2", in);
    const int hidden = static_cast<int>(std::lround(mlp_ratio * out));
    linear(prefix + ".mlp.fc1", in, hidden);
    linear(prefix + ".mlp.fc2", hidden, out);
    if (in != out) fan_in_linear(prefix + ".residual_proj", in, out, false);
  }

  ModelParams take() { return std::move(params_); }

 private:
  void put(const std::string& name, Shape shape, std::vector<float> values) {
    if (!params_.tensors.emplace(name, Tensor(std::move(shape), std::move(values)))
             .second) {
      throw SpecError("duplicate parameter '" + name + "'");
    }
  }

  Xoshiro256StarStar rng_;
  ModelParams params_;
};

std::string block_name(int index) { return "blocks." + std::to_string(index); }

}  // namespace

ModelParams build(const ModelSpec& spec, std::uint64_t init_seed) {
  spec.validate();
  ParamBuilder b(derive_seed(init_seed, arch_id(spec.arch), "init"));
  const int patch_dim = spec.patch_dim();
  const int classes = spec.num_classes;
  switch (spec.arch) {
    case Arch::kZachVit: {
      const auto& dims = spec.embed_dims;
      b.fan_in_linear("patch_embed", patch_dim, dims[0]);
      int index = 0;
      for (std::size_t s = 0; s < dims.size(); ++s) {
        for (int j = 0; j < spec.depth; ++j) {
          const int in = (j == 0 && s > 0) ? dims[s - 1] : dims[s];
          b.block(block_name(index++), in, dims[s], spec.mlp_ratio);
        }
      }
      b.norm("norm", dims.back());
      b.linear("head", dims.back(), classes);
      break;
    }
    case Arch::kMinimalVit: {
      const int d = spec.embed_dims[0];
      b.fan_in_linear("patch_embed", patch_dim, d);
      b.normal("cls_token", {1, d});
      b.normal("pos_embed", {spec.num_patches() + 1, d});
      for (int i = 0; i < spec.depth; ++i) b.block(block_name(i), d, d, spec.mlp_ratio);
      b.norm("norm", d);
      b.linear("head", d, classes);
      break;
    }
    case Arch::kAbmil: {
      int in = patch_dim;
      for (std::size_t i = 0; i < spec.embed_dims.size(); ++i) {
        b.fan_in_linear("encoder.fc" + std::to_string(i + 1), in, spec.embed_dims[i]);
        in = spec.embed_dims[i];
      }
      b.fan_in_linear("attention.V", in, spec.attention_dim);
      b.fan_in_linear("attention.U", in, spec.attention_dim);
      b.fan_in_linear("attention.w", spec.attention_dim, 1, false);
      b.fan_in_linear("head", in, classes);
      break;
    }
    case Arch::kTransMil: {
      const int d = spec.embed_dims[0];
      b.fan_in_linear("patch_embed", patch_dim, d);
      b.normal("cls_token", {1, d});
      for (int i = 0; i < spec.depth; ++i) b.block(block_name(i), d, d, spec.mlp_ratio);
      b.norm("norm", d);
      b.linear("head", d, classes);
      break;
    }
  }
  ModelParams params = b.take();
  const std::int64_t count = count_params(params);
  if (count >= kParameterBudget) {
    throw SpecError(std::string(arch_id(spec.arch)) + " has " +
                    std::to_string(count) + " parameters, budget is below " +
                    std::to_string(kParameterBudget));
  }
  return params;
}

namespace {

template <typename T>
TensorT<T> patchify(const ModelSpec& spec, const TensorT<T>& images) {
  if (images.rank() != 4) {
    throw DimensionError("images must be [batch, height, width, channels], got " +
                         shape_str(images.shape()));
  }
  const std::int64_t batch = images.shape()[0];
  const std::int64_t h = images.shape()[1], w = images.shape()[2];
  const std::int64_t c = images.shape()[3];
  const std::int64_t p = spec.patch_size;
  if (h % p || w % p) {
    throw SpecError("image " + std::to_string(h) + "x" + std::to_string(w) +
                    " not divisible by patch_size " + std::to_string(p));
  }
  if (h != spec.height || w != spec.width || c != spec.channels) {
    throw DimensionError("images " + shape_str(images.shape()) +
                         " do not match model input " +
                         std::to_string(spec.height) + "x" +
                         std::to_string(spec.width) + "x" +
                         std::to_string(spec.channels));
  }
  auto x = ops::reshape(images, {batch, h / p, p, w / p, p, c});
  x = ops::transpose(x, 2, 3);
  x = ops::reshape(x, {batch, (h / p) * (w / p), p * p * c});
  // Pixels arrive in [0,1]; the models see them centred as (x - 0.5) / 0.5.
  return ops::broadcast_add(ops::scale(x, T(2)), TensorT<T>::full({p * p * c}, T(-1)));
}

template <typename T>
TensorT<T> reorder(const TensorT<T>& tokens, const ForwardOptions& options) {
  if (options.token_order.empty()) return tokens;
  if (static_cast<std::int64_t>(options.token_order.size()) != tokens.shape()[1]) {
    throw DimensionError("token_order has " +
                         std::to_string(options.token_order.size()) +
                         " entries for " + std::to_string(tokens.shape()[1]) +
                         " tokens");
  }
  return ops::gather(tokens, 1, options.token_order);
}

template <typename T>
TensorT<T> dense(const ModelParamsT<T>& p, const std::string& prefix,
                 const TensorT<T>& x) {
  const std::string bias = prefix + ".bias";
  return ops::linear(x, p.at(prefix + ".weight"),
                     p.contains(bias) ? p.at(bias) : TensorT<T>());
}

template <typename T>
TensorT<T> norm(const ModelParamsT<T>& p, const std::string& prefix,
                const TensorT<T>& x) {
  return ops::layernorm(x, p.at(prefix + ".weight"), p.at(prefix + ".bias"));
}

// Multi-head self-attention over axis 1 of x [batch, tokens, width].
template <typename T>
TensorT<T> attention(const ModelParamsT<T>& p, const std::string& prefix,
                     const TensorT<T>& x, int heads) {
  const std::int64_t b = x.shape()[0], n = x.shape()[1], d = x.shape()[2];
  const std::int64_t dh = d / heads;
  auto split = [&](const TensorT<T>& t) {
    auto r = ops::reshape(t, {b, n, heads, dh});
    return ops::reshape(ops::transpose(r, 1, 2), {b * heads, n, dh});
  };
  auto q = split(dense(p, prefix + ".q_proj", x));
  auto k = split(dense(p, prefix + ".k_proj", x));
  auto v = split(dense(p, prefix + ".v_proj", x));
  auto scores = ops::scale(ops::batched_matmul(q, ops::transpose(k, 1, 2)),
                           static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  auto ctx = ops::batched_matmul(ops::softmax(scores, -1), v);
  ctx = ops::transpose(ops::reshape(ctx, {b, heads, n, dh}), 1, 2);
  return dense(p, prefix + ".out_proj", ops::reshape(ctx, {b, n, d}));
}

// Pre-norm block. When the block changes width, the residual path goes
// through the bias-free residual_proj and the MLP emits the new width.
template <typename T>
TensorT<T> block(const ModelParamsT<T>& p, const std::string& prefix,
                 const TensorT<T>& x, int heads) {
  auto a = ops::add(x, attention(p, prefix + ".attn", norm(p, prefix + ".norm1", x), heads));
  auto h = ops::gelu(dense(p, prefix + ".mlp.fc1", norm(p, prefix + ".norm2", a)));
  auto m = dense(p, prefix + ".mlp.fc2", h);
  const std::string proj = prefix + ".residual_proj";
  auto residual = p.contains(proj + ".weight") ? dense(p, proj, a) : a;
  return ops::add(residual, m);
}

template <typename T>
TensorT<T> prepend_class_token(const ModelParamsT<T>& p, const TensorT<T>& tokens) {
  const std::int64_t b = tokens.shape()[0], d = tokens.shape()[2];
  auto cls = ops::broadcast_add(TensorT<T>::zeros({b, 1, d}), p.at("cls_token"));
  return ops::concat<T>({cls, tokens}, 1);
}

template <typename T>
TensorT<T> class_token_readout(const TensorT<T>& x) {
  const std::int64_t b = x.shape()[0], d = x.shape()[2];
  return ops::reshape(ops::slice(x, 1, 0, 1), {b, d});
}

template <typename T>
TensorT<T> abmil_encode(const ModelSpec& spec, const ModelParamsT<T>& p,
                        const TensorT<T>& images, const ForwardOptions& options) {
  auto h = patchify(spec, images);
  for (std::size_t i = 0; i < spec.embed_dims.size(); ++i) {
    h = ops::relu(dense(p, "encoder.fc" + std::to_string(i + 1), h));
  }
  return reorder(h, options);
}

template <typename T>
TensorT<T> abmil_weights(const ModelParamsT<T>& p, const TensorT<T>& h) {
  const std::int64_t b = h.shape()[0], n = h.shape()[1];
  auto gate = ops::mul(ops::tanh(dense(p, "attention.V", h)),
                       ops::sigmoid(dense(p, "attention.U", h)));
  auto scores = ops::reshape(dense(p, "attention.w", gate), {b, n});
  return ops::softmax(scores, -1);
}

void require_arch(const ModelSpec& spec, Arch arch) {
  if (spec.arch != arch) {
    throw SpecError("spec describes " + std::string(arch_id(spec.arch)) +
                    ", not " + std::string(arch_id(arch)));
  }
}

}  // namespace

template <typename T>
TensorT<T> forward_zachvit(const ModelSpec& spec, const ModelParamsT<T>& p,
                           const TensorT<T>& images,
                           const ForwardOptions& options) {
  require_arch(spec, Arch::kZachVit);
  auto x = reorder(dense(p, "patch_embed", patchify(spec, images)), options);
  const int blocks = spec.depth * static_cast<int>(spec.embed_dims.size());
  for (int i = 0; i < blocks; ++i) x = block(p, block_name(i), x, spec.heads);
  x = norm(p, "norm", x);
  return dense(p, "head", ops::mean_axis(x, 1));
}

template <typename T>
TensorT<T> forward_minimalvit(const ModelSpec& spec, const ModelParamsT<T>& p,
                              const TensorT<T>& images,
                              const ForwardOptions& options) {
  require_arch(spec, Arch::kMinimalVit);
  auto tokens = reorder(dense(p, "patch_embed", patchify(spec, images)), options);
  auto x = prepend_class_token(p, tokens);
  if (!options.drop_positional) x = ops::broadcast_add(x, p.at("pos_embed"));
  for (int i = 0; i < spec.depth; ++i) x = block(p, block_name(i), x, spec.heads);
  x = norm(p, "norm", x);
  TensorT<T> pooled;
  if (options.pooled_readout) {
    pooled = ops::mean_axis(ops::slice(x, 1, 1, x.shape()[1] - 1), 1);
  } else {
    pooled = class_token_readout(x);
  }
  return dense(p, "head", pooled);
}

template <typename T>
TensorT<T> forward_abmil(const ModelSpec& spec, const ModelParamsT<T>& p,
                         const TensorT<T>& images,
                         const ForwardOptions& options) {
  require_arch(spec, Arch::kAbmil);
  auto h = abmil_encode(spec, p, images, options);
  const std::int64_t b = h.shape()[0], n = h.shape()[1], d = h.shape()[2];
  auto weights = ops::reshape(abmil_weights(p, h), {b, 1, n});
  auto bag = ops::reshape(ops::batched_matmul(weights, h), {b, d});
  return dense(p, "head", bag);
}

template <typename T>
TensorT<T> abmil_attention(const ModelSpec& spec, const ModelParamsT<T>& p,
                           const TensorT<T>& images,
                           const ForwardOptions& options) {
  require_arch(spec, Arch::kAbmil);
  return abmil_weights(p, abmil_encode(spec, p, images, options));
}

template <typename T>
TensorT<T> forward_transmil(const ModelSpec& spec, const ModelParamsT<T>& p,
                            const TensorT<T>& images,
                            const ForwardOptions& options) {
  require_arch(spec, Arch::kTransMil);
  auto tokens = ops::relu(dense(p, "patch_embed", patchify(spec, images)));
  auto x = prepend_class_token(p, reorder(tokens, options));
  for (int i = 0; i < spec.depth; ++i) x = block(p, block_name(i), x, spec.heads);
  x = norm(p, "norm", x);
  return dense(p, "head", class_token_readout(x));
}

template <typename T>
TensorT<T> forward(const ModelSpec& spec, const ModelParamsT<T>& params,
                   const TensorT<T>& images, const ForwardOptions& options) {
  switch (spec.arch) {
    case Arch::kZachVit: return forward_zachvit(spec, params, images, options);
    case Arch::kMinimalVit: return forward_minimalvit(spec, params, images, options);
    case Arch::kAbmil: return forward_abmil(spec, params, images, options);
    case Arch::kTransMil: return forward_transmil(spec, params, images, options);
  }
  throw SpecError("unknown architecture");
}

namespace {

constexpr char kMagic[8] = {'P', 'B', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename U>
void write_le(std::ostream& os, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(U));
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(path.string() + ": truncated parameter file");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(U));
  }
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

std::string read_string(std::istream& is, std::uint32_t length,
                        const std::filesystem::path& path) {
  std::string s(length, '\0');
  if (length && !is.read(s.data(), length)) {
    throw FormatError(path.string() + ": truncated parameter file");
  }
  return s;
}

}  // namespace

void save_params(const std::filesystem::path& path, const ModelSpec& spec,
                 const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(os, kFormatVersion);
  const std::string manifest = spec_to_json(spec);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) write_le<std::int64_t>(os, d);
    for (float v : t.data()) write_le<float>(os, v);
  }
  if (!os) throw FormatError("failed writing " + path.string());
}

std::pair<ModelSpec, ModelParams> load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": not a parameter file");
  }
  const auto version = read_le<std::uint32_t>(is, path);
  if (version != kFormatVersion) {
    throw FormatError(path.string() + ": unsupported version " +
                      std::to_string(version));
  }
  ModelSpec spec =
      spec_from_json(read_string(is, read_le<std::uint32_t>(is, path), path));
  const auto count = read_le<std::uint32_t>(is, path);
  ModelParams params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(is, read_le<std::uint32_t>(is, path), path);
    const auto rank = read_le<std::uint32_t>(is, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(read_le<std::int64_t>(is, path));
    }
    std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : values) v = read_le<float>(is, path);
    params.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  ModelParams fresh = build(spec, 0);
  load_into(fresh, params);
  return {spec, std::move(fresh)};
}

void load_into(ModelParams& target, const ModelParams& source) {
  for (const auto& [name, t] : source.tensors) {
    if (!target.contains(name)) throw SpecError("unexpected parameter '" + name + "'");
  }
  for (auto& [name, t] : target.tensors) {
    const auto& src = source.at(name);
    if (src.shape() != t.shape()) {
      throw SpecError("parameter '" + name + "' has shape " +
                      shape_str(src.shape()) + ", expected " +
                      shape_str(t.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
}

#define PERMUBENCH_INSTANTIATE_MODELS(T)                                       \
  template struct ModelParamsT<T>;                                             \
  template std::int64_t count_params(const ModelParamsT<T>&);                  \
  template TensorT<T> forward(const ModelSpec&, const ModelParamsT<T>&,        \
                              const TensorT<T>&, const ForwardOptions&);       \
  template TensorT<T> forward_zachvit(const ModelSpec&, const ModelParamsT<T>&, \
                                      const TensorT<T>&, const ForwardOptions&); \
  template TensorT<T> forward_minimalvit(const ModelSpec&,                     \
                                         const ModelParamsT<T>&,               \
                                         const TensorT<T>&,                    \
                                         const ForwardOptions&);               \
  template TensorT<T> forward_abmil(const ModelSpec&, const ModelParamsT<T>&,  \
                                    const TensorT<T>&, const ForwardOptions&); \
  template TensorT<T> forward_transmil(const ModelSpec&,                       \
                                       const ModelParamsT<T>&,                 \
                                       const TensorT<T>&,                      \
                                       const ForwardOptions&);                 \
  template TensorT<T> abmil_attention(const ModelSpec&, const ModelParamsT<T>&, \
                                      const TensorT<T>&, const ForwardOptions&);

PERMUBENCH_INSTANTIATE_MODELS(float)
PERMUBENCH_INSTANTIATE_MODELS(double)

#undef PERMUBENCH_INSTANTIATE_MODELS

}  // namespace permubench
