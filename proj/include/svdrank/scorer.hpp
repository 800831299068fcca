// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Scalar scoring networks with exact reverse-mode gradients.
//
// Two architectures share one parameter container:
//   pooled_fc  pooled feature -> FC(hidden) -> ReLU -> dropout -> FC(1).
//              hidden_dim == 0 gives a plain linear scorer.
//   conv_pool  257-bin spectrogram frames -> three stride-2 temporal
//              convolutions (16/32/64 channels, kernel 3, circular padding,
//              ReLU) -> mean over time -> FC(32) -> ReLU -> dropout -> FC(1).
//
// All arithmetic is double precision. Dropout is inverted dropout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "svdrank/binary_io.hpp"
#include "svdrank/error.hpp"
#include "svdrank/features.hpp"
#include "svdrank/rng.hpp"

namespace svdrank {

enum class Architecture : std::uint8_t { pooled_fc = 0, conv_pool = 1 };

inline std::string_view arch_name(Architecture a) {
  return a == Architecture::pooled_fc ? "pooled_fc" : "conv_pool";
}

inline Architecture parse_arch(std::string_view s) {
  if (s == "pooled_fc") return Architecture::pooled_fc;
  if (s == "conv_pool") return Architecture::conv_pool;
  throw ConfigError("unknown architecture \"" + std::string(s) +
                    "\" (expected pooled_fc or conv_pool)");
}

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  bool operator==(const Tensor&) const = default;
};

using TensorList = std::vector<Tensor>;

inline constexpr double kDefaultDropout = 0.3;

struct ScorerParameters {
  Architecture arch = Architecture::pooled_fc;
  TensorList tensors;
  // Bumped on every in-place update; forward caches remember the value they
  // were computed with.
  std::uint64_t generation = 0;

  const Tensor& get(std::string_view name) const {
    for (const Tensor& t : tensors)
      if (t.name == name) return t;
    throw ConfigError("model has no tensor \"" + std::string(name) + "\"");
  }
  bool has(std::string_view name) const {
    return std::any_of(tensors.begin(), tensors.end(),
                       [&](const Tensor& t) { return t.name == name; });
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors) n += t.data.size();
    return n;
  }
  bool operator==(const ScorerParameters& o) const {
    return arch == o.arch && tensors == o.tensors;
  }
};

inline TensorList zeros_like(const TensorList& ts) {
  TensorList out = ts;
  for (Tensor& t : out) std::fill(t.data.begin(), t.data.end(), 0.0);
  return out;
}

// acc += scale * g
inline void accumulate(TensorList& acc, const TensorList& g, double scale = 1.0) {
  for (std::size_t k = 0; k < acc.size(); ++k)
    for (std::size_t i = 0; i < acc[k].data.size(); ++i)
      acc[k].data[i] += scale * g[k].data[i];
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline Tensor xavier_normal(std::string name, std::vector<std::size_t> shape,
                            std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t{std::move(name), std::move(shape), {}};
  const std::size_t n = std::accumulate(t.shape.begin(), t.shape.end(),
                                        std::size_t{1}, std::multiplies<>());
  std::normal_distribution<double> dist(
      0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  t.data.resize(n);
  for (double& v : t.data) v = dist(rng);
  return t;
}

inline Tensor zeros(std::string name, std::vector<std::size_t> shape) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(),
                                        std::size_t{1}, std::multiplies<>());
  return Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
}

}  // namespace detail

inline constexpr std::size_t kConvChannels[3] = {16, 32, 64};
inline constexpr std::size_t kConvKernel = 3;
inline constexpr std::size_t kConvHead = 32;

// Weights are Xavier-normal, biases zero. Weight matrices are stored
// row-major as [out, in].
inline ScorerParameters init_pooled_fc(std::size_t input_dim = 768,
                                       std::size_t hidden_dim = 256,
                                       std::uint64_t seed = 0) {
  if (input_dim == 0) throw ConfigError("pooled_fc input_dim must be >= 1");
  Rng rng = make_rng(seed, 0x11);
  ScorerParameters p;
  p.arch = Architecture::pooled_fc;
  if (hidden_dim == 0) {
    p.tensors.push_back(detail::xavier_normal("out.weight", {1, input_dim}, input_dim, 1, rng));
    p.tensors.push_back(detail::zeros("out.bias", {1}));
    return p;
  }
  p.tensors.push_back(detail::xavier_normal("fc1.weight", {hidden_dim, input_dim},
                                            input_dim, hidden_dim, rng));
  p.tensors.push_back(detail::zeros("fc1.bias", {hidden_dim}));
  p.tensors.push_back(detail::xavier_normal("out.weight", {1, hidden_dim}, hidden_dim, 1, rng));
  p.tensors.push_back(detail::zeros("out.bias", {1}));
  return p;
}

// Convolution weights are stored as [kernel, out, in].
inline ScorerParameters init_conv_pool(std::uint64_t seed = 0) {
  Rng rng = make_rng(seed, 0x12);
  ScorerParameters p;
  p.arch = Architecture::conv_pool;
  std::size_t in = kBins;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t out = kConvChannels[l];
    const std::string pre = "conv" + std::to_string(l + 1);
    p.tensors.push_back(detail::xavier_normal(pre + ".weight", {kConvKernel, out, in},
                                              in * kConvKernel, out * kConvKernel, rng));
    p.tensors.push_back(detail::zeros(pre + ".bias", {out}));
    in = out;
  }
  p.tensors.push_back(detail::xavier_normal("fc1.weight", {kConvHead, in}, in, kConvHead, rng));
  p.tensors.push_back(detail::zeros("fc1.bias", {kConvHead}));
  p.tensors.push_back(detail::xavier_normal("out.weight", {1, kConvHead}, kConvHead, 1, rng));
  p.tensors.push_back(detail::zeros("out.bias", {1}));
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { train, eval };

// One temporal convolution layer's cached state. Activations are [time, channel].
struct ConvCache {
  std::size_t in_len = 0;
  std::size_t in_ch = 0;
  std::size_t out_len = 0;
  std::size_t out_ch = 0;
  std::vector<double> pre;   // out_len x out_ch
  std::vector<double> post;  // ReLU(pre)
};

struct ForwardCache {
  Architecture arch = Architecture::pooled_fc;
  std::uint64_t generation = 0;
  Mode mode = Mode::eval;
  bool valid = false;

  std::vector<double> input;    // pooled vector, or T x 257 frames
  std::vector<ConvCache> conv;  // conv_pool only
  std::vector<double> pooled;   // conv_pool: mean of last conv output
  std::vector<double> hidden_pre;
  std::vector<double> hidden;   // after ReLU and dropout
  std::vector<double> mask;     // 0 or 1/keep per hidden unit; all 1 in eval

  // Sign pattern of every ReLU pre-activation; used to locate kinks.
  std::vector<std::uint8_t> relu_pattern() const {
    std::vector<std::uint8_t> s;
    for (const ConvCache& c : conv)
      for (double z : c.pre) s.push_back(z > 0.0);
    for (double z : hidden_pre) s.push_back(z > 0.0);
    return s;
  }
};

struct ScorerOutput {
  double score = 0.0;
  ForwardCache cache;
};

using ScorerInput = std::variant<PooledFeature, Spectrogram>;
using FeatureStore = std::unordered_map<std::string, ScorerInput>;

namespace detail {

inline void draw_mask(std::vector<double>& mask, std::size_t n, Mode mode,
                      Rng* rng, double dropout) {
  mask.assign(n, 1.0);
  if (mode == Mode::eval || dropout <= 0.0) return;
  if (!rng) throw ConfigError("train-mode forward needs a dropout RNG");
  const double keep = 1.0 - dropout;
  std::bernoulli_distribution kept(keep);
  for (double& m : mask) m = kept(*rng) ? 1.0 / keep : 0.0;
}

// Dense layer y = W x + b, W row-major [out, in].
inline void dense(const Tensor& w, const Tensor& b, std::span<const double> x,
                  std::vector<double>& y) {
  const std::size_t out = w.shape[0], in = w.shape[1];
  y.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w.data.data() + o * in;
    double acc = b.data[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// dW += dy x^T, db += dy, dx = W^T dy (if requested).
inline void dense_backward(const Tensor& w, std::span<const double> x,
                           std::span<const double> dy, Tensor& dw, Tensor& db,
                           std::vector<double>* dx) {
  const std::size_t out = w.shape[0], in = w.shape[1];
  if (dx) dx->assign(in, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    db.data[o] += g;
    double* drow = dw.data.data() + o * in;
    const double* row = w.data.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
    if (dx)
      for (std::size_t i = 0; i < in; ++i) (*dx)[i] += g * row[i];
  }
}

// Source frame for output step t and kernel tap k (stride 2, centred,
// circular boundary).
inline std::size_t conv_src(std::size_t t, std::size_t k, std::size_t len) {
  const std::size_t raw = 2 * t + k + len - 1;  // +len keeps it non-negative
  return raw % len;
}

inline void conv_forward(const Tensor& w, const Tensor& b, std::span<const double> in,
                         std::size_t in_len, ConvCache& c) {
  const std::size_t out_ch = w.shape[1], in_ch = w.shape[2];
  c.in_len = in_len;
  c.in_ch = in_ch;
  c.out_len = (in_len + 1) / 2;
  c.out_ch = out_ch;
  c.pre.assign(c.out_len * out_ch, 0.0);
  for (std::size_t t = 0; t < c.out_len; ++t) {
    double* z = c.pre.data() + t * out_ch;
    for (std::size_t o = 0; o < out_ch; ++o) z[o] = b.data[o];
    for (std::size_t k = 0; k < kConvKernel; ++k) {
      const double* x = in.data() + conv_src(t, k, in_len) * in_ch;
      const double* wk = w.data.data() + k * out_ch * in_ch;
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double* row = wk + o * in_ch;
        double acc = 0.0;
        for (std::size_t i = 0; i < in_ch; ++i) acc += row[i] * x[i];
        z[o] += acc;
      }
    }
  }
  c.post.resize(c.pre.size());
  for (std::size_t i = 0; i < c.pre.size(); ++i) c.post[i] = std::max(0.0, c.pre[i]);
}

// `dpre` is the gradient w.r.t. the layer's pre-activations.
inline void conv_backward(const Tensor& w, std::span<const double> in, const ConvCache& c,
                          std::span<const double> dpre, Tensor& dw, Tensor& db,
                          std::vector<double>* din) {
  const std::size_t out_ch = c.out_ch, in_ch = c.in_ch;
  if (din) din->assign(c.in_len * in_ch, 0.0);
  for (std::size_t t = 0; t < c.out_len; ++t) {
    const double* g = dpre.data() + t * out_ch;
    for (std::size_t o = 0; o < out_ch; ++o) db.data[o] += g[o];
    for (std::size_t k = 0; k < kConvKernel; ++k) {
      const std::size_t src = conv_src(t, k, c.in_len);
      const double* x = in.data() + src * in_ch;
      double* dx = din ? din->data() + src * in_ch : nullptr;
      const double* wk = w.data.data() + k * out_ch * in_ch;
      double* dwk = dw.data.data() + k * out_ch * in_ch;
      for (std::size_t o = 0; o < out_ch; ++o) {
        if (g[o] == 0.0) continue;
        double* drow = dwk + o * in_ch;
        for (std::size_t i = 0; i < in_ch; ++i) drow[i] += g[o] * x[i];
        if (dx) {
          const double* row = wk + o * in_ch;
          for (std::size_t i = 0; i < in_ch; ++i) dx[i] += g[o] * row[i];
        }
      }
    }
  }
}

inline void check_tensor(const Tensor& t, std::vector<std::size_t> shape) {
  if (t.shape != shape)
    throw ConfigError("tensor \"" + t.name + "\" has inconsistent shape");
}

inline std::size_t tensor_index(const ScorerParameters& p, std::string_view name) {
  for (std::size_t k = 0; k < p.tensors.size(); ++k)
    if (p.tensors[k].name == name) return k;
  throw ConfigError("model has no tensor \"" + std::string(name) + "\"");
}

}  // namespace detail

// Pooled-feature forward pass. `dropout_rng` is only consulted in train mode.
inline ScorerOutput forward(const ScorerParameters& p, std::span<const double> x,
                            Mode mode, Rng* dropout_rng = nullptr,
                            double dropout = kDefaultDropout) {
  if (p.arch != Architecture::pooled_fc)
    throw ConfigError("conv_pool model expects a spectrogram input");
  ScorerOutput out;
  ForwardCache& c = out.cache;
  c.arch = p.arch;
  c.generation = p.generation;
  c.mode = mode;
  c.input.assign(x.begin(), x.end());
  const Tensor& w_out = p.get("out.weight");
  const Tensor& b_out = p.get("out.bias");
  std::vector<double> y;
  if (p.has("fc1.weight")) {
    const Tensor& w1 = p.get("fc1.weight");
    if (w1.shape[1] != x.size())
      throw ConfigError("input has dimension " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(w1.shape[1]));
    detail::dense(w1, p.get("fc1.bias"), x, c.hidden_pre);
    detail::draw_mask(c.mask, c.hidden_pre.size(), mode, dropout_rng, dropout);
    c.hidden.resize(c.hidden_pre.size());
    for (std::size_t h = 0; h < c.hidden.size(); ++h)
      c.hidden[h] = std::max(0.0, c.hidden_pre[h]) * c.mask[h];
    detail::dense(w_out, b_out, c.hidden, y);
  } else {
    if (w_out.shape[1] != x.size())
      throw ConfigError("input has dimension " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(w_out.shape[1]));
    detail::dense(w_out, b_out, x, y);
  }
  out.score = y[0];
  c.valid = true;
  return out;
}

inline ScorerOutput forward(const ScorerParameters& p, const PooledFeature& f,
                            Mode mode, Rng* dropout_rng = nullptr,
                            double dropout = kDefaultDropout) {
  std::vector<double> x(f.values.begin(), f.values.end());
  return forward(p, std::span<const double>(x), mode, dropout_rng, dropout);
}

inline ScorerOutput forward(const ScorerParameters& p, const Spectrogram& s,
                            Mode mode, Rng* dropout_rng = nullptr,
                            double dropout = kDefaultDropout) {
  if (p.arch != Architecture::conv_pool)
    throw ConfigError("pooled_fc model expects a pooled feature input");
  if (s.frames == 0 || s.data.size() != s.frames * kBins)
    throw ConfigError("spectrogram must have T >= 1 frames of 257 bins");
  ScorerOutput out;
  ForwardCache& c = out.cache;
  c.arch = p.arch;
  c.generation = p.generation;
  c.mode = mode;
  c.input.assign(s.data.begin(), s.data.end());

  std::span<const double> act(c.input);
  std::size_t len = s.frames;
  std::size_t in_ch = kBins;
  c.conv.resize(3);
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string pre = "conv" + std::to_string(l + 1);
    const Tensor& w = p.get(pre + ".weight");
    detail::check_tensor(w, {kConvKernel, kConvChannels[l], in_ch});
    detail::conv_forward(w, p.get(pre + ".bias"), act, len, c.conv[l]);
    act = c.conv[l].post;
    len = c.conv[l].out_len;
    in_ch = c.conv[l].out_ch;
  }
  c.pooled.assign(in_ch, 0.0);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t ch = 0; ch < in_ch; ++ch) c.pooled[ch] += act[t * in_ch + ch];
  for (double& v : c.pooled) v /= static_cast<double>(len);

  detail::dense(p.get("fc1.weight"), p.get("fc1.bias"), c.pooled, c.hidden_pre);
  detail::draw_mask(c.mask, c.hidden_pre.size(), mode, dropout_rng, dropout);
  c.hidden.resize(c.hidden_pre.size());
  for (std::size_t h = 0; h < c.hidden.size(); ++h)
    c.hidden[h] = std::max(0.0, c.hidden_pre[h]) * c.mask[h];
  std::vector<double> y;
  detail::dense(p.get("out.weight"), p.get("out.bias"), c.hidden, y);
  out.score = y[0];
  c.valid = true;
  return out;
}

inline ScorerOutput forward(const ScorerParameters& p, const ScorerInput& x,
                            Mode mode, Rng* dropout_rng = nullptr,
                            double dropout = kDefaultDropout) {
  return std::visit(
      [&](const auto& in) { return forward(p, in, mode, dropout_rng, dropout); }, x);
}

// Gradient of (loss_adjoint * score) w.r.t. every parameter, reusing the
// dropout mask recorded in `cache`. Accumulates into `grads`, which must be
// shaped like p.tensors.
inline void accumulate_gradients(const ScorerParameters& p, double loss_adjoint,
                                 const ForwardCache& c, TensorList& grads) {
  if (!c.valid || c.arch != p.arch || c.generation != p.generation)
    throw ConfigError("stale forward cache: parameters changed since forward()");
  if (grads.size() != p.tensors.size())
    throw ConfigError("gradient buffer does not match model");
  if (loss_adjoint == 0.0) return;
  auto grad = [&](std::string_view name) -> Tensor& {
    return grads[detail::tensor_index(p, name)];
  };
  const Tensor& w_out = p.get("out.weight");
  const std::vector<double> dy{loss_adjoint};

  if (p.arch == Architecture::pooled_fc && !p.has("fc1.weight")) {
    detail::dense_backward(w_out, c.input, dy, grad("out.weight"), grad("out.bias"), nullptr);
    return;
  }

  std::vector<double> dhidden;
  detail::dense_backward(w_out, c.hidden, dy, grad("out.weight"), grad("out.bias"), &dhidden);
  for (std::size_t h = 0; h < dhidden.size(); ++h)
    dhidden[h] = c.hidden_pre[h] > 0.0 ? dhidden[h] * c.mask[h] : 0.0;

  if (p.arch == Architecture::pooled_fc) {
    detail::dense_backward(p.get("fc1.weight"), c.input, dhidden, grad("fc1.weight"),
                           grad("fc1.bias"), nullptr);
    return;
  }

  std::vector<double> dpooled;
  detail::dense_backward(p.get("fc1.weight"), c.pooled, dhidden, grad("fc1.weight"),
                         grad("fc1.bias"), &dpooled);
  const ConvCache& last = c.conv.back();
  std::vector<double> dact(last.out_len * last.out_ch);
  for (std::size_t t = 0; t < last.out_len; ++t)
    for (std::size_t ch = 0; ch < last.out_ch; ++ch)
      dact[t * last.out_ch + ch] = dpooled[ch] / static_cast<double>(last.out_len);

  for (std::size_t l = 3; l-- > 0;) {
    const ConvCache& cl = c.conv[l];
    for (std::size_t i = 0; i < dact.size(); ++i)
      if (cl.pre[i] <= 0.0) dact[i] = 0.0;
    std::span<const double> in = l == 0 ? std::span<const double>(c.input)
                                        : std::span<const double>(c.conv[l - 1].post);
    const std::string pre = "conv" + std::to_string(l + 1);
    std::vector<double> din;
    detail::conv_backward(p.get(pre + ".weight"), in, cl, dact, grad(pre + ".weight"),
                          grad(pre + ".bias"), l == 0 ? nullptr : &din);
    dact = std::move(din);
  }
}

inline TensorList gradients(const ScorerParameters& p, double loss_adjoint,
                            const ForwardCache& c) {
  TensorList g = zeros_like(p.tensors);
  accumulate_gradients(p, loss_adjoint, c, g);
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "SVDM", u32 version, u8 architecture, u32 tensor count, then per tensor:
// u32 name length, name bytes, u32 rank, rank x u32 dims, f64 payload.
inline std::string encode_checkpoint(const ScorerParameters& p) {
  binio::Writer w;
  w.bytes("SVDM");
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(p.arch));
  w.u32(static_cast<std::uint32_t>(p.tensors.size()));
  for (const Tensor& t : p.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data) w.f64(v);
  }
  return w.data();
}

inline ScorerParameters decode_checkpoint(binio::Reader r) {
  r.expect_magic("SVDM");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError(r.name() + ": unsupported checkpoint version " + std::to_string(v));
  ScorerParameters p;
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw FormatError(r.name() + ": unknown architecture tag");
  p.arch = static_cast<Architecture>(tag);
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    Tensor t;
    t.name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
      n *= t.shape.back();
    }
    if (r.remaining() < n * 8) throw FormatError(r.name() + ": truncated tensor " + t.name);
    t.data.resize(n);
    for (double& v : t.data) {
      v = r.f64();
      if (!std::isfinite(v)) throw FormatError(r.name() + ": non-finite value in " + t.name);
    }
    p.tensors.push_back(std::move(t));
  }
  r.expect_end();
  return p;
}

inline void save_checkpoint(const ScorerParameters& p, const std::string& path) {
  binio::Writer w;
  w.bytes(encode_checkpoint(p));
  w.save(path);
}

inline ScorerParameters load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::Reader::open(path));
}

}  // namespace svdrank
