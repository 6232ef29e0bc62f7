// Copyright 2026 The QANA Authors
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

// The QANA network: four Ghost/SA-ECA/residual blocks, a bounded
// spike-compatible head with squeeze-and-excitation gating, and a linear
// class projection. Forward and backward passes are templated on the scalar
// type so gradient checks can run at 64-bit.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qana/ops.hpp"
#include "qana/params.hpp"

namespace qana {

struct GhostConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  double ratio = 0.5;
  std::size_t ghost_kernel = 3;
  std::vector<float> mask;  // empty: all ones

  std::size_t base_channels() const {
    return static_cast<std::size_t>(std::lround(ratio * static_cast<double>(out_channels)));
  }
  std::size_t ghost_channels() const { return out_channels - base_channels(); }

  void validate() const {
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error(Errc::config, "ghost: ratio must lie in (0, 1)");
    if (in_channels == 0 || out_channels == 0) throw Error(Errc::config, "ghost: channel counts must be positive");
    const auto base = base_channels();
    if (base < 1 || base >= out_channels)
      throw Error(Errc::config, "ghost: ratio " + std::to_string(ratio) + " with C=" + std::to_string(out_channels) +
                                    " leaves " + std::to_string(base) + " base channels");
    if (ghost_kernel % 2 == 0) throw Error(Errc::config, "ghost: kernel size must be odd");
    if (!mask.empty() && mask.size() != ghost_channels())
      throw ShapeError("ghost", "mask length", mask.size(), ghost_channels());
  }
};

struct QanaConfig {
  std::size_t input_size = 64;
  std::size_t input_channels = 3;
  std::array<std::size_t, 4> block_channels{32, 64, 128, 256};
  double ghost_ratio = 0.5;
  std::size_t ghost_kernel = 3;
  double dropout = 0.2;
  std::size_t eca_kernel = 3;
  std::size_t se_reduction = 16;
  std::size_t num_classes = 7;
  std::size_t head_channels = 256;
  double bn_momentum = 0.9;
  double bn_eps = 1e-3;

  static constexpr std::size_t num_blocks = 4;

  std::size_t feature_size() const { return input_size >> num_blocks; }
  std::size_t flatten_dim() const { return feature_size() * feature_size() * head_channels; }
  std::size_t se_bottleneck() const { return std::max<std::size_t>(1, head_channels / se_reduction); }
  std::size_t block_input_channels(std::size_t l) const { return l == 0 ? input_channels : block_channels[l - 1]; }

  GhostConfig ghost(std::size_t l) const {
    return GhostConfig{block_input_channels(l), block_channels[l], ghost_ratio, ghost_kernel, {}};
  }

  void validate() const {
    if (input_size != 64) throw Error(Errc::config, "input size must be 64 (4 poolings down to 4x4)");
    if (input_channels == 0 || num_classes < 2 || head_channels == 0 || se_reduction == 0)
      throw Error(Errc::config, "channel/class counts must be positive (num_classes >= 2)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(Errc::config, "dropout must lie in [0, 1)");
    if (eca_kernel % 2 == 0) throw Error(Errc::config, "eca kernel must be odd");
    if (!(bn_eps > 0.0)) throw Error(Errc::config, "bn eps must be > 0");
    for (std::size_t l = 0; l < num_blocks; ++l) ghost(l).validate();
  }

  /// Narrow backbone used for desk-scale runs; head and flatten sizes are
  /// unchanged (4x4x256 -> 4096 -> classes).
  static QanaConfig desk() {
    QanaConfig c;
    c.block_channels = {8, 16, 32, 64};
    return c;
  }

  friend bool operator==(const QanaConfig&, const QanaConfig&) = default;
};

// ---------------------------------------------------------------------------
// layer graph description

enum class LayerKind : std::uint8_t {
  conv1x1,
  depthwise_conv,
  separable_conv,
  concat,
  channel_mask,
  batch_norm,
  relu6,
  dropout,
  sigmoid_gate,
  channel_scale,
  projection,
  identity,
  add,
  maxpool,
  affine,
  bounded_unit,
  global_avg_pool,
  dense,
  relu,
  sigmoid,
  gate_scale,
  flatten,
  custom,
};

inline std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1x1: return "conv1x1";
    case LayerKind::depthwise_conv: return "depthwise_conv";
    case LayerKind::separable_conv: return "separable_conv";
    case LayerKind::concat: return "concat";
    case LayerKind::channel_mask: return "channel_mask";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu6: return "relu6";
    case LayerKind::dropout: return "dropout";
    case LayerKind::sigmoid_gate: return "sigmoid_gate";
    case LayerKind::channel_scale: return "channel_scale";
    case LayerKind::projection: return "projection";
    case LayerKind::identity: return "identity";
    case LayerKind::add: return "add";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::affine: return "affine";
    case LayerKind::bounded_unit: return "bounded_unit";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::gate_scale: return "gate_scale";
    case LayerKind::flatten: return "flatten";
    case LayerKind::custom: return "custom";
  }
  return "unknown";
}

/// Kinds the spiking converter can lower (batch_norm by folding).
constexpr bool is_convertible(LayerKind kind) { return kind != LayerKind::custom; }

struct LayerDesc {
  LayerKind kind;
  std::string name;
  std::vector<std::string> params;
  std::string config;
};

struct ModelSpec {
  std::vector<LayerDesc> layers;
};

inline std::string block_prefix(std::size_t l) { return "block" + std::to_string(l + 1) + "/"; }

inline bool block_has_projection(const QanaConfig& cfg, std::size_t l) {
  return cfg.block_input_channels(l) != cfg.block_channels[l];
}

inline ModelSpec build_model_spec(const QanaConfig& cfg) {
  cfg.validate();
  ModelSpec spec;
  auto push = [&](LayerKind kind, std::string name, std::vector<std::string> params = {}, std::string config = {}) {
    spec.layers.push_back(LayerDesc{kind, std::move(name), std::move(params), std::move(config)});
  };
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    const auto p = block_prefix(l);
    const auto g = cfg.ghost(l);
    const auto ch = std::to_string(cfg.block_channels[l]);
    push(LayerKind::conv1x1, p + "ghost/base", {p + "ghost/base_kernel"}, "out=" + std::to_string(g.base_channels()));
    push(LayerKind::separable_conv, p + "ghost/cheap", {p + "ghost/dw_kernel", p + "ghost/pw_kernel"},
         "k=" + std::to_string(g.ghost_kernel) + " out=" + std::to_string(g.ghost_channels()));
    push(LayerKind::channel_mask, p + "ghost/mask", {p + "ghost/mask"});
    push(LayerKind::concat, p + "ghost/concat", {}, "out=" + ch);
    push(LayerKind::batch_norm, p + "bn", {p + "bn/gamma", p + "bn/beta", p + "bn/mean", p + "bn/var"});
    push(LayerKind::relu6, p + "relu6");
    push(LayerKind::dropout, p + "dropout", {}, "rate=" + std::to_string(cfg.dropout));
    push(LayerKind::depthwise_conv, p + "eca/dw", {p + "eca/dw_kernel"}, "k=" + std::to_string(cfg.eca_kernel));
    push(LayerKind::batch_norm, p + "eca/bn",
         {p + "eca/bn/gamma", p + "eca/bn/beta", p + "eca/bn/mean", p + "eca/bn/var"});
    push(LayerKind::conv1x1, p + "eca/pw", {p + "eca/pw_kernel", p + "eca/pw_bias"});
    push(LayerKind::sigmoid_gate, p + "eca/gate");
    push(LayerKind::channel_scale, p + "alpha", {p + "alpha"});
    if (block_has_projection(cfg, l))
      push(LayerKind::projection, p + "proj", {p + "proj_kernel"});
    else
      push(LayerKind::identity, p + "proj");
    push(LayerKind::add, p + "add");
    push(LayerKind::maxpool, p + "pool", {}, "window=2 stride=2");
  }
  push(LayerKind::separable_conv, "head/sepconv", {"head/dw_kernel", "head/pw_kernel"},
       "k=3 out=" + std::to_string(cfg.head_channels));
  push(LayerKind::batch_norm, "head/bn", {"head/bn/gamma", "head/bn/beta", "head/bn/mean", "head/bn/var"});
  push(LayerKind::affine, "head/affine", {"head/gamma_spk", "head/beta_spk"});
  push(LayerKind::bounded_unit, "head/bounded");
  push(LayerKind::global_avg_pool, "se/pool");
  push(LayerKind::dense, "se/fc1", {"se/w1", "se/b1"});
  push(LayerKind::relu, "se/relu");
  push(LayerKind::dense, "se/fc2", {"se/w2", "se/b2"});
  push(LayerKind::sigmoid, "se/sigmoid");
  push(LayerKind::gate_scale, "se/scale");
  push(LayerKind::flatten, "flatten", {}, "dim=" + std::to_string(cfg.flatten_dim()));
  push(LayerKind::dense, "classifier", {"cls/weight", "cls/bias"});
  for (const auto& layer : spec.layers)
    if (!is_convertible(layer.kind))
      throw Error(Errc::unsupported_layer, "layer '" + layer.name + "' is not convertible");
  return spec;
}

template <class T>
struct QanaModel {
  QanaConfig config;
  ParamStore<T> params;
};

namespace detail {

template <class T>
BasicTensor<T> he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(normal(rng));
  return t;
}

template <class T>
void add_bn(ParamStore<T>& p, const std::string& prefix, std::size_t c) {
  p.add(prefix + "gamma", BasicTensor<T>({c}, T{1}));
  p.add(prefix + "beta", BasicTensor<T>({c}, T{0}));
  p.add(prefix + "mean", BasicTensor<T>({c}, T{0}), false);
  p.add(prefix + "var", BasicTensor<T>({c}, T{1}), false);
}

}  // namespace detail

/// He-normal kernels, identity BN, alpha = 1, all-ones ghost masks.
template <class T>
QanaModel<T> init_model(const QanaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamStore<T> p;
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    const auto pre = block_prefix(l);
    const auto g = cfg.ghost(l);
    const std::size_t cin = g.in_channels, c = g.out_channels, k = g.ghost_kernel, e = cfg.eca_kernel;
    p.add(pre + "ghost/base_kernel", detail::he_normal<T>({1, 1, cin, g.base_channels()}, cin, rng));
    p.add(pre + "ghost/dw_kernel", detail::he_normal<T>({k, k, cin, 1}, k * k, rng));
    p.add(pre + "ghost/pw_kernel", detail::he_normal<T>({1, 1, cin, g.ghost_channels()}, cin, rng));
    p.add(pre + "ghost/mask", BasicTensor<T>({g.ghost_channels()}, T{1}), false);
    detail::add_bn(p, pre + "bn/", c);
    p.add(pre + "eca/dw_kernel", detail::he_normal<T>({e, e, c, 1}, e * e, rng));
    detail::add_bn(p, pre + "eca/bn/", c);
    p.add(pre + "eca/pw_kernel", detail::he_normal<T>({1, 1, c, c}, c, rng));
    p.add(pre + "eca/pw_bias", BasicTensor<T>({c}, T{0}));
    p.add(pre + "alpha", BasicTensor<T>({c}, T{1}));
    if (block_has_projection(cfg, l)) p.add(pre + "proj_kernel", detail::he_normal<T>({1, 1, cin, c}, cin, rng));
  }
  const std::size_t c4 = cfg.block_channels[3], h = cfg.head_channels, b = cfg.se_bottleneck();
  p.add("head/dw_kernel", detail::he_normal<T>({3, 3, c4, 1}, 9, rng));
  p.add("head/pw_kernel", detail::he_normal<T>({1, 1, c4, h}, c4, rng));
  detail::add_bn(p, "head/bn/", h);
  // Start the affine inside the open unit interval so the clamp is not saturated.
  p.add("head/gamma_spk", BasicTensor<T>({h}, T(0.25)));
  p.add("head/beta_spk", BasicTensor<T>({h}, T(0.5)));
  p.add("se/w1", detail::he_normal<T>({b, h}, h, rng));
  p.add("se/b1", BasicTensor<T>({b}, T{0}));
  p.add("se/w2", detail::he_normal<T>({h, b}, b, rng));
  p.add("se/b2", BasicTensor<T>({h}, T{0}));
  p.add("cls/weight", detail::he_normal<T>({cfg.num_classes, cfg.flatten_dim()}, cfg.flatten_dim(), rng));
  p.add("cls/bias", BasicTensor<T>({cfg.num_classes}, T{0}));
  return QanaModel<T>{cfg, std::move(p)};
}

// ---------------------------------------------------------------------------
// forward / backward

template <class T>
struct ForwardContext {
  ops::Mode mode = ops::Mode::infer;
  std::mt19937_64* rng = nullptr;           // dropout source in train mode
  ParamStore<T>* running_stats = nullptr;   // receives BN running-stat updates in train mode
  T bn_momentum = T(0.9);
  T bn_eps = T(1e-3);
};

template <class T>
struct GhostTrace {
  BasicTensor<T> dw_out;
};

template <class T>
struct EcaTrace {
  BasicTensor<T> dw_out;
  ops::BatchNormCache<T> bn;
  BasicTensor<T> bn_out;
  BasicTensor<T> gate;
};

template <class T>
struct BlockTrace {
  BasicTensor<T> input;
  GhostTrace<T> ghost;
  ops::BatchNormCache<T> bn;
  BasicTensor<T> bn_out;
  BasicTensor<T> drop_mask;
  BasicTensor<T> dropped;
  EcaTrace<T> eca;
  BasicTensor<T> eca_out;
  BasicTensor<T> sum;
  std::vector<std::size_t> argmax;
  BasicTensor<T> output;
};

template <class T>
struct HeadTrace {
  BasicTensor<T> input;
  BasicTensor<T> dw_out;
  ops::BatchNormCache<T> bn;
  BasicTensor<T> affine;
  BasicTensor<T> output;
};

template <class T>
struct SeTrace {
  BasicTensor<T> input;
  BasicTensor<T> mean;
  BasicTensor<T> hidden_pre;
  BasicTensor<T> hidden;
  BasicTensor<T> gate;
  BasicTensor<T> output;
};

template <class T>
struct ModelTrace {
  std::array<BlockTrace<T>, QanaConfig::num_blocks> blocks;
  HeadTrace<T> head;
  SeTrace<T> se;
  BasicTensor<T> logits;
};

namespace detail {

template <class T>
BasicTensor<T> bn_forward(const BasicTensor<T>& x, const ParamStore<T>& p, const std::string& prefix,
                          const ForwardContext<T>& ctx, ops::BatchNormCache<T>* cache) {
  const auto gamma = p.values(prefix + "gamma");
  const auto beta = p.values(prefix + "beta");
  if (ctx.mode == ops::Mode::train) {
    std::span<T> rm, rv;
    if (ctx.running_stats) {
      rm = ctx.running_stats->get(prefix + "mean").data();
      rv = ctx.running_stats->get(prefix + "var").data();
    }
    return ops::batch_norm_train(x, gamma, beta, rm, rv, ctx.bn_momentum, ctx.bn_eps, cache);
  }
  return ops::batch_norm_infer(x, gamma, beta, p.values(prefix + "mean"), p.values(prefix + "var"), ctx.bn_eps, cache);
}

template <class T>
void accumulate(ParamStore<T>& grads, const std::string& name, std::span<const T> g) {
  auto& dst = grads.get(name);
  if (dst.size() != g.size()) throw ShapeError("accumulate " + name, "length", g.size(), dst.size());
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <class T>
void accumulate_bn(ParamStore<T>& grads, const std::string& prefix, const ops::BatchNormGrads<T>& g) {
  accumulate<T>(grads, prefix + "gamma", g.dgamma);
  accumulate<T>(grads, prefix + "beta", g.dbeta);
}

}  // namespace detail

/// Concat(pointwise(x), mask * pointwise(depthwise_kxk(x))) along channels.
template <class T>
BasicTensor<T> ghost_forward(const BasicTensor<T>& x, const GhostConfig& cfg, const ParamStore<T>& p,
                             const std::string& prefix, GhostTrace<T>* trace = nullptr) {
  cfg.validate();
  require_rank(x, 4, "ghost_forward");
  if (x.dim(3) != cfg.in_channels) throw ShapeError("ghost_forward", "input channels", x.dim(3), cfg.in_channels);
  const auto& base_kernel = p.get(prefix + "base_kernel");
  if (base_kernel.dim(3) != cfg.base_channels())
    throw ShapeError("ghost_forward", "base kernel output channels", base_kernel.dim(3), cfg.base_channels());
  auto base = ops::conv2d(x, base_kernel);
  auto dw = ops::depthwise_conv2d(x, p.get(prefix + "dw_kernel"));
  auto cheap = ops::conv2d(dw, p.get(prefix + "pw_kernel"));
  std::span<const T> mask = p.values(prefix + "mask");
  std::vector<T> mask_override;
  if (!cfg.mask.empty()) {
    mask_override.assign(cfg.mask.begin(), cfg.mask.end());
    mask = mask_override;
  }
  cheap = ops::scale_channels(cheap, mask);
  if (trace) trace->dw_out = std::move(dw);
  return ops::concat_channels(base, cheap);
}

template <class T>
BasicTensor<T> ghost_backward(const BasicTensor<T>& x, const GhostTrace<T>& trace, const BasicTensor<T>& dy,
                              const GhostConfig& cfg, const ParamStore<T>& p, ParamStore<T>& grads,
                              const std::string& prefix) {
  auto [dbase, dcheap] = ops::split_channels(dy, cfg.base_channels());
  std::span<const T> mask = p.values(prefix + "mask");
  std::vector<T> mask_override;
  if (!cfg.mask.empty()) {
    mask_override.assign(cfg.mask.begin(), cfg.mask.end());
    mask = mask_override;
  }
  dcheap = ops::scale_channels(dcheap, mask);
  auto gb = ops::conv2d_backward(x, p.get(prefix + "base_kernel"), dbase);
  auto gp = ops::conv2d_backward(trace.dw_out, p.get(prefix + "pw_kernel"), dcheap);
  auto gd = ops::depthwise_conv2d_backward(x, p.get(prefix + "dw_kernel"), gp.dx);
  detail::accumulate<T>(grads, prefix + "base_kernel", gb.dkernel.data());
  detail::accumulate<T>(grads, prefix + "pw_kernel", gp.dkernel.data());
  detail::accumulate<T>(grads, prefix + "dw_kernel", gd.dkernel.data());
  ops::add_inplace(gb.dx, gd.dx);
  return std::move(gb.dx);
}

/// sigmoid(pointwise(BN(depthwise_kxk(x)))) * x
template <class T>
BasicTensor<T> sa_eca_forward(const BasicTensor<T>& x, const ParamStore<T>& p, const std::string& prefix,
                              const ForwardContext<T>& ctx = {}, EcaTrace<T>* trace = nullptr) {
  auto dw = ops::depthwise_conv2d(x, p.get(prefix + "dw_kernel"));
  ops::BatchNormCache<T> bn_cache;
  auto bn = detail::bn_forward(dw, p, prefix + "bn/", ctx, trace ? &bn_cache : nullptr);
  auto gate = ops::sigmoid(ops::conv2d(bn, p.get(prefix + "pw_kernel"), p.values(prefix + "pw_bias")));
  auto out = ops::multiply(gate, x);
  if (trace) *trace = EcaTrace<T>{std::move(dw), std::move(bn_cache), std::move(bn), std::move(gate)};
  return out;
}

template <class T>
BasicTensor<T> sa_eca_backward(const BasicTensor<T>& x, const EcaTrace<T>& trace, const BasicTensor<T>& dy,
                               const ParamStore<T>& p, ParamStore<T>& grads, const std::string& prefix) {
  auto dx = ops::multiply(dy, trace.gate);
  const auto dgate = ops::multiply(dy, x);
  const auto dpre = ops::sigmoid_backward(trace.gate, dgate);
  auto gpw = ops::conv2d_backward(trace.bn_out, p.get(prefix + "pw_kernel"), dpre);
  detail::accumulate<T>(grads, prefix + "pw_kernel", gpw.dkernel.data());
  detail::accumulate<T>(grads, prefix + "pw_bias", gpw.dbias);
  auto gbn = ops::batch_norm_backward(gpw.dx, p.values(prefix + "bn/gamma"), trace.bn);
  detail::accumulate_bn(grads, prefix + "bn/", gbn);
  auto gdw = ops::depthwise_conv2d_backward(x, p.get(prefix + "dw_kernel"), gbn.dx);
  detail::accumulate<T>(grads, prefix + "dw_kernel", gdw.dkernel.data());
  ops::add_inplace(dx, gdw.dx);
  return dx;
}

/// MaxPool(alpha * SA-ECA(Dropout(relu6(BN(ghost(x))))) + P x)
template <class T>
BasicTensor<T> qana_block_forward(const BasicTensor<T>& x, std::size_t l, const QanaConfig& cfg,
                                  const ParamStore<T>& p, const ForwardContext<T>& ctx = {},
                                  BlockTrace<T>* trace = nullptr) {
  const auto pre = block_prefix(l);
  const auto gcfg = cfg.ghost(l);
  GhostTrace<T> gt;
  auto ghost = ghost_forward(x, gcfg, p, pre + "ghost/", trace ? &gt : nullptr);
  ops::BatchNormCache<T> bn_cache;
  auto bn = detail::bn_forward(ghost, p, pre + "bn/", ctx, trace ? &bn_cache : nullptr);
  auto act = ops::relu6(bn);
  BasicTensor<T> mask;
  BasicTensor<T> dropped;
  if (ctx.mode == ops::Mode::train && cfg.dropout > 0.0) {
    if (!ctx.rng) throw Error(Errc::invalid_argument, "qana_block_forward: train mode needs an RNG for dropout");
    dropped = ops::dropout(act, cfg.dropout, ctx.mode, *ctx.rng, trace ? &mask : nullptr);
  } else {
    dropped = std::move(act);
    if (trace) mask = BasicTensor<T>(dropped.shape(), T{1});
  }
  EcaTrace<T> et;
  auto eca = sa_eca_forward(dropped, p, pre + "eca/", ctx, trace ? &et : nullptr);
  auto sum = ops::scale_channels(eca, p.values(pre + "alpha"));
  if (p.contains(pre + "proj_kernel")) {
    ops::add_inplace(sum, ops::conv2d(x, p.get(pre + "proj_kernel")));
  } else {
    if (x.dim(3) != gcfg.out_channels)
      throw ShapeError("qana_block_forward (no projection)", "channels", x.dim(3), gcfg.out_channels);
    ops::add_inplace(sum, x);
  }
  std::vector<std::size_t> argmax;
  auto out = ops::maxpool2d(sum, 2, 2, trace ? &argmax : nullptr);
  if (trace) {
    trace->input = x;
    trace->ghost = std::move(gt);
    trace->bn = std::move(bn_cache);
    trace->bn_out = std::move(bn);
    trace->drop_mask = std::move(mask);
    trace->dropped = std::move(dropped);
    trace->eca = std::move(et);
    trace->eca_out = std::move(eca);
    trace->sum = std::move(sum);
    trace->argmax = std::move(argmax);
    trace->output = out;
  }
  return out;
}

template <class T>
BasicTensor<T> qana_block_backward(const BlockTrace<T>& tr, const BasicTensor<T>& dout, std::size_t l,
                                   const QanaConfig& cfg, const ParamStore<T>& p, ParamStore<T>& grads) {
  const auto pre = block_prefix(l);
  const auto dsum = ops::maxpool2d_backward(tr.sum.shape(), tr.argmax, dout);
  detail::accumulate<T>(grads, pre + "alpha", ops::channel_sum_product(dsum, tr.eca_out));
  BasicTensor<T> dx;
  if (p.contains(pre + "proj_kernel")) {
    auto gproj = ops::conv2d_backward(tr.input, p.get(pre + "proj_kernel"), dsum);
    detail::accumulate<T>(grads, pre + "proj_kernel", gproj.dkernel.data());
    dx = std::move(gproj.dx);
  } else {
    dx = dsum;
  }
  const auto deca = ops::scale_channels(dsum, p.values(pre + "alpha"));
  const auto ddrop = sa_eca_backward(tr.dropped, tr.eca, deca, p, grads, pre + "eca/");
  const auto dact = ops::multiply(ddrop, tr.drop_mask);
  const auto dbn = ops::relu6_backward(tr.bn_out, dact);
  const auto gbn = ops::batch_norm_backward(dbn, p.values(pre + "bn/gamma"), tr.bn);
  detail::accumulate_bn(grads, pre + "bn/", gbn);
  ops::add_inplace(dx, ghost_backward(tr.input, tr.ghost, gbn.dx, cfg.ghost(l), p, grads, pre + "ghost/"));
  return dx;
}

/// bounded_unit(gamma_spk * BN(SepConv3x3(x)) + beta_spk)
template <class T>
BasicTensor<T> spike_head_forward(const BasicTensor<T>& x, const ParamStore<T>& p, const ForwardContext<T>& ctx = {},
                                  HeadTrace<T>* trace = nullptr) {
  auto dw = ops::depthwise_conv2d(x, p.get("head/dw_kernel"));
  auto pw = ops::conv2d(dw, p.get("head/pw_kernel"));
  ops::BatchNormCache<T> bn_cache;
  auto bn = detail::bn_forward(pw, p, "head/bn/", ctx, trace ? &bn_cache : nullptr);
  const auto gamma = p.values("head/gamma_spk");
  const auto beta = p.values("head/beta_spk");
  const std::size_t c = bn.shape().back();
  if (gamma.size() != c) throw ShapeError("spike_head_forward", "gamma_spk length", gamma.size(), c);
  BasicTensor<T> affine(bn.shape());
  for (std::size_t i = 0; i < bn.size(); ++i) affine[i] = gamma[i % c] * bn[i] + beta[i % c];
  auto out = ops::bounded_unit(affine);
  if (trace) *trace = HeadTrace<T>{x, std::move(dw), std::move(bn_cache), std::move(affine), out};
  return out;
}

template <class T>
BasicTensor<T> spike_head_backward(const HeadTrace<T>& tr, const BasicTensor<T>& dout, const ParamStore<T>& p,
                                   ParamStore<T>& grads) {
  const auto gamma = p.values("head/gamma_spk");
  const std::size_t c = gamma.size();
  const auto daff = ops::bounded_unit_backward(tr.affine, dout);
  std::vector<T> dgamma(c, T{}), dbeta(c, T{});
  BasicTensor<T> dbn(daff.shape());
  const auto& xhat = tr.bn.xhat;
  const auto bn_gamma = p.values("head/bn/gamma");
  const auto bn_beta = p.values("head/bn/beta");
  for (std::size_t i = 0; i < daff.size(); ++i) {
    const std::size_t ch = i % c;
    const T bn_val = bn_gamma[ch] * xhat[i] + bn_beta[ch];
    dgamma[ch] += daff[i] * bn_val;
    dbeta[ch] += daff[i];
    dbn[i] = daff[i] * gamma[ch];
  }
  detail::accumulate<T>(grads, "head/gamma_spk", dgamma);
  detail::accumulate<T>(grads, "head/beta_spk", dbeta);
  auto gbn = ops::batch_norm_backward(dbn, bn_gamma, tr.bn);
  detail::accumulate_bn(grads, "head/bn/", gbn);
  auto gpw = ops::conv2d_backward(tr.dw_out, p.get("head/pw_kernel"), gbn.dx);
  detail::accumulate<T>(grads, "head/pw_kernel", gpw.dkernel.data());
  auto gdw = ops::depthwise_conv2d_backward(tr.input, p.get("head/dw_kernel"), gpw.dx);
  detail::accumulate<T>(grads, "head/dw_kernel", gdw.dkernel.data());
  return std::move(gdw.dx);
}

/// s = sigmoid(W2 relu(W1 mean_hw(x) + b1) + b2); output = x * s per channel.
template <class T>
BasicTensor<T> se_forward(const BasicTensor<T>& x, const ParamStore<T>& p, SeTrace<T>* trace = nullptr) {
  auto mean = ops::spatial_mean(x);
  auto hidden_pre = ops::dense(mean, p.get("se/w1"), p.values("se/b1"));
  auto hidden = ops::relu(hidden_pre);
  auto gate = ops::sigmoid(ops::dense(hidden, p.get("se/w2"), p.values("se/b2")));
  auto out = ops::scale_sample_channels(x, gate);
  if (trace) *trace = SeTrace<T>{x, std::move(mean), std::move(hidden_pre), std::move(hidden), std::move(gate), out};
  return out;
}

template <class T>
BasicTensor<T> se_backward(const SeTrace<T>& tr, const BasicTensor<T>& dout, const ParamStore<T>& p,
                           ParamStore<T>& grads) {
  const auto& x = tr.input;
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  auto dx = ops::scale_sample_channels(dout, tr.gate);
  BasicTensor<T> dgate({n, c});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t q = 0; q < hw; ++q)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = (b * hw + q) * c + ch;
        dgate[b * c + ch] += dout[i] * x[i];
      }
  const auto dz = ops::sigmoid_backward(tr.gate, dgate);
  auto g2 = ops::dense_backward(tr.hidden, p.get("se/w2"), dz);
  detail::accumulate<T>(grads, "se/w2", g2.dweight.data());
  detail::accumulate<T>(grads, "se/b2", g2.dbias);
  const auto dh = ops::relu_backward(tr.hidden_pre, g2.dx);
  auto g1 = ops::dense_backward(tr.mean, p.get("se/w1"), dh);
  detail::accumulate<T>(grads, "se/w1", g1.dweight.data());
  detail::accumulate<T>(grads, "se/b1", g1.dbias);
  ops::add_inplace(dx, ops::spatial_mean_backward(x.shape(), g1.dx));
  return dx;
}

/// Row-major (h, w, c) flatten followed by the class projection.
template <class T>
BasicTensor<T> classify(const BasicTensor<T>& x, const ParamStore<T>& p) {
  require_rank(x, 4, "classify");
  const auto flat = x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
  return ops::dense(flat, p.get("cls/weight"), p.values("cls/bias"));
}

template <class T>
BasicTensor<T> model_forward(const BasicTensor<T>& x, const QanaConfig& cfg, const ParamStore<T>& p,
                             ForwardContext<T> ctx = {}, ModelTrace<T>* trace = nullptr) {
  require_rank(x, 4, "model_forward");
  if (x.dim(1) != cfg.input_size) throw ShapeError("model_forward", "height", x.dim(1), cfg.input_size);
  if (x.dim(2) != cfg.input_size) throw ShapeError("model_forward", "width", x.dim(2), cfg.input_size);
  if (x.dim(3) != cfg.input_channels) throw ShapeError("model_forward", "channels", x.dim(3), cfg.input_channels);
  ctx.bn_momentum = static_cast<T>(cfg.bn_momentum);
  ctx.bn_eps = static_cast<T>(cfg.bn_eps);
  BasicTensor<T> h = x;
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l)
    h = qana_block_forward(h, l, cfg, p, ctx, trace ? &trace->blocks[l] : nullptr);
  h = spike_head_forward(h, p, ctx, trace ? &trace->head : nullptr);
  h = se_forward(h, p, trace ? &trace->se : nullptr);
  auto logits = classify(h, p);
  if (trace) trace->logits = logits;
  return logits;
}

template <class T>
BasicTensor<T> model_forward(const BasicTensor<T>& x, const QanaModel<T>& model) {
  return model_forward(x, model.config, model.params);
}

/// Accumulates dL/dparams into grads (same names as the model's store).
template <class T>
void model_backward(const ModelTrace<T>& tr, const BasicTensor<T>& dlogits, const QanaConfig& cfg,
                    const ParamStore<T>& p, ParamStore<T>& grads) {
  const auto& se_out = tr.se.output;
  const auto flat = se_out.reshaped({se_out.dim(0), se_out.size() / se_out.dim(0)});
  auto gcls = ops::dense_backward(flat, p.get("cls/weight"), dlogits);
  detail::accumulate<T>(grads, "cls/weight", gcls.dweight.data());
  detail::accumulate<T>(grads, "cls/bias", gcls.dbias);
  auto d = gcls.dx.reshaped(se_out.shape());
  d = se_backward(tr.se, d, p, grads);
  d = spike_head_backward(tr.head, d, p, grads);
  for (std::size_t l = QanaConfig::num_blocks; l-- > 0;) d = qana_block_backward(tr.blocks[l], d, l, cfg, p, grads);
}

template <class T>
struct LossAndGrads {
  T loss{};
  BasicTensor<T> logits;
  ParamStore<T> grads;
};

/// Softmax cross-entropy loss and its parameter gradients for one batch.
/// In train mode BN running statistics of `model` are updated.
template <class T>
LossAndGrads<T> loss_and_gradients(QanaModel<T>& model, const BasicTensor<T>& x, std::span<const int> labels,
                                   ops::Mode mode, std::mt19937_64* rng) {
  ModelTrace<T> trace;
  ForwardContext<T> ctx{mode, rng, &model.params};
  auto logits = model_forward(x, model.config, model.params, ctx, &trace);
  auto loss = ops::softmax_cross_entropy(logits, labels);
  auto grads = model.params.zeros_like();
  model_backward(trace, loss.dlogits, model.config, model.params, grads);
  return LossAndGrads<T>{loss.loss, std::move(logits), std::move(grads)};
}

}  // namespace qana
