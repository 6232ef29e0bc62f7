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


// Inference-mode model with every batch norm merged into the preceding
// convolution. The ghost module (1x1 base + depthwise/pointwise cheap path)
// becomes a single kxk convolution, and the head's separable conv, batch
// norm and affine become one 3x3 convolution with bias.

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qana/arch.hpp"

namespace qana {

/// w' = w * gamma / sqrt(var + eps), b' = (b - mean) * gamma / sqrt(var + eps) + beta.
/// The output channel of kernel element i is i % C, which holds for both
/// [kh, kw, in, C] and depthwise [kh, kw, C, 1] layouts. Empty bias means 0.
inline std::pair<TensorD, std::vector<double>> fold_conv_bn(const TensorD& kernel, std::span<const double> bias,
                                                            std::span<const double> gamma, std::span<const double> beta,
                                                            std::span<const double> mean, std::span<const double> var,
                                                            double eps) {
  const std::size_t c = gamma.size();
  if (beta.size() != c || mean.size() != c || var.size() != c)
    throw Error(Errc::shape_mismatch, "fold_conv_bn: batch norm parameter lengths differ");
  if (!bias.empty() && bias.size() != c) throw ShapeError("fold_conv_bn", "bias length", bias.size(), c);
  if (kernel.size() % c != 0) throw ShapeError("fold_conv_bn", "kernel elements divisible by channels", kernel.size() % c, 0);
  std::vector<double> factor(c), b(c);
  for (std::size_t i = 0; i < c; ++i) {
    factor[i] = gamma[i] / std::sqrt(var[i] + eps);
    b[i] = ((bias.empty() ? 0.0 : bias[i]) - mean[i]) * factor[i] + beta[i];
  }
  TensorD k = kernel;
  for (std::size_t i = 0; i < k.size(); ++i) k[i] *= factor[i % c];
  return {std::move(k), std::move(b)};
}

struct FoldedBlock {
  TensorD ghost_kernel;  // [k, k, cin, C]
  std::vector<double> ghost_bias;
  TensorD eca_dw;  // [e, e, C, 1]
  std::vector<double> eca_dw_bias;
  TensorD eca_pw;  // [1, 1, C, C]
  std::vector<double> eca_pw_bias;
  std::vector<double> alpha;
  TensorD proj;  // [1, 1, cin, C]; empty for the identity shortcut
};

struct FoldedModel {
  QanaConfig config;
  std::array<FoldedBlock, QanaConfig::num_blocks> blocks;
  TensorD head_kernel;  // [3, 3, c4, H]
  std::vector<double> head_bias;
  TensorD se_w1, se_w2;
  std::vector<double> se_b1, se_b2;
  TensorD cls_weight;
  std::vector<double> cls_bias;

  /// Layer sequence of the folded graph.
  std::vector<LayerKind> layer_kinds() const {
    std::vector<LayerKind> out;
    for (const auto& b : blocks) {
      out.insert(out.end(), {LayerKind::separable_conv, LayerKind::relu6, LayerKind::depthwise_conv,
                             LayerKind::conv1x1, LayerKind::sigmoid_gate, LayerKind::channel_scale,
                             b.proj.empty() ? LayerKind::identity : LayerKind::projection, LayerKind::add,
                             LayerKind::maxpool});
    }
    out.insert(out.end(), {LayerKind::separable_conv, LayerKind::bounded_unit, LayerKind::global_avg_pool,
                           LayerKind::dense, LayerKind::relu, LayerKind::dense, LayerKind::sigmoid,
                           LayerKind::gate_scale, LayerKind::flatten, LayerKind::dense});
    return out;
  }
};

namespace detail {

inline std::vector<double> to_vec(std::span<const float> v) { return {v.begin(), v.end()}; }

inline std::pair<TensorD, std::vector<double>> fold_with(const TensorD& kernel, std::span<const double> bias,
                                                        const ParamStore<double>& p, const std::string& bn, double eps) {
  return fold_conv_bn(kernel, bias, p.values(bn + "gamma"), p.values(bn + "beta"), p.values(bn + "mean"),
                      p.values(bn + "var"), eps);
}

}  // namespace detail

/// Ghost module as one kxk kernel: base channels carry the 1x1 kernel at
/// the centre tap, cheap channels carry dw[ky,kx,ci] * pw[ci,co] * mask[co].
inline TensorD fuse_ghost_kernel(const ParamStore<double>& p, const std::string& prefix, const GhostConfig& g) {
  const auto& base = p.get(prefix + "base_kernel");
  const auto& dw = p.get(prefix + "dw_kernel");
  const auto& pw = p.get(prefix + "pw_kernel");
  const auto mask = p.values(prefix + "mask");
  const std::size_t k = g.ghost_kernel, cin = g.in_channels, c = g.out_channels, nb = g.base_channels();
  TensorD out({k, k, cin, c});
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t co = 0; co < nb; ++co) out.at(k / 2, k / 2, ci, co) = base.at(0, 0, ci, co);
  for (std::size_t ky = 0; ky < k; ++ky)
    for (std::size_t kx = 0; kx < k; ++kx)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t co = nb; co < c; ++co)
          out.at(ky, kx, ci, co) = dw.at(ky, kx, ci, 0) * pw.at(0, 0, ci, co - nb) * mask[co - nb];
  return out;
}

inline FoldedModel fold_batchnorm(const QanaModel<float>& model) {
  const auto& cfg = model.config;
  cfg.validate();
  const auto p = model.params.cast<double>();
  const double eps = cfg.bn_eps;
  FoldedModel fm;
  fm.config = cfg;
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    const auto pre = block_prefix(l);
    auto& b = fm.blocks[l];
    std::tie(b.ghost_kernel, b.ghost_bias) =
        detail::fold_with(fuse_ghost_kernel(p, pre + "ghost/", cfg.ghost(l)), {}, p, pre + "bn/", eps);
    std::tie(b.eca_dw, b.eca_dw_bias) = detail::fold_with(p.get(pre + "eca/dw_kernel"), {}, p, pre + "eca/bn/", eps);
    b.eca_pw = p.get(pre + "eca/pw_kernel");
    b.eca_pw_bias = detail::to_vec(model.params.values(pre + "eca/pw_bias"));
    b.alpha = detail::to_vec(model.params.values(pre + "alpha"));
    if (p.contains(pre + "proj_kernel")) b.proj = p.get(pre + "proj_kernel");
  }
  const auto& dw = p.get("head/dw_kernel");
  const auto& pw = p.get("head/pw_kernel");
  const std::size_t c4 = dw.dim(2), h = pw.dim(3);
  TensorD sep({3, 3, c4, h});
  for (std::size_t ky = 0; ky < 3; ++ky)
    for (std::size_t kx = 0; kx < 3; ++kx)
      for (std::size_t ci = 0; ci < c4; ++ci)
        for (std::size_t co = 0; co < h; ++co) sep.at(ky, kx, ci, co) = dw.at(ky, kx, ci, 0) * pw.at(0, 0, ci, co);
  std::tie(fm.head_kernel, fm.head_bias) = detail::fold_with(sep, {}, p, "head/bn/", eps);
  const auto gs = p.values("head/gamma_spk");
  const auto bs = p.values("head/beta_spk");
  for (std::size_t i = 0; i < fm.head_kernel.size(); ++i) fm.head_kernel[i] *= gs[i % h];
  for (std::size_t co = 0; co < h; ++co) fm.head_bias[co] = gs[co] * fm.head_bias[co] + bs[co];
  fm.se_w1 = p.get("se/w1");
  fm.se_b1 = detail::to_vec(model.params.values("se/b1"));
  fm.se_w2 = p.get("se/w2");
  fm.se_b2 = detail::to_vec(model.params.values("se/b2"));
  fm.cls_weight = p.get("cls/weight");
  fm.cls_bias = detail::to_vec(model.params.values("cls/bias"));
  return fm;
}

struct FoldedBlockTrace {
  TensorD act;   // relu6(ghost conv)
  TensorD gate;  // ECA gate
  TensorD sum;   // alpha * gate * act + shortcut
  TensorD output;
};

struct FoldedTrace {
  std::array<FoldedBlockTrace, QanaConfig::num_blocks> blocks;
  TensorD head;
  TensorD se_gate;  // [N, H]
  TensorD logits;
};

inline TensorD eca_gate(const TensorD& act, const FoldedBlock& b) {
  const auto dw = ops::depthwise_conv2d<double>(act, b.eca_dw, b.eca_dw_bias);
  return ops::sigmoid(ops::conv2d<double>(dw, b.eca_pw, b.eca_pw_bias));
}

inline TensorD se_gate(const TensorD& h, const FoldedModel& fm) {
  const auto hidden = ops::relu(ops::dense<double>(ops::spatial_mean(h), fm.se_w1, fm.se_b1));
  return ops::sigmoid(ops::dense<double>(hidden, fm.se_w2, fm.se_b2));
}

inline TensorD folded_forward(const FoldedModel& fm, const TensorD& x, FoldedTrace* trace = nullptr) {
  require_rank(x, 4, "folded_forward");
  TensorD h = x;
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    const auto& b = fm.blocks[l];
    auto act = ops::relu6(ops::conv2d<double>(h, b.ghost_kernel, b.ghost_bias));
    auto gate = eca_gate(act, b);
    auto sum = ops::scale_channels<double>(ops::multiply(gate, act), b.alpha);
    ops::add_inplace(sum, b.proj.empty() ? h : ops::conv2d(h, b.proj));
    h = ops::maxpool2d(sum, 2, 2);
    if (trace) trace->blocks[l] = {std::move(act), std::move(gate), std::move(sum), h};
  }
  h = ops::bounded_unit(ops::conv2d<double>(h, fm.head_kernel, fm.head_bias));
  auto gate = se_gate(h, fm);
  const auto s = ops::scale_sample_channels(h, gate);
  auto logits = ops::dense<double>(s.reshaped({s.dim(0), s.size() / s.dim(0)}), fm.cls_weight, fm.cls_bias);
  if (trace) {
    trace->head = std::move(h);
    trace->se_gate = std::move(gate);
    trace->logits = logits;
  }
  return logits;
}

}  // namespace qana
