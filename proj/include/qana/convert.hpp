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


// Float model -> spiking network: activation calibration, integer
// parameter derivation, operator mapping, a dequantized reference and
// CNN/SNN verification.
//
// A spiking neuron represents value v through its rate r = count / T with
// v = (r L - z) s (slot scale s, levels L, zero point z). For a synapse
// group g with int8 weights w (scale s_w) from a source of full scale R_g,
// one event carries w * s_w * R_g of value, divided by 255 when the group
// is gated by a gain code. With a node unit u the integer multiplier is
// M_g = round(s_w R_g / u), the threshold round(L s / u) and the bias
// charge round(b / u).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "qana/data.hpp"
#include "qana/fold.hpp"
#include "qana/runtime.hpp"
#include "qana/snn.hpp"

namespace qana {

// ---------------------------------------------------------------------------
// calibration

struct SlotCalibration {
  std::string name;
  QuantParams qp;
  double mean_abs = 0.0;  // feeds the event estimate of the cost report
};

struct Calibration {
  std::vector<SlotCalibration> slots;  // blockN/act, blockN/sum, head, logits
  std::size_t samples = 0;

  const SlotCalibration& at(const std::string& name) const {
    for (const auto& s : slots)
      if (s.name == name) return s;
    throw Error(Errc::invalid_argument, "calibration has no slot '" + name + "'");
  }
};

inline TensorD batch_tensor(const std::vector<ImageSample>& samples, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return make_batch(samples, idx).first.cast<double>();
}

/// Post-ReLU slots get [0, p99.9] with zero point 0, residual sums a
/// symmetric range, logits an asymmetric [p0.1, p99.9] range.
inline Calibration calibrate(const FoldedModel& fm, const std::vector<ImageSample>& samples, std::size_t batch = 32) {
  if (samples.empty()) throw Error(Errc::empty_input, "calibrate: empty calibration set");
  constexpr std::size_t nb = QanaConfig::num_blocks;
  std::array<std::vector<float>, nb> act, sum;
  std::vector<float> head, logits;
  auto append = [](std::vector<float>& dst, const TensorD& t) {
    for (double v : t.data()) dst.push_back(static_cast<float>(v));
  };
  for (std::size_t s = 0; s < samples.size(); s += batch) {
    FoldedTrace tr;
    folded_forward(fm, batch_tensor(samples, s, std::min(samples.size(), s + batch)), &tr);
    for (std::size_t l = 0; l < nb; ++l) {
      append(act[l], tr.blocks[l].act);
      append(sum[l], tr.blocks[l].sum);
    }
    append(head, tr.head);
    append(logits, tr.logits);
  }
  auto mean_abs = [](const std::vector<float>& v) {
    double a = 0.0;
    for (float x : v) a += std::abs(x);
    return a / static_cast<double>(v.size());
  };
  Calibration cal;
  cal.samples = samples.size();
  for (std::size_t l = 0; l < nb; ++l) {
    cal.slots.push_back({block_prefix(l) + "act", calibrate_unsigned(act[l]), mean_abs(act[l])});
    cal.slots.push_back({block_prefix(l) + "sum", calibrate_symmetric(sum[l]), mean_abs(sum[l])});
  }
  cal.slots.push_back({"head", calibrate_unsigned(head), mean_abs(head)});
  cal.slots.push_back({"logits", calibrate_asymmetric(logits), mean_abs(logits)});
  return cal;
}

// ---------------------------------------------------------------------------
// operator mapping

inline std::int32_t relu6_cap(double scale) { return static_cast<std::int32_t>(std::lround(6.0 / scale)); }
inline std::int32_t bounded_cap(double scale) { return static_cast<std::int32_t>(std::lround(1.0 / scale)); }

namespace detail {

struct PendingGroup {
  SynapseKind kind;
  std::uint32_t source;
  std::int32_t gain;
  QuantizedWeights weights;
};

/// Integer multipliers, thresholds and biases for a spiking node whose
/// slot (qp, signedness, cap) is already set.
inline void integerize(SnnNode& node, const std::vector<SnnNode>& nodes, std::vector<PendingGroup> groups,
                       std::span<const double> bias) {
  std::vector<double> m(groups.size());
  double m_min = std::numeric_limits<double>::infinity(), m_max = 0.0, b_max = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    m[i] = g.weights.scale * nodes.at(g.source).full_scale() / (g.gain == kNoGain ? 1.0 : kGainLevels);
    m_min = std::min(m_min, m[i]);
    m_max = std::max(m_max, m[i]);
  }
  for (double b : bias) b_max = std::max(b_max, std::abs(b));
  const double r_out = node.full_scale();
  // Finest unit that keeps the smallest multiplier at 4096 while bounding
  // the largest multiplier, the threshold and the bias magnitudes.
  const double u = std::max({m_min / 4096.0, m_max / double(1 << 20), r_out / static_cast<double>(kMaxThreshold),
                             b_max / static_cast<double>(kMaxThreshold)});
  const std::size_t c = node.channels();
  node.thresholds.assign(c, static_cast<std::int32_t>(std::clamp<double>(std::round(r_out / u), 1.0, double(kMaxThreshold))));
  node.biases.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) node.biases[ch] = static_cast<std::int32_t>(std::lround(bias[ch] / u));
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto& g = groups[i];
    node.synapses.push_back(SynapseGroup{g.kind, g.source, g.gain, static_cast<std::int32_t>(std::lround(m[i] / u)),
                                         std::move(g.weights)});
  }
}

inline QuantizedWeights vector_weights(std::span<const double> v) {
  return quantize_weights(TensorD({v.size()}, std::vector<double>(v.begin(), v.end())));
}

inline std::string layer_prefix(const std::string& name) {
  const auto slash = name.find('/');
  return slash == std::string::npos ? std::string{} : name.substr(0, slash + 1);
}

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// (target node, role) for one source layer; throws for layers outside
/// the supported set.
inline std::pair<std::string, std::string> map_layer(const LayerDesc& layer) {
  const auto pre = layer_prefix(layer.name);
  const bool block = layer.name.rfind("block", 0) == 0;
  auto unsupported = [&] {
    return Error(Errc::unsupported_layer, "cannot map layer '" + layer.name + "' of kind " +
                                              std::string(layer_kind_name(layer.kind)) + " to a spiking equivalent");
  };
  switch (layer.kind) {
    case LayerKind::conv1x1:
      if (block && ends_with(layer.name, "ghost/base")) return {pre + "ghost", "centre tap of the fused ghost kernel"};
      if (block && ends_with(layer.name, "eca/pw")) return {pre + "eca", "pointwise gate weights (int8)"};
      break;
    case LayerKind::separable_conv:
      if (block) return {pre + "ghost", "cheap path fused into the ghost kernel"};
      return {"head", "depthwise x pointwise fused into one 3x3 kernel"};
    case LayerKind::channel_mask: return {pre + "ghost", "zeroes masked cheap-path kernel columns"};
    case LayerKind::concat: return {pre + "ghost", "output channel order of the fused kernel"};
    case LayerKind::batch_norm:
      if (block && ends_with(layer.name, "eca/bn")) return {pre + "eca", "folded into the gate depthwise kernel"};
      if (block) return {pre + "ghost", "folded into kernel and bias"};
      return {"head", "folded into kernel and bias"};
    case LayerKind::relu6: return {pre + "ghost", "integrate-and-fire threshold, saturation cap round(6/s)"};
    case LayerKind::dropout: return {"-", "identity at inference"};
    case LayerKind::depthwise_conv: return {pre + "eca", "depthwise gate weights (int8)"};
    case LayerKind::sigmoid_gate: return {pre + "eca", "gate codes round(255 sigmoid) at window end"};
    case LayerKind::channel_scale: return {pre + "sum", "elementwise synapses gained by the gate"};
    case LayerKind::projection: return {pre + "sum", "1x1 conv synapses from the block input"};
    case LayerKind::identity: return {pre + "sum", "unit elementwise synapses from the block input"};
    case LayerKind::add: return {pre + "sum", "signed integrate-and-fire summation"};
    case LayerKind::maxpool: return {pre + "pool", "max over window-end spike counts"};
    case LayerKind::affine: return {"head", "folded into kernel and bias"};
    case LayerKind::bounded_unit: return {"head", "integrate-and-fire threshold, saturation cap round(1/s)"};
    case LayerKind::global_avg_pool: return {"se", "mean of window-end values"};
    case LayerKind::dense:
      if (layer.name == "se/fc1") return {"se", "squeeze weights (int8)"};
      if (layer.name == "se/fc2") return {"se", "excite weights (int8)"};
      if (layer.name == "classifier") return {"classifier", "dense synapses, readout with zero-point offset"};
      break;
    case LayerKind::relu: return {"se", "rectified bottleneck"};
    case LayerKind::sigmoid: return {"se", "gate codes round(255 sigmoid) at window end"};
    case LayerKind::gate_scale: return {"classifier", "synapse gain from the se gate"};
    case LayerKind::flatten: return {"classifier", "index remap (h, w, c) row-major"};
    case LayerKind::custom: break;
  }
  throw unsupported();
}

}  // namespace detail

inline std::vector<MappingEntry> build_mapping(const ModelSpec& model_spec) {
  std::vector<MappingEntry> out;
  for (const auto& layer : model_spec.layers) {
    auto [target, role] = detail::map_layer(layer);
    out.push_back({layer.name, std::string(layer_kind_name(layer.kind)), std::move(target), std::move(role)});
  }
  return out;
}

/// Lowers the folded model to a spiking network. `model_spec` lists the
/// source layers; each must map, or conversion fails naming the layer.
inline SnnSpec map_operators(const FoldedModel& fm, const Calibration& cal, const ModelSpec& model_spec) {
  SnnSpec spec;
  spec.mapping = build_mapping(model_spec);
  const auto& cfg = fm.config;
  auto& nodes = spec.nodes;
  auto hwc = [](std::size_t h, std::size_t w, std::size_t c) { return Shape{h, w, c}; };

  SnnNode input;
  input.kind = NodeKind::input;
  input.name = "input";
  input.shape = hwc(cfg.input_size, cfg.input_size, cfg.input_channels);
  input.qp = {1.0 / 255.0, 0};  // rate a <-> pixel value a
  nodes.push_back(input);

  std::uint32_t prev = 0;
  std::size_t size = cfg.input_size;
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    const auto pre = block_prefix(l);
    const auto& b = fm.blocks[l];
    const std::size_t c = cfg.block_channels[l];

    SnnNode ghost;
    ghost.name = pre + "ghost";
    ghost.shape = hwc(size, size, c);
    ghost.qp = cal.at(pre + "act").qp;
    ghost.cap = relu6_cap(ghost.qp.scale);
    detail::integerize(ghost, nodes, {{SynapseKind::conv, prev, kNoGain, quantize_weights(b.ghost_kernel)}}, b.ghost_bias);
    const auto ghost_idx = static_cast<std::uint32_t>(nodes.size());
    nodes.push_back(std::move(ghost));

    SnnNode eca;
    eca.kind = NodeKind::gain_eca;
    eca.name = pre + "eca";
    eca.shape = hwc(size, size, c);
    eca.qp = {1.0 / kGainLevels, 0};
    eca.source = ghost_idx;
    eca.params = {quantize_weights(b.eca_dw), quantize_weights(b.eca_pw)};
    eca.param_biases = {quantize_bias(b.eca_dw_bias), quantize_bias(b.eca_pw_bias)};
    const auto eca_idx = static_cast<std::int32_t>(nodes.size());
    nodes.push_back(std::move(eca));

    SnnNode sum;
    sum.name = pre + "sum";
    sum.shape = hwc(size, size, c);
    sum.is_signed = true;
    sum.qp = cal.at(pre + "sum").qp;
    std::vector<detail::PendingGroup> groups{
        {SynapseKind::elementwise, ghost_idx, eca_idx, detail::vector_weights(b.alpha)}};
    if (b.proj.empty())
      groups.push_back({SynapseKind::elementwise, prev, kNoGain, detail::vector_weights(std::vector<double>(c, 1.0))});
    else
      groups.push_back({SynapseKind::conv, prev, kNoGain, quantize_weights(b.proj)});
    detail::integerize(sum, nodes, std::move(groups), std::vector<double>(c, 0.0));
    const auto sum_idx = static_cast<std::uint32_t>(nodes.size());
    const auto sum_qp = sum.qp;
    nodes.push_back(std::move(sum));

    SnnNode pool;
    pool.kind = NodeKind::maxpool;
    pool.name = pre + "pool";
    size /= 2;
    pool.shape = hwc(size, size, c);
    pool.is_signed = true;
    pool.qp = sum_qp;
    pool.source = sum_idx;
    pool.window = 2;
    prev = static_cast<std::uint32_t>(nodes.size());
    nodes.push_back(std::move(pool));
  }

  SnnNode head;
  head.name = "head";
  head.shape = hwc(size, size, cfg.head_channels);
  head.qp = cal.at("head").qp;
  head.cap = bounded_cap(head.qp.scale);
  detail::integerize(head, nodes, {{SynapseKind::conv, prev, kNoGain, quantize_weights(fm.head_kernel)}}, fm.head_bias);
  const auto head_idx = static_cast<std::uint32_t>(nodes.size());
  nodes.push_back(std::move(head));

  SnnNode se;
  se.kind = NodeKind::gain_se;
  se.name = "se";
  se.shape = hwc(1, 1, cfg.head_channels);
  se.qp = {1.0 / kGainLevels, 0};
  se.source = head_idx;
  se.params = {quantize_weights(fm.se_w1), quantize_weights(fm.se_w2)};
  se.param_biases = {quantize_bias(fm.se_b1), quantize_bias(fm.se_b2)};
  const auto se_idx = static_cast<std::int32_t>(nodes.size());
  nodes.push_back(std::move(se));

  SnnNode cls;
  cls.name = "classifier";
  cls.shape = hwc(1, 1, cfg.num_classes);
  cls.qp = cal.at("logits").qp;
  std::vector<double> bias(fm.cls_bias);
  for (auto& v : bias) v += cls.qp.zero_point * cls.qp.scale;  // rate 0 <-> lowest representable logit
  detail::integerize(cls, nodes, {{SynapseKind::dense, head_idx, se_idx, quantize_weights(fm.cls_weight)}}, bias);
  spec.output = static_cast<std::uint32_t>(nodes.size());
  nodes.push_back(std::move(cls));

  for (const auto& m : spec.mapping)
    if (m.target != "-") spec.find(m.target);
  spec.validate();
  return spec;
}

/// fold -> calibrate -> map in one call.
inline SnnSpec convert(const QanaModel<float>& model, const std::vector<ImageSample>& calibration_set,
                       Calibration* cal_out = nullptr) {
  const auto fm = fold_batchnorm(model);
  auto cal = calibrate(fm, calibration_set);
  auto spec = map_operators(fm, cal, build_model_spec(model.config));
  if (cal_out) *cal_out = std::move(cal);
  return spec;
}

// ---------------------------------------------------------------------------
// static cost report

struct CostRow {
  std::string node;
  std::string kind;
  std::size_t neurons = 0;
  std::size_t synapses = 0;
  double est_events = 0.0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::size_t neurons = 0;
  std::size_t synapses = 0;
  double est_events = 0.0;  // per inference at window T
  std::size_t T = 0;
};

inline std::size_t synapse_count(const SnnSpec& spec, const SnnNode& n) {
  std::size_t total = 0;
  for (const auto& g : n.synapses) {
    const auto& ws = g.weights.shape;
    switch (g.kind) {
      case SynapseKind::conv: total += n.shape[0] * n.shape[1] * ws[0] * ws[1] * ws[2] * ws[3]; break;
      case SynapseKind::dense: total += ws[0] * ws[1]; break;
      case SynapseKind::elementwise: total += spec.nodes[g.source].neurons(); break;
    }
  }
  return total;
}

/// Neurons, synapses and an event estimate from calibrated mean magnitudes
/// (mean |value| / full scale ~ firing rate).
inline CostReport cost_report(const SnnSpec& spec, const Calibration& cal, std::size_t T) {
  CostReport r;
  r.T = T;
  for (const auto& n : spec.nodes) {
    CostRow row{n.name, std::string(node_kind_name(n.kind)), n.neurons(), synapse_count(spec, n), 0.0};
    std::string slot;
    if (n.name.size() > 6 && detail::ends_with(n.name, "/ghost")) slot = n.name.substr(0, n.name.size() - 5) + "act";
    else if (detail::ends_with(n.name, "/sum")) slot = n.name;
    else if (n.name == "head") slot = "head";
    else if (n.name == "classifier") slot = "logits";
    if (!slot.empty()) {
      const auto& s = cal.at(slot);
      row.est_events = static_cast<double>(n.neurons()) * std::min(1.0, s.mean_abs / n.full_scale()) * static_cast<double>(T);
    }
    if (n.kind == NodeKind::spiking || n.kind == NodeKind::input) r.neurons += row.neurons;
    r.synapses += row.synapses;
    r.est_events += row.est_events;
    r.rows.push_back(std::move(row));
  }
  return r;
}

inline std::string format_cost_report(const CostReport& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-9s %10s %12s %14s\n", "node", "kind", "neurons", "synapses", "est_events");
  out += line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof(line), "%-16s %-9s %10zu %12zu %14.0f\n", row.node.c_str(), row.kind.c_str(), row.neurons,
                  row.synapses, row.est_events);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-16s %-9s %10zu %12zu %14.0f   (T=%zu)\n", "total", "", r.neurons, r.synapses,
                r.est_events, r.T);
  out += line;
  return out;
}

// ---------------------------------------------------------------------------
// dequantized reference

namespace detail {

/// Float bias of spiking node `name`, in value units.
inline std::vector<double> float_bias(const FoldedModel& fm, const SnnNode& node) {
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    const auto pre = block_prefix(l);
    if (node.name == pre + "ghost") return fm.blocks[l].ghost_bias;
    if (node.name == pre + "sum") return std::vector<double>(node.channels(), 0.0);
  }
  if (node.name == "head") return fm.head_bias;
  if (node.name == "classifier") {
    auto b = fm.cls_bias;
    for (auto& v : b) v += node.qp.zero_point * node.qp.scale;
    return b;
  }
  throw Error(Errc::invalid_argument, "reference: no float bias for node '" + node.name + "'");
}

}  // namespace detail

/// The dequantized CNN: the folded model evaluated with the deployed int8
/// weights and gate codes, every activation held on its slot's 8-bit grid.
/// It shares no integer multiplier or threshold with the spiking network,
/// so it is the limit the simulation should approach as T grows. Returns
/// logits; `rates` (optional) receives per-node rates [1, H, W, C].
inline std::vector<double> reference_forward(const FoldedModel& fm, const SnnSpec& spec, std::span<const float> pixels,
                                             std::vector<TensorD>* rates = nullptr) {
  const auto& nodes = spec.nodes;
  std::vector<TensorD> r(nodes.size());
  std::vector<std::vector<std::int32_t>> gains(nodes.size());
  auto shape4 = [](const SnnNode& n) { return Shape{1, n.shape[0], n.shape[1], n.shape[2]}; };
  auto values = [&](std::size_t idx) {
    TensorD v = r[idx];
    for (auto& x : v.storage()) x = nodes[idx].value_of_rate(x);
    return v;
  };
  r[0] = TensorD(shape4(nodes[0]));
  if (pixels.size() != r[0].size()) throw ShapeError("reference_forward", "pixels", pixels.size(), r[0].size());
  for (std::size_t i = 0; i < pixels.size(); ++i) r[0][i] = std::clamp(static_cast<double>(pixels[i]), 0.0, 1.0);
  for (std::size_t idx = 1; idx < nodes.size(); ++idx) {
    const auto& n = nodes[idx];
    if (n.kind == NodeKind::gain_eca || n.kind == NodeKind::gain_se) {
      gains[idx] = evaluate_gain(n, values(n.source));
      continue;
    }
    if (n.kind == NodeKind::maxpool) {
      r[idx] = ops::maxpool2d(r[n.source], n.window, n.window);
      continue;
    }
    const std::size_t c = n.channels();
    const auto bias = detail::float_bias(fm, n);
    TensorD pre(shape4(n));
    for (const auto& g : n.synapses) {
      TensorD src = values(g.source);
      if (g.gain != kNoGain) {
        const auto& gq = gains[static_cast<std::size_t>(g.gain)];
        for (std::size_t i = 0; i < src.size(); ++i) src[i] *= gq[i % gq.size()] / static_cast<double>(kGainLevels);
      }
      const TensorD w = dequantize(g.weights);
      switch (g.kind) {
        case SynapseKind::conv: ops::add_inplace(pre, ops::conv2d(src, w)); break;
        case SynapseKind::dense: {
          const auto y = ops::dense(src.reshaped({1, src.size()}), w);
          for (std::size_t i = 0; i < y.size(); ++i) pre[i] += y[i];
          break;
        }
        case SynapseKind::elementwise:
          for (std::size_t i = 0; i < src.size(); ++i) pre[i] += src[i] * w[i % c];
          break;
      }
    }
    const double levels = n.levels();
    const double cap = n.cap > 0 && !n.is_signed ? std::min(1.0, n.cap / levels) : 1.0;
    TensorD out(shape4(n));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double rate = (pre[i] + bias[i % c]) / n.full_scale();
      out[i] = std::round(std::clamp(rate, n.is_signed ? -1.0 : 0.0, cap) * levels) / levels;
    }
    r[idx] = std::move(out);
  }
  const auto& out_node = spec.output_node();
  std::vector<double> logits(out_node.neurons());
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = out_node.value_of_rate(r[spec.output][i]);
  if (rates) *rates = std::move(r);
  return logits;
}

/// Logits implied by output spike totals over a window of T steps.
inline std::vector<double> decode_logits(const SnnSpec& spec, const SpikeRecord& rec) {
  const auto& n = spec.output_node();
  std::vector<double> out(rec.classes());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = n.value_of_rate(static_cast<double>(rec.totals[c]) / static_cast<double>(rec.window()));
  return out;
}

// ---------------------------------------------------------------------------
// verification

struct VerifyReport {
  std::size_t T = 0;
  std::size_t samples = 0;
  std::vector<double> logit_deviation;  // per sample: max_c |snn - reference|
  double max_logit_deviation = 0.0;
  double mean_logit_deviation = 0.0;
  double agreement = 0.0;        // argmax(snn) == argmax(reference)
  double float_agreement = 0.0;  // argmax(reference) == argmax(float folded model)
  double snn_accuracy = 0.0;     // against sample labels
  double reference_accuracy = 0.0;
  std::uint64_t total_events = 0;
};

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline VerifyReport verify_conversion(const FoldedModel& fm, const SnnSpec& spec, const std::vector<ImageSample>& probes,
                                      std::size_t T, const PredictOptions& base = {}) {
  if (probes.empty()) throw Error(Errc::empty_input, "verify_conversion: empty probe set");
  VerifyReport rep;
  rep.T = T;
  rep.samples = probes.size();
  PredictOptions opt = base;
  opt.T = T;
  std::size_t agree = 0, float_agree = 0, snn_ok = 0, ref_ok = 0;
  double dev_sum = 0.0;
  for (const auto& s : probes) {
    const auto pixels = s.pixels.data();
    const auto ref = reference_forward(fm, spec, pixels);
    const auto sim = simulate(spec, encode_input(pixels, opt), T, opt.sim);
    const auto snn = decode_logits(spec, sim.record);
    const auto fl = folded_forward(fm, s.pixels.cast<double>().reshaped({1, s.pixels.dim(0), s.pixels.dim(1), s.pixels.dim(2)}));
    double dev = 0.0;
    for (std::size_t c = 0; c < ref.size(); ++c) dev = std::max(dev, std::abs(snn[c] - ref[c]));
    rep.logit_deviation.push_back(dev);
    rep.max_logit_deviation = std::max(rep.max_logit_deviation, dev);
    dev_sum += dev;
    // Count ties resolve to the lowest class, as in decode_probs' argmax.
    const auto snn_cls = argmax(decode_probs(sim.record));
    const auto ref_cls = argmax(ref);
    agree += snn_cls == ref_cls ? 1 : 0;
    float_agree += argmax(fl.data()) == ref_cls ? 1 : 0;
    snn_ok += static_cast<int>(snn_cls) == s.label ? 1 : 0;
    ref_ok += static_cast<int>(ref_cls) == s.label ? 1 : 0;
    rep.total_events += sim.stats.total_events;
  }
  const double n = static_cast<double>(probes.size());
  rep.mean_logit_deviation = dev_sum / n;
  rep.agreement = static_cast<double>(agree) / n;
  rep.float_agreement = static_cast<double>(float_agree) / n;
  rep.snn_accuracy = static_cast<double>(snn_ok) / n;
  rep.reference_accuracy = static_cast<double>(ref_ok) / n;
  return rep;
}

}  // namespace qana
