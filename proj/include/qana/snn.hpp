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


// Spiking network description produced by the converter and executed by
// the runtime.
//
// Nodes are kept in topological order. Every node holds an [H, W, C]
// grid of neurons (dense layers use [1, 1, K]). Kinds:
//   input    rate-coded pixels, rate a <-> value a
//   spiking  integrate-and-fire neurons fed by synapse groups
//   maxpool  forwards, per window, the train of the neuron with the
//            largest net count at window end
//   gain_eca / gain_se
//            gate codes g in [0, 255] computed from the source node's counts
//            at window end; a gained synapse delivers w * M * g per event
//
// A slot with quantization (scale s, zero point z) and L levels (255, or
// 127 for signed slots) maps rate r to value (r * L - z) * s.
//
// File layout ("QSNN", little endian): magic, u32 version, u32 node count,
// u32 output node, node records, then the mapping table. A node record is
// u8 kind, name, u8 signed, shape, f64 scale, i32 zero point, i32 cap,
// i32 thresholds, i32 biases, u32 source, u32 window, synapse groups
// (u8 kind, u32 source, i32 gain, i32 multiplier, int8 weight blob) and
// gain parameters (int8 blobs, then i32 bias blobs with f64 scale).
// Strings and arrays are u32-length prefixed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "qana/image_io.hpp"
#include "qana/ops.hpp"
#include "qana/quant.hpp"

namespace qana {

enum class NodeKind : std::uint8_t { input, spiking, maxpool, gain_eca, gain_se };
enum class SynapseKind : std::uint8_t { conv, dense, elementwise };

inline std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::input: return "input";
    case NodeKind::spiking: return "spiking";
    case NodeKind::maxpool: return "maxpool";
    case NodeKind::gain_eca: return "gain_eca";
    case NodeKind::gain_se: return "gain_se";
  }
  return "unknown";
}

inline constexpr std::int32_t kNoGain = -1;
inline constexpr std::int64_t kMaxThreshold = std::int64_t{1} << 30;
inline constexpr std::int32_t kGainLevels = 255;

/// Connections from one source node. Weights are int8 codes; the charge of
/// one event is sign * w * multiplier (* g for gained groups).
///   conv:        [k, k, C_src, C_dst], stride 1, same padding
///   dense:       [N_dst, N_src]
///   elementwise: [C], source neuron i -> target neuron i
struct SynapseGroup {
  SynapseKind kind = SynapseKind::conv;
  std::uint32_t source = 0;
  std::int32_t gain = kNoGain;
  std::int32_t multiplier = 1;
  QuantizedWeights weights;

  friend bool operator==(const SynapseGroup&, const SynapseGroup&) = default;
};

struct Int32Blob {
  std::vector<std::int32_t> data;
  double scale = 1.0;

  std::vector<double> values() const {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = scale * data[i];
    return out;
  }
  friend bool operator==(const Int32Blob&, const Int32Blob&) = default;
};

inline Int32Blob quantize_bias(std::span<const double> b) {
  double amax = 0.0;
  for (double v : b) amax = std::max(amax, std::abs(v));
  Int32Blob out{std::vector<std::int32_t>(b.size()), amax > 0.0 ? amax / static_cast<double>(kMaxThreshold) : 1.0};
  for (std::size_t i = 0; i < b.size(); ++i) out.data[i] = static_cast<std::int32_t>(std::lround(b[i] / out.scale));
  return out;
}

struct SnnNode {
  NodeKind kind = NodeKind::spiking;
  std::string name;
  Shape shape;  // [H, W, C]
  bool is_signed = false;
  QuantParams qp;
  std::int32_t cap = 0;  // saturation cap in code units; 0 = none
  std::vector<std::int32_t> thresholds;  // per channel
  std::vector<std::int32_t> biases;      // per channel, charge per step
  std::uint32_t source = 0;              // maxpool / gain nodes
  std::uint32_t window = 0;              // maxpool
  std::vector<SynapseGroup> synapses;
  std::vector<QuantizedWeights> params;  // gain nodes
  std::vector<Int32Blob> param_biases;   // gain nodes

  std::size_t channels() const { return shape.at(2); }
  std::size_t neurons() const { return shape_size(shape); }
  std::int32_t levels() const { return is_signed ? 127 : 255; }
  /// Value represented by rate 1.
  double full_scale() const { return levels() * qp.scale; }
  double value_of_rate(double r) const { return (r * levels() - qp.zero_point) * qp.scale; }

  friend bool operator==(const SnnNode&, const SnnNode&) = default;
};

/// One row per source CNN layer.
struct MappingEntry {
  std::string source;
  std::string source_kind;
  std::string target;  // node name, or "-" when the layer vanishes at inference
  std::string role;

  friend bool operator==(const MappingEntry&, const MappingEntry&) = default;
};

struct SnnSpec {
  std::vector<SnnNode> nodes;
  std::uint32_t output = 0;
  std::vector<MappingEntry> mapping;

  const SnnNode& output_node() const { return nodes.at(output); }
  std::size_t num_classes() const { return output_node().neurons(); }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return i;
    throw Error(Errc::invalid_argument, "snn: no node named '" + name + "'");
  }

  void validate() const;

  friend bool operator==(const SnnSpec&, const SnnSpec&) = default;
};

inline void SnnSpec::validate() const {
  auto fail = [](const SnnNode& n, const std::string& msg) {
    throw Error(Errc::corrupt, "snn node '" + n.name + "': " + msg);
  };
  if (nodes.empty() || nodes[0].kind != NodeKind::input) throw Error(Errc::corrupt, "snn: first node must be the input");
  if (output >= nodes.size() || nodes[output].kind != NodeKind::spiking)
    throw Error(Errc::corrupt, "snn: output index does not name a spiking node");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.shape.size() != 3 || shape_size(n.shape) == 0) fail(n, "shape must be [H, W, C]");
    n.qp.validate(n.name);
    if (i > 0 && n.kind == NodeKind::input) fail(n, "only node 0 may be an input");
    if (n.kind == NodeKind::maxpool || n.kind == NodeKind::gain_eca || n.kind == NodeKind::gain_se) {
      if (n.source >= i) fail(n, "source must precede the node");
      const auto& src = nodes[n.source];
      if (n.kind == NodeKind::maxpool) {
        if (n.window == 0 || src.shape[0] != n.shape[0] * n.window || src.shape[1] != n.shape[1] * n.window ||
            src.shape[2] != n.shape[2])
          fail(n, "pool window does not match source shape");
        if (n.is_signed != src.is_signed || !(n.qp == src.qp)) fail(n, "pool must share the source slot");
      } else {
        const std::size_t want = n.kind == NodeKind::gain_eca ? src.neurons() : src.channels();
        if (n.neurons() != want) fail(n, "gain size does not match source");
        if (n.params.size() != 2 || n.param_biases.size() != 2) fail(n, "gain node needs two weight and bias tensors");
      }
    }
    if (n.kind != NodeKind::spiking) continue;
    const std::size_t c = n.channels();
    if (n.thresholds.size() != c || n.biases.size() != c) fail(n, "thresholds/biases must have one entry per channel");
    for (auto th : n.thresholds)
      if (th < 1 || th > kMaxThreshold) fail(n, "threshold outside [1, 2^30]");
    if (n.synapses.empty()) fail(n, "spiking node without inputs");
    for (const auto& g : n.synapses) {
      if (g.source >= i) fail(n, "synapse source must precede the node");
      const auto& src = nodes[g.source];
      if (src.kind == NodeKind::gain_eca || src.kind == NodeKind::gain_se) fail(n, "synapse from a gain node");
      const auto& ws = g.weights.shape;
      if (g.weights.data.size() != shape_size(ws)) fail(n, "weight blob length mismatch");
      switch (g.kind) {
        case SynapseKind::conv:
          if (ws.size() != 4 || ws[0] != ws[1] || ws[0] % 2 == 0 || ws[2] != src.channels() || ws[3] != c ||
              src.shape[0] != n.shape[0] || src.shape[1] != n.shape[1])
            fail(n, "conv synapse shape " + shape_string(ws) + " does not fit " + shape_string(src.shape) + " -> " +
                        shape_string(n.shape));
          break;
        case SynapseKind::dense:
          if (ws.size() != 2 || ws[0] != n.neurons() || ws[1] != src.neurons()) fail(n, "dense synapse shape mismatch");
          break;
        case SynapseKind::elementwise:
          if (ws.size() != 1 || ws[0] != c || src.shape != n.shape) fail(n, "elementwise synapse shape mismatch");
          break;
      }
      if (g.gain != kNoGain) {
        if (g.gain < 0 || static_cast<std::size_t>(g.gain) >= i) fail(n, "gain index out of range");
        const auto& gn = nodes[static_cast<std::size_t>(g.gain)];
        if ((gn.kind != NodeKind::gain_eca && gn.kind != NodeKind::gain_se) || gn.source != g.source)
          fail(n, "gain node must gate the synapse source");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// gates evaluated from window-end values

/// Gate codes for gain node `gain` given the source values [1, H, W, C].
inline std::vector<std::int32_t> evaluate_gain(const SnnNode& gain, const TensorD& src) {
  TensorD gate;
  if (gain.kind == NodeKind::gain_eca) {
    const auto dw = ops::depthwise_conv2d<double>(src, dequantize(gain.params[0]), gain.param_biases[0].values());
    gate = ops::sigmoid(ops::conv2d<double>(dw, dequantize(gain.params[1]), gain.param_biases[1].values()));
  } else if (gain.kind == NodeKind::gain_se) {
    const auto hidden =
        ops::relu(ops::dense<double>(ops::spatial_mean(src), dequantize(gain.params[0]), gain.param_biases[0].values()));
    gate = ops::sigmoid(ops::dense<double>(hidden, dequantize(gain.params[1]), gain.param_biases[1].values()));
  } else {
    throw Error(Errc::invalid_argument, "evaluate_gain: '" + gain.name + "' is not a gain node");
  }
  std::vector<std::int32_t> out(gate.size());
  for (std::size_t i = 0; i < gate.size(); ++i)
    out[i] = static_cast<std::int32_t>(std::lround(gate[i] * kGainLevels));
  return out;
}

// ---------------------------------------------------------------------------
// serialization

inline constexpr std::uint32_t kSnnVersion = 1;

namespace detail {

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    const T v = get_le<T>(b_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  std::vector<T> array() {
    const auto n = get<std::uint32_t>();
    need(static_cast<std::size_t>(n) * sizeof(T));
    std::vector<T> out(n);
    for (auto& v : out) v = get<T>();
    return out;
  }
  Shape shape() {
    Shape s;
    for (auto d : array<std::uint32_t>()) s.push_back(d);
    return s;
  }
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw Error(Errc::corrupt, what_ + ": truncated");
  }
  bool done() const { return pos_ == b_.size(); }
  const std::string& what() const { return what_; }

 private:
  const std::string& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void put_str(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

template <class T>
void put_array(std::string& out, std::span<const T> v) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  for (const T& x : v) put_le<T>(out, x);
}

inline void put_shape(std::string& out, const Shape& s) {
  std::vector<std::uint32_t> d(s.begin(), s.end());
  put_array<std::uint32_t>(out, d);
}

inline void put_weights(std::string& out, const QuantizedWeights& w) {
  put_shape(out, w.shape);
  put_le<double>(out, w.scale);
  put_array<std::int8_t>(out, w.data);
}

inline QuantizedWeights get_weights(Reader& r) {
  QuantizedWeights w;
  w.shape = r.shape();
  w.scale = r.get<double>();
  w.data = r.array<std::int8_t>();
  return w;
}

}  // namespace detail

inline std::string encode_snn(const SnnSpec& spec) {
  using namespace detail;
  std::string out = "QSNN";
  put_le<std::uint32_t>(out, kSnnVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.nodes.size()));
  put_le<std::uint32_t>(out, spec.output);
  for (const auto& n : spec.nodes) {
    out.push_back(static_cast<char>(n.kind));
    put_str(out, n.name);
    out.push_back(n.is_signed ? 1 : 0);
    put_shape(out, n.shape);
    put_le<double>(out, n.qp.scale);
    put_le<std::int32_t>(out, n.qp.zero_point);
    put_le<std::int32_t>(out, n.cap);
    put_array<std::int32_t>(out, n.thresholds);
    put_array<std::int32_t>(out, n.biases);
    put_le<std::uint32_t>(out, n.source);
    put_le<std::uint32_t>(out, n.window);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n.synapses.size()));
    for (const auto& g : n.synapses) {
      out.push_back(static_cast<char>(g.kind));
      put_le<std::uint32_t>(out, g.source);
      put_le<std::int32_t>(out, g.gain);
      put_le<std::int32_t>(out, g.multiplier);
      put_weights(out, g.weights);
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n.params.size()));
    for (const auto& w : n.params) put_weights(out, w);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n.param_biases.size()));
    for (const auto& b : n.param_biases) {
      put_array<std::int32_t>(out, b.data);
      put_le<double>(out, b.scale);
    }
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.mapping.size()));
  for (const auto& m : spec.mapping) {
    put_str(out, m.source);
    put_str(out, m.source_kind);
    put_str(out, m.target);
    put_str(out, m.role);
  }
  return out;
}

inline SnnSpec decode_snn(const std::string& bytes, const std::string& what = "snn") {
  detail::Reader r(bytes, what);
  r.need(4);
  if (bytes.compare(0, 4, "QSNN") != 0) throw Error(Errc::corrupt, what + ": not a QSNN file");
  for (int i = 0; i < 4; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kSnnVersion)
    throw Error(Errc::version_mismatch,
                what + ": snn format version " + std::to_string(version) + ", expected " + std::to_string(kSnnVersion));
  SnnSpec spec;
  const auto count = r.get<std::uint32_t>();
  spec.output = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    SnnNode n;
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(NodeKind::gain_se))
      throw Error(Errc::corrupt, what + ": unknown node kind " + std::to_string(kind));
    n.kind = static_cast<NodeKind>(kind);
    n.name = r.str();
    n.is_signed = r.get<std::uint8_t>() != 0;
    n.shape = r.shape();
    n.qp.scale = r.get<double>();
    n.qp.zero_point = r.get<std::int32_t>();
    n.cap = r.get<std::int32_t>();
    n.thresholds = r.array<std::int32_t>();
    n.biases = r.array<std::int32_t>();
    n.source = r.get<std::uint32_t>();
    n.window = r.get<std::uint32_t>();
    const auto ng = r.get<std::uint32_t>();
    for (std::uint32_t g = 0; g < ng; ++g) {
      SynapseGroup s;
      const auto sk = r.get<std::uint8_t>();
      if (sk > static_cast<std::uint8_t>(SynapseKind::elementwise))
        throw Error(Errc::corrupt, what + ": unknown synapse kind " + std::to_string(sk));
      s.kind = static_cast<SynapseKind>(sk);
      s.source = r.get<std::uint32_t>();
      s.gain = r.get<std::int32_t>();
      s.multiplier = r.get<std::int32_t>();
      s.weights = detail::get_weights(r);
      n.synapses.push_back(std::move(s));
    }
    const auto np = r.get<std::uint32_t>();
    for (std::uint32_t p = 0; p < np; ++p) n.params.push_back(detail::get_weights(r));
    const auto nb = r.get<std::uint32_t>();
    for (std::uint32_t p = 0; p < nb; ++p) {
      Int32Blob b;
      b.data = r.array<std::int32_t>();
      b.scale = r.get<double>();
      n.param_biases.push_back(std::move(b));
    }
    spec.nodes.push_back(std::move(n));
  }
  const auto nm = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nm; ++i) {
    MappingEntry m;
    m.source = r.str();
    m.source_kind = r.str();
    m.target = r.str();
    m.role = r.str();
    spec.mapping.push_back(std::move(m));
  }
  if (!r.done()) throw Error(Errc::corrupt, what + ": trailing bytes");
  spec.validate();
  return spec;
}

inline void save_snn(const std::filesystem::path& path, const SnnSpec& spec) {
  detail::write_file(path, encode_snn(spec));
}

inline SnnSpec load_snn(const std::filesystem::path& path) { return decode_snn(detail::read_file(path), path.string()); }

}  // namespace qana
