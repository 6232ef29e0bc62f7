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


// Event-driven simulation of an SnnSpec over an integration window of T
// steps, spike-count decoding and per-class threshold calibration.
//
// Nodes are simulated stage by stage in topological order: a stage runs
// its full window against the recorded trains of its sources. For purely
// feed-forward spiking chains this is identical to advancing all layers
// step by step; it lets pool and gain nodes read window-end counts.
//
// Neurons integrate with 64-bit membranes starting at threshold / 2 and
// reset by subtraction. At most one event per neuron and step:
//   V >= theta           -> +1, V -= theta
//   V < 0 (signed only)  -> -1, V += theta
// An unsigned neuron with a cap stops firing once its count reaches
// round(cap * T / 255).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qana/snn.hpp"

namespace qana {

/// Events of one node: per step, the firing neurons. A negative event is
/// stored as -(index + 1).
struct SpikeTrain {
  std::size_t neurons = 0;
  std::vector<std::vector<std::int32_t>> steps;
  std::vector<std::int32_t> counts;  // net count per neuron

  std::size_t window() const { return steps.size(); }
  std::uint64_t events() const {
    std::uint64_t n = 0;
    for (const auto& s : steps) n += s.size();
    return n;
  }
};

inline std::int32_t encode_event(std::size_t neuron, int sign) {
  return sign > 0 ? static_cast<std::int32_t>(neuron) : -static_cast<std::int32_t>(neuron) - 1;
}

enum class Encoding : std::uint8_t { deterministic, poisson };

/// Pixel a in [0, 1] fires at step t (1-based) iff floor(a t) > floor(a (t - 1)),
/// giving floor(a T) evenly spaced events.
inline SpikeTrain rate_encode(std::span<const float> pixels, std::size_t T) {
  if (T == 0) throw Error(Errc::invalid_argument, "rate_encode: T must be >= 1");
  SpikeTrain out{pixels.size(), std::vector<std::vector<std::int32_t>>(T), std::vector<std::int32_t>(pixels.size())};
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double a = std::clamp(static_cast<double>(pixels[i]), 0.0, 1.0);
    double prev = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const double cur = std::floor(a * static_cast<double>(t));
      if (cur > prev) {
        out.steps[t - 1].push_back(static_cast<std::int32_t>(i));
        ++out.counts[i];
      }
      prev = cur;
    }
  }
  return out;
}

/// Bernoulli(a) per step from a seeded generator.
inline SpikeTrain poisson_encode(std::span<const float> pixels, std::size_t T, std::uint64_t seed) {
  if (T == 0) throw Error(Errc::invalid_argument, "poisson_encode: T must be >= 1");
  SpikeTrain out{pixels.size(), std::vector<std::vector<std::int32_t>>(T), std::vector<std::int32_t>(pixels.size())};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < pixels.size(); ++i)
      if (u(rng) < std::clamp(static_cast<double>(pixels[i]), 0.0, 1.0)) {
        out.steps[t].push_back(static_cast<std::int32_t>(i));
        ++out.counts[i];
      }
  return out;
}

/// Output-class spike counts: per_step[t][c] is S_c(t + 1).
struct SpikeRecord {
  std::vector<std::vector<std::int32_t>> per_step;
  std::vector<std::int64_t> totals;

  std::size_t window() const { return per_step.size(); }
  std::size_t classes() const { return totals.size(); }
};

struct SpikeStats {
  std::uint64_t total_events = 0;
  std::vector<std::pair<std::string, std::uint64_t>> events_per_layer;
  std::vector<std::pair<std::string, double>> rate_per_layer;  // events / (neurons * T)
};

struct TraceEvent {
  std::uint32_t step;  // 1-based
  std::uint32_t node;
  std::uint32_t neuron;
  std::int8_t event;  // +1 / -1
};

struct SimOptions {
  bool record_trace = false;
  std::vector<std::string> trace_nodes;  // empty: all nodes
};

struct SimResult {
  SpikeRecord record;
  SpikeStats stats;
  std::vector<std::vector<std::int32_t>> counts;  // net counts per node (empty for gain nodes)
  std::vector<std::vector<std::int32_t>> gains;   // gate codes per gain node
  std::vector<TraceEvent> trace;
};

namespace detail {

inline std::int64_t cap_count(const SnnNode& n, std::size_t T) {
  if (n.cap <= 0 || n.is_signed) return std::numeric_limits<std::int64_t>::max();
  return (static_cast<std::int64_t>(n.cap) * static_cast<std::int64_t>(T) + n.levels() / 2) / n.levels();
}

/// Worst-case |V| over a window of T steps; throws if it could leave int64.
inline void check_accumulator_bound(const SnnSpec& spec, const SnnNode& n, std::size_t T) {
  const std::size_t c = n.channels();
  std::vector<long double> per_channel(c, 0.0L);
  std::vector<long double> per_neuron;
  for (const auto& g : n.synapses) {
    const long double m = std::abs(static_cast<long double>(g.multiplier)) * (g.gain == kNoGain ? 1 : kGainLevels);
    const auto& w = g.weights.data;
    switch (g.kind) {
      case SynapseKind::conv:
      case SynapseKind::elementwise:
        for (std::size_t i = 0; i < w.size(); ++i) per_channel[i % c] += std::abs(static_cast<long double>(w[i])) * m;
        break;
      case SynapseKind::dense: {
        const std::size_t in = g.weights.shape[1];
        per_neuron.resize(n.neurons(), 0.0L);
        for (std::size_t o = 0; o < per_neuron.size(); ++o)
          for (std::size_t i = 0; i < in; ++i) per_neuron[o] += std::abs(static_cast<long double>(w[o * in + i])) * m;
        break;
      }
    }
  }
  long double worst = 0.0L;
  for (std::size_t i = 0; i < n.neurons(); ++i) {
    const std::size_t ch = i % c;
    const long double th = n.thresholds[ch];
    const long double step = per_channel[ch] + (per_neuron.empty() ? 0.0L : per_neuron[i]) +
                             std::abs(static_cast<long double>(n.biases[ch])) + th;
    worst = std::max(worst, th + static_cast<long double>(T) * step);
  }
  if (worst >= static_cast<long double>(std::numeric_limits<std::int64_t>::max()) / 2)
    throw Error(Errc::overflow, "snn node '" + n.name + "': membrane bound " + std::to_string(static_cast<double>(worst)) +
                                    " over T=" + std::to_string(T) + " exceeds the 64-bit accumulator");
  (void)spec;
}

/// Synapse weights pre-multiplied by the group multiplier; dense groups are
/// transposed to [N_src, N_dst] so one event touches a contiguous row.
inline std::vector<std::int64_t> expand_weights(const SynapseGroup& g) {
  const auto& w = g.weights.data;
  std::vector<std::int64_t> out(w.size());
  if (g.kind == SynapseKind::dense) {
    const std::size_t dst = g.weights.shape[0], src = g.weights.shape[1];
    for (std::size_t o = 0; o < dst; ++o)
      for (std::size_t i = 0; i < src; ++i) out[i * dst + o] = static_cast<std::int64_t>(w[o * src + i]) * g.multiplier;
  } else {
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<std::int64_t>(w[i]) * g.multiplier;
  }
  return out;
}

class SpikingStage {
 public:
  SpikingStage(const SnnSpec& spec, const SnnNode& node, std::size_t T)
      : node_(node), T_(T), v_(node.neurons()), count_(node.neurons(), 0), touched_(node.neurons() / node.channels(), 0) {
    const std::size_t c = node.channels();
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] = node.thresholds[i % c] / 2;
    tonic_ = std::any_of(node.biases.begin(), node.biases.end(), [](std::int32_t b) { return b != 0; });
    cap_ = cap_count(node, T);
    for (const auto& g : node.synapses) weights_.push_back(expand_weights(g));
    (void)spec;
  }

  /// Runs the window. `trains[i]` is the train of node i (or empty),
  /// `gains[i]` the gate codes of gain node i.
  SpikeTrain run(const SnnSpec& spec, const std::vector<SpikeTrain>& trains,
                 const std::vector<std::vector<std::int32_t>>& gains) {
    const std::size_t n = node_.neurons(), c = node_.channels();
    SpikeTrain out{n, std::vector<std::vector<std::int32_t>>(T_), {}};
    std::vector<std::size_t> pending, next_pending;
    std::vector<std::size_t> positions;
    for (std::size_t t = 0; t < T_; ++t) {
      positions.clear();
      const auto stamp = static_cast<std::uint32_t>(t + 1);
      for (std::size_t gi = 0; gi < node_.synapses.size(); ++gi) {
        const auto& g = node_.synapses[gi];
        const auto& src = trains[g.source];
        const auto* gate = g.gain == kNoGain ? nullptr : &gains[static_cast<std::size_t>(g.gain)];
        for (const auto e : src.steps[t]) {
          const std::size_t i = e >= 0 ? static_cast<std::size_t>(e) : static_cast<std::size_t>(-(e + 1));
          std::int64_t f = e >= 0 ? 1 : -1;
          if (gate) f *= (*gate)[i % gate->size()];
          if (f == 0) continue;
          deliver(g, weights_[gi], spec.nodes[g.source], i, f, stamp, positions);
        }
      }
      auto& events = out.steps[t];
      if (tonic_) {
        for (std::size_t i = 0; i < n; ++i) {
          v_[i] += node_.biases[i % c];
          fire(i, events, next_pending);
        }
      } else {
        // Only neurons that received charge or still hold a supra-threshold
        // membrane can fire.
        for (std::size_t p : positions)
          for (std::size_t ch = 0; ch < c; ++ch) fire(p * c + ch, events, next_pending);
        for (std::size_t i : pending)
          if (touched_[i / c] != stamp) fire(i, events, next_pending);
      }
      std::sort(events.begin(), events.end(), [](std::int32_t a, std::int32_t b) {
        return (a >= 0 ? a : -(a + 1)) < (b >= 0 ? b : -(b + 1));
      });
      pending.swap(next_pending);
      next_pending.clear();
    }
    out.counts = std::move(count_);
    return out;
  }

 private:
  void mark(std::size_t position, std::uint32_t stamp, std::vector<std::size_t>& positions) {
    if (touched_[position] != stamp) {
      touched_[position] = stamp;
      positions.push_back(position);
    }
  }

  void deliver(const SynapseGroup& g, const std::vector<std::int64_t>& w, const SnnNode& src, std::size_t i,
               std::int64_t f, std::uint32_t stamp, std::vector<std::size_t>& positions) {
    const std::size_t c = node_.channels();
    switch (g.kind) {
      case SynapseKind::elementwise:
        v_[i] += f * w[i % c];
        mark(i / c, stamp, positions);
        break;
      case SynapseKind::dense: {
        const std::int64_t* row = w.data() + i * v_.size();
        for (std::size_t o = 0; o < v_.size(); ++o) v_[o] += f * row[o];
        for (std::size_t p = 0; p < touched_.size(); ++p) mark(p, stamp, positions);
        break;
      }
      case SynapseKind::conv: {
        const std::size_t k = g.weights.shape[0], pad = k / 2, cin = src.channels();
        const std::size_t h = node_.shape[0], wd = node_.shape[1];
        const std::size_t ci = i % cin, pos = i / cin, y = pos / wd, x = pos % wd;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(y + pad) - static_cast<std::ptrdiff_t>(ky);
          if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(x + pad) - static_cast<std::ptrdiff_t>(kx);
            if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(wd)) continue;
            const std::size_t op = static_cast<std::size_t>(oy) * wd + static_cast<std::size_t>(ox);
            const std::int64_t* wk = w.data() + ((ky * k + kx) * cin + ci) * c;
            std::int64_t* vv = v_.data() + op * c;
            for (std::size_t co = 0; co < c; ++co) vv[co] += f * wk[co];
            mark(op, stamp, positions);
          }
        }
        break;
      }
    }
  }

  void fire(std::size_t i, std::vector<std::int32_t>& events, std::vector<std::size_t>& pending) {
    const std::int64_t th = node_.thresholds[i % node_.channels()];
    if (v_[i] >= th) {
      if (count_[i] >= cap_) return;
      v_[i] -= th;
      ++count_[i];
      events.push_back(encode_event(i, 1));
      if (v_[i] >= th) pending.push_back(i);
    } else if (node_.is_signed && v_[i] < 0) {
      v_[i] += th;
      --count_[i];
      events.push_back(encode_event(i, -1));
      if (v_[i] < 0) pending.push_back(i);
    }
  }

  const SnnNode& node_;
  std::size_t T_;
  std::vector<std::int64_t> v_;
  std::vector<std::int32_t> count_;
  std::vector<std::uint32_t> touched_;  // per spatial position: last step with input
  std::vector<std::vector<std::int64_t>> weights_;
  bool tonic_ = false;
  std::int64_t cap_ = 0;
};

inline SpikeTrain run_maxpool(const SnnNode& node, const SnnNode& src_node, const SpikeTrain& src) {
  const std::size_t c = node.channels(), ho = node.shape[0], wo = node.shape[1], win = node.window;
  const std::size_t wi = src_node.shape[1];
  std::vector<std::int32_t> winner_of(src.neurons, -1);
  SpikeTrain out{node.neurons(), std::vector<std::vector<std::int32_t>>(src.window()), std::vector<std::int32_t>(node.neurons())};
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = 0;
        std::int32_t best_count = std::numeric_limits<std::int32_t>::min();
        for (std::size_t dy = 0; dy < win; ++dy)
          for (std::size_t dx = 0; dx < win; ++dx) {
            const std::size_t i = ((oy * win + dy) * wi + ox * win + dx) * c + ch;
            if (src.counts[i] > best_count) {
              best_count = src.counts[i];
              best = i;
            }
          }
        const std::size_t o = (oy * wo + ox) * c + ch;
        winner_of[best] = static_cast<std::int32_t>(o);
        out.counts[o] = best_count;
      }
  for (std::size_t t = 0; t < src.window(); ++t) {
    for (const auto e : src.steps[t]) {
      const std::size_t i = e >= 0 ? static_cast<std::size_t>(e) : static_cast<std::size_t>(-(e + 1));
      if (winner_of[i] >= 0) out.steps[t].push_back(encode_event(static_cast<std::size_t>(winner_of[i]), e >= 0 ? 1 : -1));
    }
    std::sort(out.steps[t].begin(), out.steps[t].end(), [](std::int32_t a, std::int32_t b) {
      return (a >= 0 ? a : -(a + 1)) < (b >= 0 ? b : -(b + 1));
    });
  }
  return out;
}

/// Window-end values of a node as a [1, H, W, C] tensor.
inline TensorD window_values(const SnnNode& node, std::span<const std::int32_t> counts, std::size_t T) {
  TensorD out({1, node.shape[0], node.shape[1], node.shape[2]});
  for (std::size_t i = 0; i < counts.size(); ++i)
    out[i] = node.value_of_rate(static_cast<double>(counts[i]) / static_cast<double>(T));
  return out;
}

}  // namespace detail

/// Runs every node of `spec` against the input train. Deterministic.
inline SimResult simulate(const SnnSpec& spec, const SpikeTrain& input, std::size_t T, const SimOptions& opt = {}) {
  if (T == 0) throw Error(Errc::invalid_argument, "simulate: T must be >= 1");
  const auto& in_node = spec.nodes.at(0);
  if (input.neurons != in_node.neurons() || input.window() != T)
    throw Error(Errc::shape_mismatch, "simulate: input train has " + std::to_string(input.neurons) + " neurons x " +
                                          std::to_string(input.window()) + " steps, expected " +
                                          std::to_string(in_node.neurons()) + " x " + std::to_string(T));
  for (const auto& n : spec.nodes)
    if (n.kind == NodeKind::spiking) detail::check_accumulator_bound(spec, n, T);

  // Last consumer of each node, so trains can be released early.
  std::vector<std::size_t> last_use(spec.nodes.size(), 0);
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const auto& n = spec.nodes[i];
    if (n.kind == NodeKind::maxpool) last_use[n.source] = std::max(last_use[n.source], i);
    for (const auto& g : n.synapses) last_use[g.source] = std::max(last_use[g.source], i);
  }
  last_use[spec.output] = spec.nodes.size();

  SimResult res;
  std::vector<SpikeTrain> trains(spec.nodes.size());
  res.counts.resize(spec.nodes.size());
  res.gains.resize(spec.nodes.size());
  trains[0] = input;
  auto traced = [&](const std::string& name) {
    return opt.record_trace &&
           (opt.trace_nodes.empty() ||
            std::find(opt.trace_nodes.begin(), opt.trace_nodes.end(), name) != opt.trace_nodes.end());
  };
  auto account = [&](std::size_t idx) {
    const auto& n = spec.nodes[idx];
    const auto& tr = trains[idx];
    const auto ev = tr.events();
    res.stats.total_events += ev;
    res.stats.events_per_layer.emplace_back(n.name, ev);
    res.stats.rate_per_layer.emplace_back(n.name, static_cast<double>(ev) / static_cast<double>(n.neurons() * T));
    res.counts[idx] = tr.counts;
    if (traced(n.name))
      for (std::size_t t = 0; t < T; ++t)
        for (const auto e : tr.steps[t])
          res.trace.push_back({static_cast<std::uint32_t>(t + 1), static_cast<std::uint32_t>(idx),
                               static_cast<std::uint32_t>(e >= 0 ? e : -(e + 1)), static_cast<std::int8_t>(e >= 0 ? 1 : -1)});
  };
  account(0);
  for (std::size_t idx = 1; idx < spec.nodes.size(); ++idx) {
    const auto& n = spec.nodes[idx];
    switch (n.kind) {
      case NodeKind::input: throw Error(Errc::corrupt, "simulate: unexpected input node '" + n.name + "'");
      case NodeKind::spiking: trains[idx] = detail::SpikingStage(spec, n, T).run(spec, trains, res.gains); break;
      case NodeKind::maxpool: trains[idx] = detail::run_maxpool(n, spec.nodes[n.source], trains[n.source]); break;
      case NodeKind::gain_eca:
      case NodeKind::gain_se: {
        const auto& src = spec.nodes[n.source];
        res.gains[idx] = evaluate_gain(n, detail::window_values(src, res.counts[n.source], T));
        continue;
      }
    }
    account(idx);
    for (std::size_t j = 0; j < idx; ++j)
      if (last_use[j] <= idx && !trains[j].steps.empty()) trains[j] = SpikeTrain{};
  }
  const auto& out = trains[spec.output];
  const std::size_t k = out.neurons;
  res.record.per_step.assign(T, std::vector<std::int32_t>(k, 0));
  res.record.totals.assign(k, 0);
  for (std::size_t t = 0; t < T; ++t)
    for (const auto e : out.steps[t]) {
      const std::size_t i = e >= 0 ? static_cast<std::size_t>(e) : static_cast<std::size_t>(-(e + 1));
      const int s = e >= 0 ? 1 : -1;
      res.record.per_step[t][i] += s;
      res.record.totals[i] += s;
    }
  return res;
}

/// step,layer,neuron,event
inline std::string trace_csv(const SnnSpec& spec, const std::vector<TraceEvent>& trace) {
  std::string out = "step,layer,neuron,event\n";
  for (const auto& e : trace)
    out += std::to_string(e.step) + "," + spec.nodes[e.node].name + "," + std::to_string(e.neuron) + "," +
           std::to_string(static_cast<int>(e.event)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// decoding

struct DecodeConfig {
  double alpha = 1.0;
  double beta = 0.0;  // w_t = exp(-beta (T - t)); 0 gives uniform weights

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(Errc::config, "decode: alpha must be > 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error(Errc::config, "decode: beta must be >= 0");
  }
};

/// Per-class sums of w_t S_c(t).
inline std::vector<double> weighted_counts(const SpikeRecord& rec, const DecodeConfig& cfg) {
  const std::size_t T = rec.window(), k = rec.classes();
  std::vector<double> s(k, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double w = cfg.beta == 0.0 ? 1.0 : std::exp(-cfg.beta * static_cast<double>(T - t));
    for (std::size_t c = 0; c < k; ++c) s[c] += w * rec.per_step[t - 1][c];
  }
  return s;
}

/// softmax_c(alpha * sum_t w_t S_c(t))
inline std::vector<double> decode_probs(const SpikeRecord& rec, const DecodeConfig& cfg = {}) {
  cfg.validate();
  if (rec.classes() == 0) throw Error(Errc::empty_input, "decode_probs: record has no classes");
  auto z = weighted_counts(rec, cfg);
  for (auto& v : z) v *= cfg.alpha;
  return ops::softmax_row<double>(z);
}

/// Record whose totals are given and whose per-step counts are all placed at
/// the last step; convenient for tests and for count-only inputs.
inline SpikeRecord record_from_totals(std::span<const std::int64_t> totals, std::size_t T = 1) {
  SpikeRecord r;
  r.per_step.assign(T, std::vector<std::int32_t>(totals.size(), 0));
  r.totals.assign(totals.begin(), totals.end());
  for (std::size_t c = 0; c < totals.size(); ++c) r.per_step[T - 1][c] = static_cast<std::int32_t>(totals[c]);
  return r;
}

// ---------------------------------------------------------------------------
// per-class thresholds

struct ClassThresholds {
  std::vector<std::int64_t> theta;
};

/// Errors of the one-vs-rest rule "S > theta" for class membership `pos`.
inline std::size_t threshold_errors(std::span<const std::int64_t> counts, const std::vector<bool>& pos, std::int64_t theta) {
  std::size_t e = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) e += (counts[i] > theta) != pos[i] ? 1 : 0;
  return e;
}

/// For each class, the candidate (observed counts and 0) with the fewest
/// one-vs-rest errors; ties go to the smallest threshold.
inline ClassThresholds calibrate_thresholds(const std::vector<std::vector<std::int64_t>>& totals,
                                            std::span<const int> labels) {
  if (totals.empty()) throw Error(Errc::empty_input, "calibrate_thresholds: no validation records");
  if (totals.size() != labels.size()) throw ShapeError("calibrate_thresholds", "label count", labels.size(), totals.size());
  const std::size_t k = totals[0].size(), n = totals.size();
  ClassThresholds out{std::vector<std::int64_t>(k, 0)};
  for (std::size_t c = 0; c < k; ++c) {
    // Sweep candidates in increasing order; errors(theta) = positives with
    // S <= theta + negatives with S > theta.
    std::vector<std::pair<std::int64_t, bool>> pts(n);
    std::size_t negatives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (totals[i].size() != k) throw ShapeError("calibrate_thresholds", "classes in record", totals[i].size(), k);
      pts[i] = {totals[i][c], labels[i] == static_cast<int>(c)};
      negatives += pts[i].second ? 0 : 1;
    }
    std::sort(pts.begin(), pts.end());
    std::vector<std::int64_t> candidates{0};
    for (const auto& p : pts) candidates.push_back(p.first);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::size_t best_err = std::numeric_limits<std::size_t>::max(), j = 0, pos_le = 0, neg_le = 0;
    for (const auto theta : candidates) {
      while (j < n && pts[j].first <= theta) {
        (pts[j].second ? pos_le : neg_le) += 1;
        ++j;
      }
      const std::size_t err = pos_le + (negatives - neg_le);
      if (err < best_err) {
        best_err = err;
        out.theta[c] = theta;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// prediction

struct Prediction {
  int label = 0;
  std::vector<double> probs;
  SpikeRecord record;
  SpikeStats stats;
};

/// Argmax of decode_probs; with thresholds, classes with S_c <= theta_c are
/// skipped unless that would skip every class.
inline int select_class(std::span<const double> probs, std::span<const std::int64_t> totals,
                        const ClassThresholds* thresholds) {
  int best = -1;
  if (thresholds) {
    if (thresholds->theta.size() != probs.size())
      throw ShapeError("predict", "threshold count", thresholds->theta.size(), probs.size());
    for (std::size_t c = 0; c < probs.size(); ++c)
      if (totals[c] > thresholds->theta[c] && (best < 0 || probs[c] > probs[static_cast<std::size_t>(best)]))
        best = static_cast<int>(c);
  }
  if (best < 0) best = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  return best;
}

struct PredictOptions {
  std::size_t T = 64;
  Encoding encoding = Encoding::deterministic;
  std::uint64_t seed = 0;  // Poisson encoding
  SimOptions sim;
};

inline SpikeTrain encode_input(std::span<const float> pixels, const PredictOptions& opt) {
  return opt.encoding == Encoding::poisson ? poisson_encode(pixels, opt.T, opt.seed) : rate_encode(pixels, opt.T);
}

inline Prediction predict(const SnnSpec& spec, std::span<const float> pixels, const DecodeConfig& decode = {},
                          const ClassThresholds* thresholds = nullptr, const PredictOptions& opt = {},
                          std::vector<TraceEvent>* trace = nullptr) {
  auto sim = simulate(spec, encode_input(pixels, opt), opt.T, opt.sim);
  Prediction p;
  p.probs = decode_probs(sim.record, decode);
  p.label = select_class(p.probs, sim.record.totals, thresholds);
  p.record = std::move(sim.record);
  p.stats = std::move(sim.stats);
  if (trace) *trace = std::move(sim.trace);
  return p;
}

}  // namespace qana
