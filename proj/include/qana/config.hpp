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


// Plain-text run configuration.
//
//   # comment
//   key = value
//
// Keys are fixed (see RunConfig::keys()); unknown or repeated keys are
// rejected with the offending line number. Lists are comma separated.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qana/arch.hpp"
#include "qana/error.hpp"
#include "qana/image_io.hpp"

namespace qana {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw Error(Errc::config, "config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out))
    throw Error(Errc::config, "config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Errc::config, "config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    out.push_back(trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(const std::string& text, const std::string& what = "config") {
  KeyValues out;
  std::map<std::string, std::size_t> seen;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string raw = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const auto hash = raw.find('#');
    const auto line = detail::trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = what + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw Error(Errc::config, where + ": expected 'key = value'");
    auto key = detail::trim(std::string_view(line).substr(0, eq));
    auto value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw Error(Errc::config, where + ": empty key");
    if (auto it = seen.find(key); it != seen.end())
      throw Error(Errc::config, where + ": '" + key + "' already set on line " + std::to_string(it->second));
    seen[key] = lineno;
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// ---------------------------------------------------------------------------
// architecture as key=value text (embedded in model files)

inline std::string encode_arch(const QanaConfig& c) {
  std::string widths;
  for (auto w : c.block_channels) widths += (widths.empty() ? "" : ",") + std::to_string(w);
  std::string out;
  out += "input_size=" + std::to_string(c.input_size) + "\n";
  out += "input_channels=" + std::to_string(c.input_channels) + "\n";
  out += "block_channels=" + widths + "\n";
  out += "ghost_ratio=" + detail::format_double(c.ghost_ratio) + "\n";
  out += "ghost_kernel=" + std::to_string(c.ghost_kernel) + "\n";
  out += "dropout=" + detail::format_double(c.dropout) + "\n";
  out += "eca_kernel=" + std::to_string(c.eca_kernel) + "\n";
  out += "se_reduction=" + std::to_string(c.se_reduction) + "\n";
  out += "num_classes=" + std::to_string(c.num_classes) + "\n";
  out += "head_channels=" + std::to_string(c.head_channels) + "\n";
  out += "bn_momentum=" + detail::format_double(c.bn_momentum) + "\n";
  out += "bn_eps=" + detail::format_double(c.bn_eps) + "\n";
  return out;
}

inline std::array<std::size_t, QanaConfig::num_blocks> parse_widths(const std::string& key, const std::string& v) {
  const auto items = detail::split_list(v);
  if (items.size() != QanaConfig::num_blocks)
    throw Error(Errc::config, "config: '" + key + "' needs " + std::to_string(QanaConfig::num_blocks) + " widths");
  std::array<std::size_t, QanaConfig::num_blocks> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::parse_uint(key, items[i]);
  return out;
}

inline QanaConfig decode_arch(const std::string& text) {
  QanaConfig c;
  for (const auto& [k, v] : parse_key_values(text, "architecture")) {
    if (k == "input_size") c.input_size = detail::parse_uint(k, v);
    else if (k == "input_channels") c.input_channels = detail::parse_uint(k, v);
    else if (k == "block_channels") c.block_channels = parse_widths(k, v);
    else if (k == "ghost_ratio") c.ghost_ratio = detail::parse_double(k, v);
    else if (k == "ghost_kernel") c.ghost_kernel = detail::parse_uint(k, v);
    else if (k == "dropout") c.dropout = detail::parse_double(k, v);
    else if (k == "eca_kernel") c.eca_kernel = detail::parse_uint(k, v);
    else if (k == "se_reduction") c.se_reduction = detail::parse_uint(k, v);
    else if (k == "num_classes") c.num_classes = detail::parse_uint(k, v);
    else if (k == "head_channels") c.head_channels = detail::parse_uint(k, v);
    else if (k == "bn_momentum") c.bn_momentum = detail::parse_double(k, v);
    else if (k == "bn_eps") c.bn_eps = detail::parse_double(k, v);
    else throw Error(Errc::config, "architecture: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// run configuration

struct RunConfig {
  std::uint64_t seed = 42;
  std::string out = "out";

  // paths
  std::string data_dir = "data";     // images/, labels.csv, splits.csv
  std::string dataset = "prepared";  // preprocessed bundles train/val/test.qds
  std::string model = "model.qana";
  std::string snn = "model.qsnn";
  std::string thresholds;  // empty: plain argmax
  std::string input;       // single image for infer; empty: use the test split

  // synth
  std::size_t synth_per_class = 100;
  double synth_imbalance = 1.0;

  // preprocess
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  bool smote = true;
  std::size_t smote_k = 5;
  std::size_t min_side = 32;

  // model and training
  std::array<std::size_t, QanaConfig::num_blocks> widths{8, 16, 32, 64};
  std::size_t head_channels = 256;
  double dropout = 0.0;
  std::size_t epochs = 6;
  std::size_t batch_size = 32;
  double lr = 2e-3;
  bool augment = false;
  bool cosine = true;

  // conversion and simulation
  std::size_t calibration_samples = 64;
  std::size_t T = 64;
  std::string encoding = "deterministic";
  double alpha = 1.0;
  double beta = 0.0;
  std::size_t verify_samples = 50;
  std::size_t infer_samples = 0;  // 0: whole test split
  bool trace = false;

  QanaConfig arch() const {
    QanaConfig c;
    c.block_channels = widths;
    c.head_channels = head_channels;
    c.dropout = dropout;
    c.validate();
    return c;
  }

  struct Key {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
  };

  static const std::vector<Key>& keys();

  void set(const std::string& key, const std::string& value) {
    for (const auto& k : keys())
      if (k.name == key) {
        k.set(*this, value);
        return;
      }
    throw Error(Errc::config, "config: unknown key '" + key + "'");
  }

  void validate() const {
    arch();
    if (synth_per_class == 0) throw Error(Errc::config, "config: synth.per_class must be >= 1");
    if (synth_imbalance < 1.0) throw Error(Errc::config, "config: synth.imbalance must be >= 1");
    if (T == 0 || T > (std::size_t{1} << 16)) throw Error(Errc::config, "config: T must lie in [1, 65536]");
    if (encoding != "deterministic" && encoding != "poisson")
      throw Error(Errc::config, "config: encoding must be deterministic or poisson");
    if (!(alpha > 0.0)) throw Error(Errc::config, "config: decode.alpha must be > 0");
    if (!(beta >= 0.0)) throw Error(Errc::config, "config: decode.beta must be >= 0");
    if (batch_size == 0) throw Error(Errc::config, "config: train.batch_size must be >= 1");
    if (!(lr >= 0.0)) throw Error(Errc::config, "config: train.lr must be >= 0");
    if (calibration_samples == 0) throw Error(Errc::config, "config: convert.calibration_samples must be >= 1");
    if (verify_samples == 0) throw Error(Errc::config, "config: verify.samples must be >= 1");
  }

  /// Every key with its current value, in schema order.
  std::string effective() const {
    std::string out;
    for (const auto& k : keys()) out += k.name + " = " + k.get(*this) + "\n";
    return out;
  }
};

inline const std::vector<RunConfig::Key>& RunConfig::keys() {
  using R = RunConfig;
  auto str = [](std::string R::*m) {
    return std::pair{std::function<void(R&, const std::string&)>([m](R& r, const std::string& v) { r.*m = v; }),
                     std::function<std::string(const R&)>([m](const R& r) { return r.*m; })};
  };
  auto uint = [](std::size_t R::*m, const std::string& name) {
    return std::pair{std::function<void(R&, const std::string&)>(
                         [m, name](R& r, const std::string& v) { r.*m = detail::parse_uint(name, v); }),
                     std::function<std::string(const R&)>([m](const R& r) { return std::to_string(r.*m); })};
  };
  auto real = [](double R::*m, const std::string& name) {
    return std::pair{std::function<void(R&, const std::string&)>(
                         [m, name](R& r, const std::string& v) { r.*m = detail::parse_double(name, v); }),
                     std::function<std::string(const R&)>([m](const R& r) { return detail::format_double(r.*m); })};
  };
  auto flag = [](bool R::*m, const std::string& name) {
    return std::pair{std::function<void(R&, const std::string&)>(
                         [m, name](R& r, const std::string& v) { r.*m = detail::parse_bool(name, v); }),
                     std::function<std::string(const R&)>([m](const R& r) { return std::string(r.*m ? "true" : "false"); })};
  };
  auto key = [](std::string name, std::string help, auto accessors) {
    return Key{std::move(name), std::move(help), std::move(accessors.first), std::move(accessors.second)};
  };
  static const std::vector<Key> table = {
      Key{"seed", "root seed; every stage derives its own stream",
          [](R& r, const std::string& v) { r.seed = detail::parse_uint("seed", v); },
          [](const R& r) { return std::to_string(r.seed); }},
      key("out", "output directory", str(&R::out)),
      key("data_dir", "raw dataset directory (images/, labels.csv, splits.csv)", str(&R::data_dir)),
      key("dataset", "directory of preprocessed train/val/test bundles", str(&R::dataset)),
      key("model", "float model file", str(&R::model)),
      key("snn", "spiking network file", str(&R::snn)),
      key("thresholds", "per-class threshold CSV used by infer (optional)", str(&R::thresholds)),
      key("input", "single image for infer (optional)", str(&R::input)),
      key("synth.per_class", "images in the majority class", uint(&R::synth_per_class, "synth.per_class")),
      key("synth.imbalance", "majority : minority count ratio", real(&R::synth_imbalance, "synth.imbalance")),
      key("split.train", "train fraction per class", real(&R::train_fraction, "split.train")),
      key("split.val", "validation fraction per class", real(&R::val_fraction, "split.val")),
      key("smote", "oversample minority classes of the train split", flag(&R::smote, "smote")),
      key("smote.k", "SMOTE neighbours", uint(&R::smote_k, "smote.k")),
      key("quality.min_side", "reject images with a shorter side", uint(&R::min_side, "quality.min_side")),
      Key{"model.widths", "block output channels (4 values)",
          [](R& r, const std::string& v) { r.widths = parse_widths("model.widths", v); },
          [](const R& r) {
            std::string s;
            for (auto w : r.widths) s += (s.empty() ? "" : ",") + std::to_string(w);
            return s;
          }},
      key("model.head_channels", "spike head channels", uint(&R::head_channels, "model.head_channels")),
      key("model.dropout", "dropout rate after each block", real(&R::dropout, "model.dropout")),
      key("train.epochs", "training epochs", uint(&R::epochs, "train.epochs")),
      key("train.batch_size", "minibatch size", uint(&R::batch_size, "train.batch_size")),
      key("train.lr", "Adam learning rate", real(&R::lr, "train.lr")),
      key("train.augment", "on-the-fly augmentation", flag(&R::augment, "train.augment")),
      key("train.cosine", "cosine learning-rate decay over the epochs", flag(&R::cosine, "train.cosine")),
      key("convert.calibration_samples", "train samples used for activation ranges",
          uint(&R::calibration_samples, "convert.calibration_samples")),
      key("T", "integration window in steps", uint(&R::T, "T")),
      key("encoding", "input coding: deterministic or poisson", str(&R::encoding)),
      key("decode.alpha", "softmax scale on spike counts", real(&R::alpha, "decode.alpha")),
      key("decode.beta", "temporal decay of step weights (0 = uniform)", real(&R::beta, "decode.beta")),
      key("verify.samples", "test samples compared by verify", uint(&R::verify_samples, "verify.samples")),
      key("infer.samples", "test samples classified by infer (0 = all)", uint(&R::infer_samples, "infer.samples")),
      key("trace", "write a per-step spike trace from infer", flag(&R::trace, "trace")),
  };
  return table;
}

inline RunConfig parse_run_config(const std::string& text, const std::string& what = "config") {
  RunConfig cfg;
  for (const auto& [k, v] : parse_key_values(text, what)) {
    try {
      cfg.set(k, v);
    } catch (const Error& e) {
      throw Error(Errc::config, what + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(detail::read_file(path), path.string());
}

}  // namespace qana
