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


// Mini-batch Adam training on softmax cross-entropy, batched inference,
// evaluation and last-layer fine-tuning.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "qana/arch.hpp"
#include "qana/data.hpp"
#include "qana/metrics.hpp"

namespace qana {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augmentation;  // its seed is replaced by a stream derived from `seed`
  bool track_train_accuracy = false;  // extra infer-mode pass per epoch
  bool cosine_schedule = false;       // lr * (1 + cos(pi e / E)) / 2 in epoch e of E
  bool recalibrate_bn = false;        // re-estimate BN statistics on clean data after training

  // A zero learning rate is accepted as a dry run: losses are computed but
  // nothing in the store (including BN running statistics) is written.
  void validate() const {
    if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw Error(Errc::config, "train: learning rate must be >= 0");
    if (batch_size == 0) throw Error(Errc::config, "train: batch size must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
      throw Error(Errc::config, "train: Adam betas must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw Error(Errc::config, "train: Adam eps must be > 0");
  }
};

/// Adam state for the trainable entries of a store.
template <class T>
class Adam {
 public:
  Adam(const ParamStore<T>& params, AdamConfig cfg) : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  void set_lr(double lr) { cfg_.lr = lr; }

  void step(ParamStore<T>& params, const ParamStore<T>& grads) {
    if (cfg_.lr == 0.0) return;
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& pe = params.entries();
    const auto& ge = grads.entries();
    auto& me = m_.entries();
    auto& ve = v_.entries();
    for (std::size_t i = 0; i < pe.size(); ++i) {
      if (!pe[i].trainable) continue;
      auto w = pe[i].value.data();
      const auto g = ge[i].value.data();
      auto m = me[i].value.data();
      auto v = ve[i].value.data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j];
        m[j] = static_cast<T>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj);
        v[j] = static_cast<T>(cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj);
        const double mhat = m[j] / c1, vhat = v[j] / c2;
        w[j] = static_cast<T>(w[j] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  ParamStore<T> m_, v_;
  std::uint64_t t_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;            // mean batch loss in train mode
  double train_accuracy = -1.0; // infer mode; -1 when not tracked
  double val_accuracy = -1.0;   // -1 without a validation set
};

struct TrainResult {
  QanaModel<float> model;
  std::vector<EpochStats> history;
};

/// Infer-mode logits [N, K] in batches.
inline Tensor predict_logits(const QanaModel<float>& model, const std::vector<ImageSample>& samples,
                             std::size_t batch = 64) {
  const std::size_t n = samples.size(), k = model.config.num_classes;
  Tensor out({n, k});
  for (std::size_t s = 0; s < n; s += batch) {
    std::vector<std::size_t> idx(std::min(batch, n - s));
    std::iota(idx.begin(), idx.end(), s);
    const auto logits = model_forward(make_batch(samples, idx).first, model);
    std::copy(logits.storage().begin(), logits.storage().end(), out.ptr() + s * k);
  }
  return out;
}

inline std::vector<int> argmax_rows(const Tensor& scores) {
  require_rank(scores, 2, "argmax_rows");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = scores.ptr() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

inline double accuracy(const QanaModel<float>& model, const std::vector<ImageSample>& samples) {
  if (samples.empty()) return 0.0;
  const auto preds = argmax_rows(predict_logits(model, samples));
  std::size_t ok = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) ok += preds[i] == samples[i].label ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

/// Softmax probabilities of each row, in double.
inline std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(logits.ptr() + i * k, logits.ptr() + (i + 1) * k);
    const auto p = ops::softmax_row<double>(row);
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return out;
}

inline MetricsReport evaluate(const QanaModel<float>& model, const std::vector<ImageSample>& samples) {
  if (samples.empty()) throw Error(Errc::empty_input, "evaluate: empty dataset");
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  return compute_metrics(labels, softmax_rows(predict_logits(model, samples)), model.config.num_classes);
}

/// Replaces BN running statistics by the average of per-batch statistics
/// over `samples` (unaugmented, dropout off), so infer mode sees the
/// statistics of the final weights rather than a trailing average.
inline void recalibrate_batch_norm(QanaModel<float>& model, const std::vector<ImageSample>& samples,
                                   std::uint64_t seed, std::size_t batch_size = 64) {
  if (samples.empty()) throw Error(Errc::empty_input, "recalibrate_batch_norm: empty dataset");
  QanaConfig cfg = model.config;
  cfg.dropout = 0.0;
  // shuffled so each batch sees every class and per-batch variances match the
  // population variance
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t k = 0;
  for (std::size_t s = 0; s < samples.size(); s += batch_size, ++k) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(samples.size(), s + batch_size)));
    const auto x = make_batch(samples, idx).first;
    // momentum k / (k + 1) keeps a running mean of the batch statistics
    ForwardContext<float> ctx{ops::Mode::train, nullptr, &model.params,
                              static_cast<float>(static_cast<double>(k) / static_cast<double>(k + 1)),
                              static_cast<float>(cfg.bn_eps)};
    model_forward(x, cfg, model.params, ctx);
  }
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains a copy of `init` for cfg.epochs over shuffled mini-batches.
/// Everything random (shuffle order, augmentation, dropout) derives from
/// cfg.seed, so equal inputs give bitwise equal results.
inline TrainResult train(const QanaModel<float>& init, const std::vector<ImageSample>& data, const TrainConfig& cfg,
                         const std::vector<ImageSample>* val = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw Error(Errc::empty_input, "train: empty training set");
  for (const auto& s : data)
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= init.config.num_classes)
      throw Error(Errc::invalid_argument, "train: label " + std::to_string(s.label) + " out of range for '" +
                                              s.source_id + "'");
  TrainResult result{init, {}};
  auto& model = result.model;
  Adam<float> adam(model.params, cfg.adam);
  const bool dry_run = cfg.adam.lr == 0.0;

  std::seed_seq root{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x7a1eu};
  std::array<std::uint64_t, 3> seeds{};
  {
    std::array<std::uint32_t, 6> words{};
    root.generate(words.begin(), words.end());
    for (std::size_t i = 0; i < 3; ++i) seeds[i] = (std::uint64_t{words[2 * i]} << 32) | words[2 * i + 1];
  }
  std::mt19937_64 shuffle_rng(seeds[0]);
  std::mt19937_64 dropout_rng(seeds[1]);
  AugmentConfig aug = cfg.augmentation;
  aug.seed = seeds[2];

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_schedule)
      adam.set_lr(cfg.adam.lr * 0.5 *
                  (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs))));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < n; s += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - s);
      Tensor x({bs, kImageSize, kImageSize, kImageChannels});
      std::vector<int> labels(bs);
      for (std::size_t b = 0; b < bs; ++b) {
        const auto& src = data[order[s + b]];
        const auto sample = cfg.augment ? augment_indexed(src, aug, epoch * n + s + b) : src;
        std::copy(sample.pixels.storage().begin(), sample.pixels.storage().end(), x.ptr() + b * kImageElements);
        labels[b] = src.label;
      }
      ModelTrace<float> trace;
      ForwardContext<float> ctx{ops::Mode::train, &dropout_rng, dry_run ? nullptr : &model.params};
      const auto logits = model_forward(x, model.config, model.params, ctx, &trace);
      const auto loss = ops::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss))
        throw Error(Errc::divergence, "train: loss became " + std::to_string(loss.loss) + " at epoch " +
                                          std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1) +
                                          " (lr " + std::to_string(cfg.adam.lr) + ")");
      auto grads = model.params.zeros_like();
      model_backward(trace, loss.dlogits, model.config, model.params, grads);
      adam.step(model.params, grads);
      loss_sum += loss.loss;
      ++batches;
    }
    EpochStats st{epoch + 1, loss_sum / static_cast<double>(batches)};
    if (cfg.recalibrate_bn && !dry_run) recalibrate_batch_norm(model, data, cfg.seed + epoch);
    if (cfg.track_train_accuracy) st.train_accuracy = accuracy(model, data);
    if (val && !val->empty()) st.val_accuracy = accuracy(model, *val);
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return result;
}

// ---------------------------------------------------------------------------
// last-layer fine-tuning

struct FinetuneConfig {
  AdamConfig adam{1e-2};
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
};

/// Flattened SE outputs [N, flatten_dim] in infer mode: the classifier input.
inline Tensor extract_features(const QanaModel<float>& model, const std::vector<ImageSample>& samples,
                               std::size_t batch = 64) {
  const std::size_t n = samples.size(), d = model.config.flatten_dim();
  Tensor out({n, d});
  for (std::size_t s = 0; s < n; s += batch) {
    std::vector<std::size_t> idx(std::min(batch, n - s));
    std::iota(idx.begin(), idx.end(), s);
    ModelTrace<float> trace;
    model_forward(make_batch(samples, idx).first, model.config, model.params, {}, &trace);
    std::copy(trace.se.output.storage().begin(), trace.se.output.storage().end(), out.ptr() + s * d);
  }
  return out;
}

/// Re-fits only cls/weight and cls/bias on `samples`; every other tensor
/// of the returned store is a bitwise copy of the input.
inline ParamStore<float> incremental_finetune(const QanaModel<float>& model, const std::vector<ImageSample>& samples,
                                              const FinetuneConfig& cfg) {
  ParamStore<float> out = model.params;
  if (samples.empty() || cfg.epochs == 0) return out;
  TrainConfig check;
  check.adam = cfg.adam;
  check.batch_size = cfg.batch_size;
  check.validate();
  const auto features = extract_features(model, samples);
  const std::size_t n = samples.size(), d = features.dim(1);

  ParamStore<float> head;
  head.add("cls/weight", out.get("cls/weight"));
  head.add("cls/bias", out.get("cls/bias"));
  Adam<float> adam(head, cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < n; s += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - s);
      Tensor x({bs, d});
      std::vector<int> labels(bs);
      for (std::size_t b = 0; b < bs; ++b) {
        std::copy_n(features.ptr() + order[s + b] * d, d, x.ptr() + b * d);
        labels[b] = samples[order[s + b]].label;
      }
      const auto logits = ops::dense(x, head.get("cls/weight"), head.values("cls/bias"));
      const auto loss = ops::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) throw Error(Errc::divergence, "incremental_finetune: loss is not finite");
      auto g = ops::dense_backward(x, head.get("cls/weight"), loss.dlogits);
      auto grads = head.zeros_like();
      detail::accumulate<float>(grads, "cls/weight", g.dweight.data());
      detail::accumulate<float>(grads, "cls/bias", g.dbias);
      adam.step(head, grads);
    }
  }
  out.get("cls/weight") = head.get("cls/weight");
  out.get("cls/bias") = head.get("cls/bias");
  return out;
}

}  // namespace qana
