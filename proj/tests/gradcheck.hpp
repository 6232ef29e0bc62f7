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

// Finite-difference gradient checks for the composite QANA layers, shared by
// the unit tests and the acceptance runner.

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qana/arch.hpp"

namespace gradcheck {

using namespace qana;

struct Result {
  std::string name;
  double rel_error = 0.0;
};

inline QanaConfig tiny_config() {
  QanaConfig c;
  c.block_channels = {4, 4, 8, 8};
  c.head_channels = 8;
  c.se_reduction = 4;
  return c;
}

/// Tiny model with every parameter perturbed away from its neutral init so
/// no gradient is trivially zero.
inline QanaModel<double> tiny_model(std::uint64_t seed) {
  auto model = init_model<double>(tiny_config(), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& e : model.params.entries()) {
    const auto& n = e.name;
    const bool is_var = n.ends_with("/var");
    const bool is_scale = n.ends_with("gamma") || n.ends_with("alpha") || n.ends_with("gamma_spk");
    if (n.ends_with("mask")) continue;
    for (auto& v : e.value.data()) {
      if (is_var) v = 0.5 + std::abs(u(rng)) * 3;
      else if (is_scale) v = 1.0 + u(rng);
      else if (n.ends_with("beta_spk")) v = 0.5 + u(rng) * 0.5;
      else if (n.ends_with("bias") || n.ends_with("/b1") || n.ends_with("/b2") || n.ends_with("beta") ||
               n.ends_with("/mean"))
        v = u(rng);
    }
  }
  return model;
}

struct Probe {
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Gradient of L = sum(r * fwd()) against `backward(r)` for the input x and
/// every trainable parameter whose name starts with `prefix`. `max_coords`
/// samples that many coordinates per tensor (0 = all). Returns the worst
/// per-tensor relative error.
inline double check(ParamStore<double>& params, const std::string& prefix, TensorD* x,
                    const std::function<TensorD()>& fwd,
                    const std::function<TensorD(const TensorD&, ParamStore<double>&)>& backward, std::mt19937_64& rng,
                    std::size_t max_coords = 0, const std::function<double(const TensorD&)>* loss = nullptr) {
  const auto y0 = fwd();
  auto r = oracle::random_tensor(y0.shape(), rng);
  auto grads = params.zeros_like();
  const auto dx = backward(r, grads);
  std::function<double()> f = [&] {
    const auto y = fwd();
    if (loss) return (*loss)(y);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  double worst = 0.0;
  auto probe = [&](std::span<double> values, std::span<const double> analytic) {
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_coords && idx.size() > max_coords) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_coords);
    }
    std::vector<double> a, n;
    for (auto i : idx) {
      std::span<double> cell(&values[i], 1);
      n.push_back(oracle::numeric_gradient(cell, f)[0]);
      a.push_back(analytic[i]);
    }
    double na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      na = std::max(na, std::abs(a[i]));
      nn = std::max(nn, std::abs(n[i]));
    }
    if (na < 1e-9 && nn < 1e-9) return;
    worst = std::max(worst, oracle::relative_error(a, n));
  };
  if (x) probe(x->data(), dx.data());
  for (auto& e : params.entries()) {
    if (!e.trainable || !e.name.starts_with(prefix)) continue;
    probe(e.value.data(), grads.get(e.name).data());
  }
  return worst;
}

/// Per-layer checks of every parameterized QANA component.
inline std::vector<Result> layer_checks(std::uint64_t seed) {
  std::vector<Result> out;
  std::mt19937_64 rng(seed);
  auto model = tiny_model(seed);
  auto& p = model.params;
  const auto cfg = model.config;
  ForwardContext<double> train_ctx;
  train_ctx.mode = ops::Mode::train;

  {
    auto x = oracle::random_tensor({2, 5, 5, 4}, rng);
    const auto g = cfg.ghost(2);
    GhostTrace<double> tr;
    out.push_back({"ghost", check(p, "block3/ghost/", &x,
                                  [&] { return ghost_forward(x, g, p, "block3/ghost/", &tr); },
                                  [&](const TensorD& r, ParamStore<double>& gs) {
                                    ghost_forward(x, g, p, "block3/ghost/", &tr);
                                    return ghost_backward(x, tr, r, g, p, gs, "block3/ghost/");
                                  },
                                  rng)});
  }
  for (auto mode : {ops::Mode::train, ops::Mode::infer}) {
    auto x = oracle::random_tensor({2, 4, 4, 4}, rng);
    ForwardContext<double> ctx;
    ctx.mode = mode;
    EcaTrace<double> tr;
    out.push_back({mode == ops::Mode::train ? "sa_eca(train)" : "sa_eca(infer)",
                   check(p, "block2/eca/", &x, [&] { return sa_eca_forward(x, p, "block2/eca/", ctx, &tr); },
                         [&](const TensorD& r, ParamStore<double>& gs) {
                           sa_eca_forward(x, p, "block2/eca/", ctx, &tr);
                           return sa_eca_backward(x, tr, r, p, gs, "block2/eca/");
                         },
                         rng)});
  }
  // Block 1 (projection) and block 2 (identity skip), train mode with a
  // fixed dropout stream.
  for (std::size_t l : {0, 1}) {
    auto x = oracle::random_tensor({2, 6, 6, cfg.block_input_channels(l)}, rng);
    BlockTrace<double> tr;
    auto run = [&] {
      std::mt19937_64 drop_rng(seed + 99);
      auto ctx = train_ctx;
      ctx.rng = &drop_rng;
      return qana_block_forward(x, l, cfg, p, ctx, &tr);
    };
    out.push_back({"qana_block" + std::to_string(l + 1),
                   check(p, block_prefix(l), &x, run,
                         [&](const TensorD& r, ParamStore<double>& gs) {
                           run();
                           return qana_block_backward(tr, r, l, cfg, p, gs);
                         },
                         rng)});
  }
  {
    auto x = oracle::random_tensor({2, 4, 4, cfg.block_channels[3]}, rng);
    HeadTrace<double> tr;
    out.push_back({"spike_head", check(p, "head/", &x, [&] { return spike_head_forward(x, p, train_ctx, &tr); },
                                       [&](const TensorD& r, ParamStore<double>& gs) {
                                         spike_head_forward(x, p, train_ctx, &tr);
                                         return spike_head_backward(tr, r, p, gs);
                                       },
                                       rng)});
  }
  {
    auto x = oracle::random_tensor({2, 4, 4, cfg.head_channels}, rng, 0.0, 1.0);
    SeTrace<double> tr;
    out.push_back({"se", check(p, "se/", &x, [&] { return se_forward(x, p, &tr); },
                               [&](const TensorD& r, ParamStore<double>& gs) {
                                 se_forward(x, p, &tr);
                                 return se_backward(tr, r, p, gs);
                               },
                               rng)});
  }
  return out;
}

/// Full-model softmax cross-entropy on a 2-sample batch, train mode.
inline Result model_check(std::uint64_t seed, std::size_t max_coords = 12) {
  std::mt19937_64 rng(seed);
  auto model = tiny_model(seed);
  auto& p = model.params;
  auto x = oracle::random_tensor({2, 64, 64, 3}, rng, 0.0, 1.0);
  const std::vector<int> labels{1, 5};
  ModelTrace<double> tr;
  auto run = [&] {
    std::mt19937_64 drop_rng(seed + 7);
    ForwardContext<double> ctx;
    ctx.mode = ops::Mode::train;
    ctx.rng = &drop_rng;
    return model_forward(x, model.config, p, ctx, &tr);
  };
  const std::function<double(const TensorD&)> loss = [&](const TensorD& logits) {
    return ops::softmax_cross_entropy<double>(logits, labels).loss;
  };
  const double err = check(p, "", nullptr, run,
                           [&](const TensorD&, ParamStore<double>& gs) {
                             auto logits = run();
                             auto l = ops::softmax_cross_entropy<double>(logits, labels);
                             model_backward(tr, l.dlogits, model.config, p, gs);
                             return TensorD();
                           },
                           rng, max_coords, &loss);
  return {"full_model", err};
}

}  // namespace gradcheck
