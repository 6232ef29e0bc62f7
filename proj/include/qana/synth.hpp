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

// Synthetic 7-class "lesion on skin" images: a textured, colored blob on a
// noisy skin-tone background. Appearance classes differ in shape, texture
// and hue so a small network can separate them after augmentation.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "qana/data.hpp"
#include "qana/image_io.hpp"

namespace qana {

inline constexpr std::size_t kSynthClasses = 7;

struct SynthConfig {
  std::size_t max_per_class = 100;  // size of the majority class
  double imbalance = 1.0;           // majority : minority count ratio
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
};

/// Class c gets round(max * ratio^(-c / 6)) samples, so class 0 is the
/// majority and class 6 has max / ratio.
inline std::vector<std::size_t> synth_class_counts(const SynthConfig& cfg) {
  if (cfg.imbalance < 1.0) throw Error(Errc::config, "synth: imbalance ratio must be >= 1");
  if (cfg.max_per_class == 0) throw Error(Errc::config, "synth: max_per_class must be positive");
  std::vector<std::size_t> counts(kSynthClasses);
  for (std::size_t c = 0; c < kSynthClasses; ++c) {
    const double f = std::pow(cfg.imbalance, -static_cast<double>(c) / static_cast<double>(kSynthClasses - 1));
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(cfg.max_per_class) * f)));
  }
  return counts;
}

namespace detail {

struct Rgb {
  double r, g, b;
};

inline constexpr std::array<Rgb, kSynthClasses> kLesionColors{{
    {95, 60, 40},    // dark brown
    {190, 50, 55},   // red
    {200, 160, 110}, // tan
    {70, 80, 120},   // blue-grey
    {220, 120, 160}, // pink
    {120, 60, 150},  // purple
    {225, 130, 40},  // orange
}};

// Texture value in [0, 1] for appearance class c at lesion-local coords
// (u, v) in [-1, 1]; 1 means full lesion color, 0 means background.
inline double lesion_mask(std::size_t c, double u, double v, double phase, const std::vector<std::array<double, 3>>& spots) {
  const double r = std::sqrt(u * u + v * v);
  const auto soft = [](double d) { return std::clamp(0.5 - d * 8.0, 0.0, 1.0); };  // soft edge at d = 0
  const double disk = soft(r - 1.0);
  switch (c) {
    case 0: return disk;
    case 1: {
      const double dots = std::sin(7.0 * u + phase) * std::sin(7.0 * v + phase) > 0.55 ? 0.35 : 1.0;
      return disk * dots;
    }
    case 2: return soft(r - 1.0) * soft(0.55 - r);
    case 3: return disk * (std::sin(9.0 * v + phase) > 0 ? 1.0 : 0.3);
    case 4: return disk * (std::sin(9.0 * u + phase) > 0 ? 1.0 : 0.3);
    case 5: {
      double m = 0.0;
      for (const auto& s : spots) {
        const double d = std::sqrt((u - s[0]) * (u - s[0]) + (v - s[1]) * (v - s[1]));
        m = std::max(m, soft(d - s[2]));
      }
      return m;
    }
    default: {
      const bool check = (std::sin(6.0 * u + phase) > 0) != (std::sin(6.0 * v + phase) > 0);
      return disk * (check ? 1.0 : 0.25);
    }
  }
}

}  // namespace detail

/// One image of appearance class `appearance`, fully determined by
/// (seed, index). Samples stay inside (0, 255) so the saturation filter
/// never fires on clean data.
inline RawImage synth_image(std::size_t appearance, std::uint64_t seed, std::uint64_t index, std::size_t size = 64) {
  if (appearance >= kSynthClasses) throw Error(Errc::invalid_argument, "synth_image: appearance class out of range");
  auto rng = sample_stream(seed, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 6.0);

  const detail::Rgb skin{205 + 25 * u(rng), 160 + 25 * u(rng), 130 + 25 * u(rng)};
  const detail::Rgb base = detail::kLesionColors[appearance];
  const double jitter = 0.85 + 0.3 * u(rng);
  const detail::Rgb lesion{base.r * jitter, base.g * jitter, base.b * jitter};
  const double s = static_cast<double>(size);
  const double cx = s * (0.35 + 0.3 * u(rng)), cy = s * (0.35 + 0.3 * u(rng));
  const double rx = s * (0.22 + 0.1 * u(rng)), ry = s * (0.22 + 0.1 * u(rng));
  const double angle = std::numbers::pi * u(rng);
  const double phase = 2 * std::numbers::pi * u(rng);
  const double grad = 20.0 * (u(rng) - 0.5);
  std::vector<std::array<double, 3>> spots;
  for (int k = 0, n = 3 + static_cast<int>(3 * u(rng)); k < n; ++k)
    spots.push_back({1.4 * u(rng) - 0.7, 1.4 * u(rng) - 0.7, 0.2 + 0.15 * u(rng)});

  RawImage img{size, size, 3, std::vector<float>(size * size * 3)};
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
      const double lu = (ca * dx + sa * dy) / rx, lv = (-sa * dx + ca * dy) / ry;
      const double m = detail::lesion_mask(appearance, lu, lv, phase, spots);
      const double shade = grad * (static_cast<double>(y) / s - 0.5);
      const double px[3] = {skin.r + (lesion.r - skin.r) * m, skin.g + (lesion.g - skin.g) * m,
                            skin.b + (lesion.b - skin.b) * m};
      for (std::size_t c = 0; c < 3; ++c)
        img.data[(y * size + x) * 3 + c] = static_cast<float>(std::clamp(std::round(px[c] + shade + noise(rng)), 3.0, 252.0));
    }
  return img;
}

struct SynthRecord {
  std::string source_id;
  int label;
  RawImage image;
};

/// The whole dataset in class-major order. `label_of` maps appearance class
/// to label (identity by default); a permutation yields a concept-shifted
/// variant of the same distribution.
inline std::vector<SynthRecord> synth_dataset(const SynthConfig& cfg, const std::vector<int>& label_of = {}) {
  const auto counts = synth_class_counts(cfg);
  std::vector<SynthRecord> out;
  std::uint64_t index = 0;
  for (std::size_t c = 0; c < kSynthClasses; ++c)
    for (std::size_t i = 0; i < counts[c]; ++i, ++index) {
      const int label = label_of.empty() ? static_cast<int>(c) : label_of.at(c);
      char id[32];
      std::snprintf(id, sizeof(id), "syn%05llu", static_cast<unsigned long long>(index));
      out.push_back({id, label, synth_image(c, cfg.seed, index, cfg.image_size)});
    }
  return out;
}

/// Convenience: synthesize and preprocess straight to ImageSamples.
inline std::vector<ImageSample> synth_samples(const SynthConfig& cfg, const std::vector<int>& label_of = {}) {
  std::vector<ImageSample> out;
  for (auto& r : synth_dataset(cfg, label_of)) out.push_back(preprocess(r.image, r.label, r.source_id));
  return out;
}

}  // namespace qana
