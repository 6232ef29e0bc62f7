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

// Dataset ingestion and conditioning: quality filter, bilinear resize to
// 64x64 on [0,1], seeded augmentation, k-nearest neighbours and SMOTE
// oversampling in flattened pixel space.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "qana/image_io.hpp"
#include "qana/tensor.hpp"

namespace qana {

inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageElements = kImageSize * kImageSize * kImageChannels;

struct ImageSample {
  Tensor pixels;  // [64, 64, 3] on [0, 1]
  int label = 0;
  std::string source_id;
  bool synthetic = false;
};

// ---------------------------------------------------------------------------
// quality filter

enum class Reject { none, low_resolution, low_variance, saturated };

inline std::string_view reject_name(Reject r) {
  switch (r) {
    case Reject::none: return "keep";
    case Reject::low_resolution: return "low_resolution";
    case Reject::low_variance: return "low_variance";
    case Reject::saturated: return "saturated";
  }
  return "unknown";
}

struct QualityConfig {
  std::size_t min_side = 32;
  double min_variance = 1e-4;       // on the unit scale
  double max_saturated_fraction = 0.05;
};

/// Checks are applied in order resolution, variance, saturation; the first
/// failure is reported. A pixel counts as saturated when any of its channels
/// sits at 0 or 255.
inline Reject quality_filter(const RawImage& img, const QualityConfig& cfg = {}) {
  if (img.data.empty() || img.data.size() != img.height * img.width * img.channels)
    throw Error(Errc::decode, "quality_filter: image payload does not match its header");
  if (std::min(img.height, img.width) < cfg.min_side) return Reject::low_resolution;
  double mean = 0.0;
  for (float v : img.data) mean += v / 255.0;
  mean /= static_cast<double>(img.data.size());
  double var = 0.0;
  for (float v : img.data) var += (v / 255.0 - mean) * (v / 255.0 - mean);
  var /= static_cast<double>(img.data.size());
  if (var < cfg.min_variance) return Reject::low_variance;
  std::size_t saturated = 0;
  const std::size_t pixels = img.height * img.width;
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < img.channels; ++c) {
      const float v = img.data[p * img.channels + c];
      if (v <= 0.0f || v >= 255.0f) {
        ++saturated;
        break;
      }
    }
  if (static_cast<double>(saturated) > cfg.max_saturated_fraction * static_cast<double>(pixels))
    return Reject::saturated;
  return Reject::none;
}

// ---------------------------------------------------------------------------
// preprocessing

/// Bilinear resample with half-pixel centers and edge clamping.
inline RawImage resize_bilinear(const RawImage& img, std::size_t out_h, std::size_t out_w) {
  RawImage out{out_h, out_w, img.channels, std::vector<float>(out_h * out_w * img.channels)};
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bottom = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.data[(y * out_w + x) * img.channels + c] = static_cast<float>(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

/// Resize to 64x64 and divide by 255. Gray images are replicated to three
/// channels; extra channels (alpha) are dropped.
inline ImageSample preprocess(const RawImage& img, int label = 0, std::string source_id = {}) {
  if (img.channels != 1 && img.channels < 3)
    throw Error(Errc::decode, "preprocess: unsupported channel count " + std::to_string(img.channels));
  const RawImage sized = (img.height == kImageSize && img.width == kImageSize)
                             ? img
                             : resize_bilinear(img, kImageSize, kImageSize);
  Tensor px({kImageSize, kImageSize, kImageChannels});
  for (std::size_t p = 0; p < kImageSize * kImageSize; ++p)
    for (std::size_t c = 0; c < kImageChannels; ++c) {
      const float v = sized.data[p * sized.channels + (sized.channels == 1 ? 0 : c)];
      px[p * kImageChannels + c] = std::clamp(v / 255.0f, 0.0f, 1.0f);
    }
  return ImageSample{std::move(px), label, std::move(source_id), false};
}

// ---------------------------------------------------------------------------
// augmentation

struct AugmentConfig {
  double brightness_lo = 0.7, brightness_hi = 1.3;
  double contrast_lo = 0.8, contrast_hi = 1.2;
  double flip_prob = 0.5;  // each axis independently
  double hue_shift = 0.08;  // uniform in [-hue_shift, hue_shift], unit hue
  double saturation_lo = 0.85, saturation_hi = 1.15;
  std::uint64_t seed = 0;

  static AugmentConfig identity() { return {1, 1, 1, 1, 0, 0, 1, 1, 0}; }
};

namespace detail {

inline void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d <= 0.0f) {
    h = 0.0f;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0f + (b - r) / d;
  else
    h = 4.0f + (r - g) / d;
  h /= 6.0f;
  if (h < 0.0f) h += 1.0f;
}

inline void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int i = static_cast<int>(hh) % 6;
  const float f = hh - std::floor(hh);
  const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline void clamp_unit(Tensor& t) {
  for (auto& v : t.data()) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace detail

/// Horizontal flip, vertical flip, brightness, contrast, then hue/saturation
/// in HSV space; every random draw happens in that order whether or not the
/// op is a no-op, so streams stay aligned across configurations.
inline ImageSample augment(const ImageSample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
  const bool flip_h = detail::uniform(rng, 0.0, 1.0) < cfg.flip_prob;
  const bool flip_v = detail::uniform(rng, 0.0, 1.0) < cfg.flip_prob;
  const double bright = detail::uniform(rng, cfg.brightness_lo, cfg.brightness_hi);
  const double contrast = detail::uniform(rng, cfg.contrast_lo, cfg.contrast_hi);
  const double hue = detail::uniform(rng, -cfg.hue_shift, cfg.hue_shift);
  const double sat = detail::uniform(rng, cfg.saturation_lo, cfg.saturation_hi);

  ImageSample out = sample;
  Tensor& px = out.pixels;
  const std::size_t h = px.dim(0), w = px.dim(1), c = px.dim(2);
  if (flip_h || flip_v) {
    Tensor flipped(px.shape());
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sy = flip_v ? h - 1 - y : y, sx = flip_h ? w - 1 - x : x;
        std::copy_n(sample.pixels.ptr() + (sy * w + sx) * c, c, flipped.ptr() + (y * w + x) * c);
      }
    px = std::move(flipped);
  }
  if (bright != 1.0) {
    for (auto& v : px.data()) v = static_cast<float>(v * bright);
    detail::clamp_unit(px);
  }
  if (contrast != 1.0) {
    double mean = 0.0;
    for (float v : px.data()) mean += v;
    mean /= static_cast<double>(px.size());
    for (auto& v : px.data()) v = static_cast<float>((v - mean) * contrast + mean);
    detail::clamp_unit(px);
  }
  if (hue != 0.0 || sat != 1.0) {
    for (std::size_t p = 0; p < h * w; ++p) {
      float* rgb = px.ptr() + p * c;
      float hh, ss, vv;
      detail::rgb_to_hsv(rgb[0], rgb[1], rgb[2], hh, ss, vv);
      hh += static_cast<float>(hue);
      ss = std::clamp(static_cast<float>(ss * sat), 0.0f, 1.0f);
      detail::hsv_to_rgb(hh, ss, vv, rgb[0], rgb[1], rgb[2]);
    }
    detail::clamp_unit(px);
  }
  return out;
}

/// Per-sample stream derived from (seed, index), so a parallel map over the
/// dataset gives the same result as a sequential one.
inline std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline ImageSample augment_indexed(const ImageSample& sample, const AugmentConfig& cfg, std::uint64_t index) {
  auto rng = sample_stream(cfg.seed, index);
  return augment(sample, cfg, rng);
}

// ---------------------------------------------------------------------------
// k-nearest neighbours and SMOTE

/// k nearest points to points[query] by Euclidean distance, excluding the
/// query itself; equal distances resolve to the lower index.
inline std::vector<std::size_t> knn(const std::vector<std::vector<float>>& points, std::size_t query, std::size_t k) {
  if (query >= points.size()) throw Error(Errc::invalid_argument, "knn: query index out of range");
  if (k == 0 || k >= points.size())
    throw Error(Errc::invalid_argument, "knn: k=" + std::to_string(k) + " needs at least k+1 points, have " +
                                            std::to_string(points.size()));
  const auto& q = points[query];
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(points.size() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == query) continue;
    if (points[i].size() != q.size()) throw ShapeError("knn", "point dimension", points[i].size(), q.size());
    double d = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double diff = static_cast<double>(points[i][j]) - static_cast<double>(q[j]);
      d += diff * diff;
    }
    dist.emplace_back(d, i);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

/// x_new[d] = x_i[d] + lambda[d] * (x_j[d] - x_i[d]).
inline std::vector<float> smote_interpolate(std::span<const float> xi, std::span<const float> xj,
                                            std::span<const double> lambda) {
  if (xi.size() != xj.size()) throw ShapeError("smote", "neighbour dimension", xj.size(), xi.size());
  if (lambda.size() != 1 && lambda.size() != xi.size())
    throw ShapeError("smote", "lambda length", lambda.size(), xi.size());
  std::vector<float> out(xi.size());
  for (std::size_t d = 0; d < xi.size(); ++d) {
    const double l = lambda.size() == 1 ? lambda[0] : lambda[d];
    out[d] = static_cast<float>(xi[d] + l * (static_cast<double>(xj[d]) - xi[d]));
  }
  return out;
}

/// Draws lambda ~ U(0,1) per dimension (or one per sample when
/// `per_dimension` is false) and interpolates. The draws are returned
/// through `lambda_out` when given.
inline std::vector<float> smote_generate(std::span<const float> xi, std::span<const float> xj, std::mt19937_64& rng,
                                         bool per_dimension = true, std::vector<double>* lambda_out = nullptr) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lambda(per_dimension ? xi.size() : 1);
  for (auto& l : lambda) l = u(rng);
  auto out = smote_interpolate(xi, xj, lambda);
  if (lambda_out) *lambda_out = std::move(lambda);
  return out;
}

struct SmoteConfig {
  std::size_t k = 5;
  std::vector<std::size_t> targets;  // per class; empty = size of the largest class
  std::uint64_t seed = 0;
  bool per_dimension = true;
};

struct SyntheticOrigin {
  std::size_t base;      // index into the input dataset
  std::size_t neighbor;  // index into the input dataset
};

struct SmoteResult {
  std::vector<ImageSample> samples;       // originals (unchanged, same order) then synthetics
  std::vector<SyntheticOrigin> origins;   // one per synthetic, in the order they follow the originals
};

inline std::vector<std::size_t> class_counts(const std::vector<ImageSample>& samples, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes)
      throw Error(Errc::invalid_argument, "label " + std::to_string(s.label) + " out of range");
    ++counts[static_cast<std::size_t>(s.label)];
  }
  return counts;
}

/// Brings every class up to its target by interpolating between members
/// and one of their k nearest same-class neighbours. Base samples are taken
/// round-robin; outputs are clamped to [0, 1] and flagged synthetic.
inline SmoteResult smote_oversample(const std::vector<ImageSample>& samples, std::size_t num_classes,
                                    const SmoteConfig& cfg) {
  const auto counts = class_counts(samples, num_classes);
  std::vector<std::size_t> targets = cfg.targets;
  if (targets.empty()) targets.assign(num_classes, *std::max_element(counts.begin(), counts.end()));
  if (targets.size() != num_classes) throw ShapeError("smote_oversample", "targets", targets.size(), num_classes);

  std::vector<std::size_t> short_classes;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] < targets[c] && counts[c] < cfg.k + 1) short_classes.push_back(c);
  if (!short_classes.empty()) {
    std::string list;
    for (auto c : short_classes) list += (list.empty() ? "" : ", ") + std::to_string(c) + " (" + std::to_string(counts[c]) + ")";
    throw Error(Errc::invalid_argument, "smote_oversample: classes with fewer than k+1=" + std::to_string(cfg.k + 1) +
                                            " samples: " + list);
  }

  SmoteResult result{samples, {}};
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] >= targets[c]) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (static_cast<std::size_t>(samples[i].label) == c) members.push_back(i);
    std::vector<std::vector<float>> points;
    points.reserve(members.size());
    for (auto i : members) points.emplace_back(samples[i].pixels.storage());
    std::vector<std::vector<std::size_t>> neighbours(members.size());
    const std::size_t needed = targets[c] - counts[c];
    for (std::size_t s = 0; s < needed; ++s) {
      const std::size_t m = s % members.size();
      if (neighbours[m].empty()) neighbours[m] = knn(points, m, cfg.k);
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, cfg.k - 1)(rng);
      const std::size_t j = neighbours[m][pick];
      auto values = smote_generate(points[m], points[j], rng, cfg.per_dimension);
      for (auto& v : values) v = std::clamp(v, 0.0f, 1.0f);
      const auto& base = samples[members[m]];
      ImageSample syn{Tensor(base.pixels.shape(), std::move(values)), static_cast<int>(c),
                      base.source_id + "+smote" + std::to_string(s), true};
      result.samples.push_back(std::move(syn));
      result.origins.push_back({members[m], members[j]});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// stratified split

enum class Split : std::uint8_t { train, val, test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

/// Per-class shuffle, then the first round(train*n) go to train, the next
/// round(val*n) to val and the remainder to test.
inline std::vector<Split> stratified_split(const std::vector<int>& labels, double train_fraction, double val_fraction,
                                           std::uint64_t seed) {
  if (train_fraction <= 0 || val_fraction < 0 || train_fraction + val_fraction >= 1.0)
    throw Error(Errc::config, "stratified_split: fractions must leave a non-empty test share");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<Split> out(labels.size(), Split::test);
  std::mt19937_64 rng(seed);
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * n));
    const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::lround(val_fraction * n)));
    for (std::size_t i = 0; i < idx.size(); ++i)
      out[idx[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }
  return out;
}

/// Stacks samples into a [N, 64, 64, 3] batch plus labels.
inline std::pair<Tensor, std::vector<int>> make_batch(const std::vector<ImageSample>& samples,
                                                      std::span<const std::size_t> indices) {
  Tensor x({indices.size(), kImageSize, kImageSize, kImageChannels});
  std::vector<int> labels(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& s = samples.at(indices[b]);
    if (s.pixels.size() != kImageElements) throw ShapeError("make_batch", "sample elements", s.pixels.size(), kImageElements);
    std::copy(s.pixels.storage().begin(), s.pixels.storage().end(), x.ptr() + b * kImageElements);
    labels[b] = s.label;
  }
  return {std::move(x), std::move(labels)};
}

inline std::pair<Tensor, std::vector<int>> make_batch(const std::vector<ImageSample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(samples, idx);
}

}  // namespace qana
