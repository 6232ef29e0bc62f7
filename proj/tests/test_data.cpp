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

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "qana/data.hpp"
#include "qana/dataset.hpp"
#include "qana/synth.hpp"

using namespace qana;
namespace fs = std::filesystem;

namespace {

RawImage constant_image(std::size_t h, std::size_t w, float v) { return {h, w, 3, std::vector<float>(h * w * 3, v)}; }

ImageSample random_sample(std::mt19937_64& rng, int label = 0) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  Tensor px({64, 64, 3});
  for (auto& v : px.data()) v = u(rng);
  return {std::move(px), label, "s", false};
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("qana_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(QualityFilter, Reasons) {
  EXPECT_EQ(quality_filter(constant_image(64, 64, 128)), Reject::low_variance);
  EXPECT_EQ(quality_filter(constant_image(16, 16, 128)), Reject::low_resolution);
  EXPECT_EQ(quality_filter(synth_image(3, 1, 2)), Reject::none);
  auto sat = synth_image(0, 1, 3);
  for (std::size_t i = 0; i < sat.data.size() / 10; ++i) sat.data[i * 3] = 255.0f;
  EXPECT_EQ(quality_filter(sat), Reject::saturated);
  RawImage broken{4, 4, 3, std::vector<float>(5)};
  EXPECT_THROW(quality_filter(broken), Error);
}

TEST(Preprocess, ResizeAndScale) {
  auto white = preprocess(constant_image(128, 128, 255));
  for (float v : white.pixels.data()) EXPECT_EQ(v, 1.0f);

  auto img = synth_image(2, 4, 5);
  auto same = preprocess(img);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(same.pixels[i], img.data[i] / 255.0f);

  RawImage two{2, 2, 1, {0, 1, 1, 0}};
  EXPECT_DOUBLE_EQ(resize_bilinear(two, 1, 1).data[0], 0.5);
}

TEST(Augment, IdentityInvolutionAndClamp) {
  std::mt19937_64 rng(1);
  auto s = random_sample(rng, 3);
  auto id = AugmentConfig::identity();
  auto out = augment_indexed(s, id, 0);
  EXPECT_EQ(out.pixels, s.pixels);
  EXPECT_EQ(out.label, 3);

  auto flip = id;
  flip.flip_prob = 1.0;
  auto twice = augment_indexed(augment_indexed(s, flip, 0), flip, 1);
  EXPECT_EQ(twice.pixels, s.pixels);
  auto once = augment_indexed(s, flip, 0);
  EXPECT_EQ(once.pixels[0], s.pixels[(63 * 64 + 63) * 3]);

  auto bright = id;
  bright.brightness_lo = bright.brightness_hi = 1.3;
  ImageSample v{Tensor({64, 64, 3}, 0.9f), 0, "", false};
  for (float x : augment_indexed(v, bright, 0).pixels.data()) EXPECT_EQ(x, 1.0f);

  AugmentConfig full;
  full.seed = 9;
  auto a = augment_indexed(s, full, 17), b = augment_indexed(s, full, 17);
  EXPECT_EQ(a.pixels, b.pixels);
  for (float x : a.pixels.data()) {
    EXPECT_GE(x, 0.0f);
    EXPECT_LE(x, 1.0f);
  }
  EXPECT_NE(augment_indexed(s, full, 18).pixels, a.pixels);
}

TEST(Augment, HueRoundTrip) {
  float h, s, v, r, g, b;
  detail::rgb_to_hsv(0.8f, 0.3f, 0.1f, h, s, v);
  detail::hsv_to_rgb(h, s, v, r, g, b);
  EXPECT_NEAR(r, 0.8f, 1e-6f);
  EXPECT_NEAR(g, 0.3f, 1e-6f);
  EXPECT_NEAR(b, 0.1f, 1e-6f);
}

TEST(Knn, ColinearTiesAndOracle) {
  std::vector<std::vector<float>> line{{0}, {1}, {2}, {5}};
  EXPECT_EQ(knn(line, 0, 2), (std::vector<std::size_t>{1, 2}));
  std::vector<std::vector<float>> dup{{0, 0}, {1, 1}, {1, 1}, {-1, -1}};
  EXPECT_EQ(knn(dup, 0, 3), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_THROW(knn(line, 0, 4), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<std::vector<float>> cloud(50, std::vector<float>(8));
  for (auto& p : cloud)
    for (auto& v : p) v = u(rng);
  for (std::size_t q = 0; q < 50; q += 7) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < 50; ++i) {
      if (i == q) continue;
      double d = 0;
      for (std::size_t j = 0; j < 8; ++j) d += (cloud[i][j] - cloud[q][j]) * double(cloud[i][j] - cloud[q][j]);
      all.emplace_back(d, i);
    }
    std::sort(all.begin(), all.end());
    auto got = knn(cloud, q, 5);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(got[i], all[i].second);
  }
}

TEST(Smote, EdgeCasesAndEnvelope) {
  std::vector<float> a{0.0f, 0.0f}, b{1.0f, 2.0f};
  std::vector<double> zero{0.0, 0.0}, one{1.0, 1.0};
  EXPECT_EQ(smote_interpolate(a, b, zero), a);
  EXPECT_EQ(smote_interpolate(a, b, one), b);
  std::mt19937_64 rng(5);
  std::vector<double> lambda;
  auto x = smote_generate(a, b, rng, true, &lambda);
  ASSERT_EQ(lambda.size(), 2u);
  EXPECT_GE(x[0], 0.0f);
  EXPECT_LE(x[0], 1.0f);
  EXPECT_GE(x[1], 0.0f);
  EXPECT_LE(x[1], 2.0f);
  EXPECT_FLOAT_EQ(x[1], static_cast<float>(2.0 * lambda[1]));
  auto canon = smote_generate(a, b, rng, false, &lambda);
  ASSERT_EQ(lambda.size(), 1u);
  EXPECT_FLOAT_EQ(canon[1], 2.0f * canon[0]);
}

TEST(Smote, OversampleCountsAndOrigins) {
  std::mt19937_64 rng(7);
  std::vector<ImageSample> data;
  for (int i = 0; i < 20; ++i) data.push_back(random_sample(rng, 0));
  for (int i = 0; i < 6; ++i) data.push_back(random_sample(rng, 1));
  SmoteConfig cfg;
  cfg.k = 3;
  cfg.seed = 11;
  auto res = smote_oversample(data, 2, cfg);
  EXPECT_EQ(class_counts(res.samples, 2), (std::vector<std::size_t>{20, 20}));
  ASSERT_EQ(res.origins.size(), 14u);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(res.samples[i].pixels, data[i].pixels);
  for (std::size_t s = 0; s < 14; ++s) {
    const auto& syn = res.samples[data.size() + s];
    EXPECT_TRUE(syn.synthetic);
    const auto& pa = data[res.origins[s].base].pixels;
    const auto& pb = data[res.origins[s].neighbor].pixels;
    for (std::size_t d = 0; d < syn.pixels.size(); ++d) {
      EXPECT_GE(syn.pixels[d], std::min(pa[d], pb[d]));
      EXPECT_LE(syn.pixels[d], std::max(pa[d], pb[d]));
    }
  }
  // Balanced input is returned unchanged.
  std::vector<ImageSample> balanced(data.begin(), data.begin() + 5);
  for (int i = 0; i < 5; ++i) balanced.push_back(data[20 + i]);
  auto same = smote_oversample(balanced, 2, cfg);
  EXPECT_EQ(same.samples.size(), balanced.size());

  cfg.k = 6;
  EXPECT_THROW(smote_oversample(data, 2, cfg), Error);
}

TEST(Split, StratifiedFractions) {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 50; ++i) labels.push_back(c);
  auto s = stratified_split(labels, 0.7, 0.1, 1);
  std::map<std::pair<int, Split>, int> n;
  for (std::size_t i = 0; i < labels.size(); ++i) ++n[{labels[i], s[i]}];
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ((n[{c, Split::train}]), 35);
    EXPECT_EQ((n[{c, Split::val}]), 5);
    EXPECT_EQ((n[{c, Split::test}]), 10);
  }
  EXPECT_EQ(stratified_split(labels, 0.7, 0.1, 1), s);
}

TEST(Synth, CountsAndDeterminism) {
  SynthConfig cfg;
  cfg.max_per_class = 30;
  EXPECT_EQ(synth_class_counts(cfg), std::vector<std::size_t>(7, 30));
  cfg.max_per_class = 100;
  cfg.imbalance = 10.0;
  auto counts = synth_class_counts(cfg);
  EXPECT_EQ(counts.front(), 100u);
  EXPECT_EQ(counts.back(), 10u);
  for (std::size_t c = 0; c < 7; ++c)
    EXPECT_LE(std::abs(static_cast<double>(counts[c]) - 100.0 * std::pow(10.0, -double(c) / 6.0)), 1.0);
  EXPECT_EQ(synth_image(4, 1, 2).data, synth_image(4, 1, 2).data);
  EXPECT_NE(synth_image(4, 1, 2).data, synth_image(4, 1, 3).data);
}

TEST(DatasetIo, ImagesCsvAndBundleRoundTrip) {
  auto dir = temp_dir("dataset");
  auto img = synth_image(1, 2, 3);
  write_image(dir / "images" / "a.png", img);
  write_image(dir / "images" / "b.raw", img);
  EXPECT_EQ(read_image(dir / "images" / "a.png").data, img.data);
  EXPECT_EQ(read_image(dir / "images" / "b.raw").data, img.data);
  detail::write_file(dir / "images" / "bad.png", "not a png");
  EXPECT_THROW(read_image(dir / "images" / "bad.png"), Error);
  try {
    read_image(dir / "images" / "bad.png");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::decode);
  }

  write_labels(dir, {{"a", "a.png", 1}, {"b", "b.raw", 2}});
  auto rows = read_labels(dir);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].filename, "b.raw");
  EXPECT_EQ(rows[1].label, 2);

  write_splits(dir / "splits.csv", {"a", "b"}, {Split::train, Split::test});
  auto splits = read_splits(dir / "splits.csv");
  EXPECT_EQ(splits["b"], Split::test);

  std::mt19937_64 rng(1);
  std::vector<ImageSample> samples{random_sample(rng, 2), random_sample(rng, 5)};
  samples[1].synthetic = true;
  samples[1].source_id = "x+smote0";
  save_bundle(dir / "s.qds", samples);
  auto back = load_bundle(dir / "s.qds");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].pixels, samples[1].pixels);
  EXPECT_EQ(back[1].source_id, "x+smote0");
  EXPECT_TRUE(back[1].synthetic);
  auto bytes = encode_bundle(samples);
  EXPECT_THROW(decode_bundle(bytes.substr(0, bytes.size() - 3)), Error);
  fs::remove_all(dir);
}
