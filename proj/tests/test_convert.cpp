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

#include <algorithm>
#include <cmath>
#include <random>

#include "qana/convert.hpp"
#include "qana/synth.hpp"

namespace {

using namespace qana;

// Random BN statistics so folding has something to do.
void randomize_batch_norm(QanaModel<float>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.3f, 0.3f), pos(0.5f, 1.5f);
  std::vector<std::string> bns{"head/bn/"};
  for (std::size_t l = 0; l < QanaConfig::num_blocks; ++l) {
    bns.push_back(block_prefix(l) + "bn/");
    bns.push_back(block_prefix(l) + "eca/bn/");
  }
  for (const auto& bn : bns) {
    for (auto& v : m.params.get(bn + "gamma").storage()) v = pos(rng);
    for (auto& v : m.params.get(bn + "beta").storage()) v = u(rng);
    for (auto& v : m.params.get(bn + "mean").storage()) v = u(rng);
    for (auto& v : m.params.get(bn + "var").storage()) v = pos(rng);
  }
}

QanaConfig tiny_config() {
  QanaConfig cfg;
  cfg.block_channels = {2, 2, 4, 4};
  cfg.head_channels = 8;
  cfg.num_classes = 3;
  return cfg;
}

std::vector<ImageSample> probes(std::size_t per_class, std::uint64_t seed) {
  return synth_samples({per_class, 1.0, 64, seed});
}

TEST(Fold, IdentityBatchNormLeavesKernel) {
  TensorD k({3, 3, 2, 4});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : k.storage()) v = n(rng);
  const double eps = 1e-3;
  const std::vector<double> gamma(4, 1.0), beta(4, 0.0), mean(4, 0.0), var(4, 1.0 - eps);
  const auto [k2, b2] = fold_conv_bn(k, {}, gamma, beta, mean, var, eps);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(k2[i], k[i], 1e-7);
  for (double b : b2) EXPECT_NEAR(b, 0.0, 1e-12);
}

TEST(Fold, ConvBatchNormMatchesDirect) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.2, 2.0);
  TensorD k({3, 3, 3, 5}), x({2, 6, 6, 3});
  for (auto& v : k.storage()) v = n(rng);
  for (auto& v : x.storage()) v = n(rng);
  std::vector<double> bias(5), gamma(5), beta(5), mean(5), var(5);
  for (std::size_t c = 0; c < 5; ++c) {
    bias[c] = n(rng);
    gamma[c] = pos(rng);
    beta[c] = n(rng);
    mean[c] = n(rng);
    var[c] = pos(rng);
  }
  const double eps = 1e-3;
  auto direct = ops::conv2d<double>(x, k, bias);
  for (std::size_t i = 0; i < direct.size(); ++i) {
    const std::size_t c = i % 5;
    direct[i] = (direct[i] - mean[c]) / std::sqrt(var[c] + eps) * gamma[c] + beta[c];
  }
  const auto [kf, bf] = fold_conv_bn(k, bias, gamma, beta, mean, var, eps);
  const auto folded = ops::conv2d<double>(x, kf, bf);
  for (std::size_t i = 0; i < direct.size(); ++i)
    EXPECT_LE(std::abs(folded[i] - direct[i]), 1e-5 * std::max(1.0, std::abs(direct[i])));
}

TEST(Fold, FoldedModelMatchesInferModeAndHasNoBatchNorm) {
  auto model = init_model<float>(QanaConfig::desk(), 4);
  randomize_batch_norm(model, 5);
  const auto fm = fold_batchnorm(model);
  const auto kinds = fm.layer_kinds();
  EXPECT_EQ(std::count(kinds.begin(), kinds.end(), LayerKind::batch_norm), 0);
  const auto samples = probes(1, 6);
  std::vector<std::size_t> idx{0, 3, 6};
  const auto x = make_batch(samples, idx).first;
  const auto ref = model_forward(x.cast<double>(), model.config, model.params.cast<double>());
  const auto got = folded_forward(fm, x.cast<double>());
  double scale = 0.0;
  for (double v : ref.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_LE(std::abs(got[i] - ref[i]), 1e-5 * scale);
}

TEST(Quant, Examples) {
  EXPECT_EQ(quantize_value(0.0, {1.0, 0}), 0);
  EXPECT_EQ(quantize_value(1.23, {0.5, 0}), 2);
  EXPECT_DOUBLE_EQ(dequantize_value(2, {0.5, 0}), 1.0);
  EXPECT_EQ(quantize_value(1e9, {0.5, 0}), 255);
  EXPECT_EQ(quantize_value(-3.0, {0.5, 0}), 0);
  EXPECT_EQ(quantize_value(0.25, {0.5, 0}), 1);  // half away from zero
  EXPECT_THROW(QuantParams({0.0, 0}).validate("x"), Error);
}

TEST(Quant, RoundTripWithinHalfScale) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const QuantParams qp{std::uniform_real_distribution<double>(1e-3, 1.0)(rng),
                         static_cast<std::int32_t>(rng() % 256)};
    const double lo = -qp.zero_point * qp.scale, hi = (255 - qp.zero_point) * qp.scale;
    std::uniform_real_distribution<double> u(lo, hi);
    for (int i = 0; i < 5000; ++i) {
      const double x = u(rng);
      EXPECT_LE(std::abs(fake_quant(x, qp) - x), qp.scale / 2 + 1e-12);
    }
  }
}

TEST(Quant, SymmetricWeights) {
  TensorD w({4}, {0.5, -1.27, 0.0, 1.0});
  const auto q = quantize_weights(w);
  EXPECT_DOUBLE_EQ(q.scale, 0.01);
  EXPECT_EQ(q.data, (std::vector<std::int8_t>{50, -127, 0, 100}));
  EXPECT_DOUBLE_EQ(quantize_weights(TensorD({2})).scale, 1.0);
}

TEST(Calibrate, ConstantPercentileAndEmpty) {
  EXPECT_DOUBLE_EQ(calibrate_unsigned(std::vector<double>(100, 2.55)).scale, 0.01);
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(12345);
  for (auto& x : v) x = e(rng);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.999 * static_cast<double>(v.size())));
  EXPECT_DOUBLE_EQ(percentile(v, 99.9), sorted[rank - 1]);
  EXPECT_DOUBLE_EQ(calibrate_unsigned(v).scale, sorted[rank - 1] / 255.0);
  const auto model = init_model<float>(tiny_config(), 1);
  EXPECT_THROW(calibrate(fold_batchnorm(model), {}), Error);
}

TEST(Mapping, CoversEveryLayerOnce) {
  const auto model_spec = build_model_spec(QanaConfig::desk());
  const auto mapping = build_mapping(model_spec);
  ASSERT_EQ(mapping.size(), model_spec.layers.size());
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    EXPECT_EQ(mapping[i].source, model_spec.layers[i].name);
    EXPECT_FALSE(mapping[i].target.empty());
  }
  auto names = std::vector<std::string>();
  for (const auto& m : mapping) names.push_back(m.source);
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
}

TEST(Mapping, UnsupportedLayerIsNamed) {
  auto model_spec = build_model_spec(QanaConfig::desk());
  model_spec.layers.insert(model_spec.layers.begin() + 3, LayerDesc{LayerKind::custom, "block1/placeholder", {}, {}});
  try {
    build_mapping(model_spec);
    FAIL() << "expected unsupported layer";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_layer);
    EXPECT_NE(std::string(e.what()).find("block1/placeholder"), std::string::npos);
  }
}

class Converted : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new QanaModel<float>(init_model<float>(tiny_config(), 12));
    randomize_batch_norm(*model_, 13);
    fm_ = new FoldedModel(fold_batchnorm(*model_));
    probes_ = new std::vector<ImageSample>(probes(2, 14));
    for (auto& s : *probes_) s.label %= 3;
    cal_ = new Calibration(calibrate(*fm_, *probes_));
    spec_ = new SnnSpec(map_operators(*fm_, *cal_, build_model_spec(model_->config)));
  }
  static void TearDownTestSuite() {
    delete spec_;
    delete cal_;
    delete probes_;
    delete fm_;
    delete model_;
  }
  static QanaModel<float>* model_;
  static FoldedModel* fm_;
  static std::vector<ImageSample>* probes_;
  static Calibration* cal_;
  static SnnSpec* spec_;
};

QanaModel<float>* Converted::model_ = nullptr;
FoldedModel* Converted::fm_ = nullptr;
std::vector<ImageSample>* Converted::probes_ = nullptr;
Calibration* Converted::cal_ = nullptr;
SnnSpec* Converted::spec_ = nullptr;

TEST_F(Converted, SaturationCaps) {
  for (const auto& n : spec_->nodes) {
    if (n.name.ends_with("/ghost")) {
      EXPECT_EQ(n.cap, std::lround(6.0 / n.qp.scale)) << n.name;
    }
    if (n.name == "head") {
      EXPECT_EQ(n.cap, std::lround(1.0 / n.qp.scale));
    }
  }
  EXPECT_EQ(relu6_cap(0.05), 120);
  EXPECT_EQ(bounded_cap(1.0 / 255.0), 255);
}

TEST_F(Converted, StructureAndMappingTargets) {
  EXPECT_EQ(spec_->num_classes(), 3u);
  EXPECT_EQ(spec_->output_node().name, "classifier");
  for (const auto& m : spec_->mapping) {
    if (m.target != "-") {
      EXPECT_NO_THROW(spec_->find(m.target)) << m.source;
    }
  }
  const auto cost = cost_report(*spec_, *cal_, 64);
  EXPECT_EQ(cost.rows.size(), spec_->nodes.size());
  EXPECT_GT(cost.synapses, 0u);
  EXPECT_NE(format_cost_report(cost).find("total"), std::string::npos);
}

TEST_F(Converted, SpecFileRoundTrip) {
  const auto bytes = encode_snn(*spec_);
  EXPECT_EQ(decode_snn(bytes), *spec_);
  EXPECT_EQ(encode_snn(decode_snn(bytes)), bytes);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      decode_snn(bytes.substr(0, cut));
      FAIL() << "truncated at " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::corrupt);
    }
  }
  auto bumped = bytes;
  bumped[4] = static_cast<char>(kSnnVersion + 1);
  try {
    decode_snn(bumped);
    FAIL() << "expected version mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::version_mismatch);
  }
}

TEST_F(Converted, ConvergesAtLongWindow) {
  const std::vector<ImageSample> few(probes_->begin(), probes_->begin() + 2);
  const auto rep = verify_conversion(*fm_, *spec_, few, 4096);
  EXPECT_DOUBLE_EQ(rep.agreement, 1.0);
  const auto short_rep = verify_conversion(*fm_, *spec_, few, 16);
  EXPECT_LT(rep.max_logit_deviation, short_rep.max_logit_deviation);
}

TEST_F(Converted, RepeatedRunsIdentical) {
  const std::vector<ImageSample> one(probes_->begin(), probes_->begin() + 1);
  const auto a = verify_conversion(*fm_, *spec_, one, 64);
  const auto b = verify_conversion(*fm_, *spec_, one, 64);
  EXPECT_EQ(a.logit_deviation, b.logit_deviation);
  EXPECT_EQ(a.agreement, b.agreement);
  EXPECT_EQ(a.total_events, b.total_events);
}

TEST_F(Converted, CorruptedThresholdIsDetected) {
  const std::vector<ImageSample> set(probes_->begin(), probes_->begin() + 7);
  const auto clean = verify_conversion(*fm_, *spec_, set, 64);
  auto bad = *spec_;
  auto& cls = bad.nodes[bad.output];
  // The class the reference ranks last on most probes now fires at every step.
  std::vector<int> last_votes(3, 0);
  for (const auto& s : set) {
    const auto ref = reference_forward(*fm_, *spec_, s.pixels.data());
    ++last_votes[static_cast<std::size_t>(std::min_element(ref.begin(), ref.end()) - ref.begin())];
  }
  const auto victim = static_cast<std::size_t>(std::max_element(last_votes.begin(), last_votes.end()) - last_votes.begin());
  cls.thresholds[victim] = 1;
  const auto corrupted = verify_conversion(*fm_, bad, set, 64);
  EXPECT_LT(corrupted.agreement, clean.agreement);
  EXPECT_GT(corrupted.max_logit_deviation, clean.max_logit_deviation);
}

}  // namespace
