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

#include <cstdlib>
#include <filesystem>

#include <sys/wait.h>

#include "qana/pipeline.hpp"

namespace {

using namespace qana;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qana_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_run(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.synth_per_class = 10;
  cfg.data_dir = (root / "data").string();
  cfg.dataset = (root / "prep").string();
  cfg.model = (root / "train" / "model.qana").string();
  cfg.snn = (root / "convert" / "model.qsnn").string();
  cfg.widths = {4, 4, 4, 4};
  cfg.head_channels = 16;
  cfg.epochs = 1;
  cfg.calibration_samples = 8;
  cfg.T = 8;
  cfg.verify_samples = 2;
  cfg.infer_samples = 1;
  return cfg;
}

RunConfig at(RunConfig cfg, const fs::path& out) {
  cfg.out = out.string();
  return cfg;
}

std::vector<std::size_t> counts_in(const fs::path& data) {
  std::vector<std::size_t> counts(kSynthClasses, 0);
  for (const auto& row : read_labels(data)) ++counts[static_cast<std::size_t>(row.label)];
  return counts;
}

TEST(Synth, BalancedAndImbalancedCounts) {
  const auto root = scratch("synth");
  auto cfg = tiny_run(root);
  cmd_synth(at(cfg, root / "eq"));
  for (auto c : counts_in(root / "eq")) EXPECT_EQ(c, 10u);
  cfg.synth_per_class = 50;
  cfg.synth_imbalance = 10.0;
  cmd_synth(at(cfg, root / "ratio"));
  const auto counts = counts_in(root / "ratio");
  EXPECT_EQ(counts.front(), 50u);
  EXPECT_NEAR(static_cast<double>(counts.back()), 5.0, 1.0);
  for (std::size_t c = 0; c < counts.size(); ++c)
    EXPECT_NEAR(static_cast<double>(counts[c]), 50.0 * std::pow(10.0, -static_cast<double>(c) / 6.0), 1.0);
}

TEST(Synth, FixedSeedGivesIdenticalFiles) {
  const auto root = scratch("synth_seed");
  const auto cfg = tiny_run(root);
  cmd_synth(at(cfg, root / "a"));
  cmd_synth(at(cfg, root / "b"));
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file() || e.path().filename() == "effective_config.txt") continue;
    const auto other = root / "b" / fs::relative(e.path(), root / "a");
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(detail::read_file(e.path()), detail::read_file(other)) << e.path();
  }
}

TEST(Pipeline, TinyRunProducesArtifacts) {
  const auto root = scratch("pipeline");
  auto cfg = tiny_run(root);
  cmd_synth(at(cfg, root / "data"));
  cmd_preprocess(at(cfg, root / "prep"));
  for (const char* s : {"train.qds", "val.qds", "test.qds"}) EXPECT_TRUE(fs::exists(root / "prep" / s));
  for (const auto& s : load_bundle(root / "prep" / "test.qds")) EXPECT_FALSE(s.synthetic);
  cmd_train(at(cfg, root / "train"));
  const auto report = cmd_eval(at(cfg, root / "eval"));
  EXPECT_EQ(report.per_class.size(), kSynthClasses);
  cmd_convert(at(cfg, root / "convert"));
  const auto rep = cmd_verify(at(cfg, root / "verify"));
  EXPECT_EQ(rep.samples, 2u);
  cmd_calibrate(at(cfg, root / "calibrate"));
  cfg.thresholds = (root / "calibrate" / "thresholds.csv").string();
  cfg.trace = true;
  cmd_infer(at(cfg, root / "infer"));
  const auto pred = detail::read_csv(root / "infer" / "predictions.csv",
                                     {"source_id", "label", "predicted", "p_akiec", "p_bcc", "p_bkl", "p_df", "p_nv",
                                      "p_vasc", "p_mel", "events"});
  ASSERT_EQ(pred.size(), 1u);
  const int cls = std::stoi(pred[0][2]);
  EXPECT_GE(cls, 0);
  EXPECT_LE(cls, 6);
  EXPECT_EQ(detail::read_file(root / "infer" / "trace.csv").rfind("step,layer,neuron,event\n", 0), 0u);
  const auto stats = Json::parse(detail::read_file(root / "infer" / "spike_stats.json"));
  EXPECT_GT(stats["mean_events"].get<double>(), 0.0);
  for (const char* d : {"data", "prep", "train", "eval", "convert", "verify", "calibrate", "infer"}) {
    const auto echoed = detail::read_file(root / d / "effective_config.txt");
    EXPECT_EQ(parse_run_config(echoed).out, (root / d).string());
  }
}

TEST(Pipeline, SplitIsDrawnWhenFileIsMissing) {
  const auto root = scratch("nosplit");
  const auto cfg = tiny_run(root);
  cmd_synth(at(cfg, root / "data"));
  fs::remove(root / "data" / "splits.csv");
  cmd_preprocess(at(cfg, root / "prep"));
  std::size_t total = 0;
  for (const char* s : {"train.qds", "val.qds", "test.qds"}) {
    const auto part = load_bundle(root / "prep" / s);
    EXPECT_FALSE(part.empty()) << s;
    total += part.size();
  }
  EXPECT_EQ(total, 70u);
}

TEST(Pipeline, MissingInputsAreReported) {
  const auto root = scratch("missing");
  auto cfg = at(tiny_run(root), root / "out");
  cfg.model = (root / "nope.qana").string();
  try {
    cmd_eval(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
  }
  cfg.data_dir = (root / "nothing").string();
  EXPECT_THROW(cmd_preprocess(cfg), Error);
}

TEST(Eval, PerfectPredictorTable) {
  std::vector<int> labels;
  std::vector<double> scores;
  for (int c = 0; c < 7; ++c)
    for (int i = 0; i < 3; ++i) {
      labels.push_back(c);
      for (int k = 0; k < 7; ++k) scores.push_back(k == c ? 1.0 : 0.0);
    }
  const auto r = compute_metrics(labels, scores, 7);
  const auto table = format_metrics_table(r);
  for (const auto& line : {"akiec        1.000      1.000      1.000      1.000        3",
                           "Average      1.000      1.000      1.000      1.000       21"})
    EXPECT_NE(table.find(line), std::string::npos) << table;
}

#ifdef QANA_CLI_PATH
int run_cli(const std::string& args) {
  const int status = std::system((std::string(QANA_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitCodes) {
  const auto root = scratch("binary");
  detail::write_file(root / "bad.cfg", "seed = 1\nunknown.key = 3\n");
  detail::write_file(root / "ok.cfg", "model = " + (root / "absent.qana").string() + "\n");
  EXPECT_NE(run_cli("frobnicate --config " + (root / "ok.cfg").string()), 0);
  EXPECT_EQ(run_cli("eval --config " + (root / "bad.cfg").string()), 2);
  EXPECT_EQ(run_cli("eval --config " + (root / "ok.cfg").string() + " --out " + (root / "o").string()), 3);
  EXPECT_EQ(run_cli("synth --config " + (root / "ok.cfg").string() + " --set synth.per_class=2 --out " +
                    (root / "s").string()),
            0);
  EXPECT_TRUE(fs::exists(root / "s" / "labels.csv"));
}
#endif

}  // namespace
