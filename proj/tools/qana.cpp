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


// qana <command> --config FILE [--seed N] [--out DIR] [--T N] [--set key=value]...

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <string>

#include "qana/pipeline.hpp"

namespace {

int exit_code(qana::Errc code) {
  switch (code) {
    case qana::Errc::config: return 2;
    case qana::Errc::io: return 3;
    case qana::Errc::corrupt:
    case qana::Errc::version_mismatch:
    case qana::Errc::decode: return 4;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QANA: train a compact skin-lesion CNN and run it as a spiking network"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> T;
  std::vector<std::string> sets;

  const std::map<std::string, std::string> commands{
      {"synth", "generate the synthetic 7-class dataset"},
      {"preprocess", "quality filter, resize, split and oversample a dataset"},
      {"train", "train the float model"},
      {"eval", "per-class metrics of the float model on the test split"},
      {"convert", "fold, quantize and map the model to a spiking network"},
      {"verify", "compare spiking and dequantized CNN outputs"},
      {"infer", "classify images with the spiking network"},
      {"calibrate", "fit per-class spike-count thresholds on the validation split"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "root seed (overrides the config)");
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--T", T, "integration window (overrides the config)");
    sub->add_option("--set", sets, "override any config key: --set key=value");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto cfg = qana::load_run_config(config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw qana::Error(qana::Errc::config, "--set expects key=value, got '" + kv + "'");
      cfg.set(qana::detail::trim(kv.substr(0, eq)), qana::detail::trim(kv.substr(eq + 1)));
    }
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (T) cfg.T = *T;

    if (command == "synth") qana::cmd_synth(cfg);
    else if (command == "preprocess") qana::cmd_preprocess(cfg);
    else if (command == "train") qana::cmd_train(cfg);
    else if (command == "eval") qana::cmd_eval(cfg);
    else if (command == "convert") qana::cmd_convert(cfg);
    else if (command == "verify") qana::cmd_verify(cfg);
    else if (command == "infer") qana::cmd_infer(cfg);
    else if (command == "calibrate") qana::cmd_calibrate(cfg);
  } catch (const qana::Error& e) {
    const qana::Json j{{"command", command}, {"error", std::string(qana::errc_name(e.code()))}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    const qana::Json j{{"command", command}, {"error", "internal"}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return 1;
  }
  return 0;
}
