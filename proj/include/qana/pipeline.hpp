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


// Pipeline stages behind the command-line tool. Each command reads the
// paths named in its RunConfig, writes only into cfg.out and echoes the
// effective configuration there as effective_config.txt.
//
//   synth       -> images/, labels.csv, splits.csv, class_counts.csv
//   preprocess  -> train.qds, val.qds, test.qds, preprocess_report.json
//   train       -> model.qana, history.csv
//   eval        -> metrics.txt, metrics.csv, metrics.json, confusion.csv
//   convert     -> model.qsnn, mapping.csv, calibration.csv, cost.txt, cost.json
//   verify      -> verify.txt, verify.json, verify_samples.csv
//   calibrate   -> thresholds.csv, calibrate.json
//   infer       -> predictions.csv, spike_stats.json, trace.csv (optional)

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qana/config.hpp"
#include "qana/convert.hpp"
#include "qana/dataset.hpp"
#include "qana/log.hpp"
#include "qana/model_io.hpp"
#include "qana/synth.hpp"
#include "qana/train.hpp"

namespace qana {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Independent seed for a named stage of a run.
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
  std::uint64_t z = root ^ fnv1a(stage);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace detail {

inline fs::path prepare_out(const RunConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_file(out / "effective_config.txt", cfg.effective());
  return out;
}

inline void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw Error(Errc::io, what + " not found: " + p.string());
}

inline std::vector<ImageSample> load_split(const RunConfig& cfg, const std::string& split) {
  const auto p = fs::path(cfg.dataset) / (split + ".qds");
  require_file(p, split + " split");
  return load_bundle(p);
}

/// `n` samples spread evenly over `all` (all of them when n >= size).
inline std::vector<ImageSample> strided(const std::vector<ImageSample>& all, std::size_t n) {
  if (n == 0 || n >= all.size()) return all;
  std::vector<ImageSample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(all[i * all.size() / n]);
  return out;
}

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline PredictOptions predict_options(const RunConfig& cfg, std::uint64_t sample_index) {
  PredictOptions opt;
  opt.T = cfg.T;
  opt.encoding = cfg.encoding == "poisson" ? Encoding::poisson : Encoding::deterministic;
  opt.seed = stage_seed(cfg.seed, "encode") + sample_index;
  return opt;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void cmd_synth(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  const SynthConfig sc{cfg.synth_per_class, cfg.synth_imbalance, kImageSize, stage_seed(cfg.seed, "synth")};
  const auto records = synth_dataset(sc);
  fs::create_directories(out / "images");
  std::vector<LabelRow> rows;
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& r : records) {
    const auto file = r.source_id + ".png";
    write_image(out / "images" / file, r.image);
    rows.push_back({r.source_id, file, r.label});
    ids.push_back(r.source_id);
    labels.push_back(r.label);
  }
  write_labels(out, rows);
  write_splits(out / "splits.csv", ids,
               stratified_split(labels, cfg.train_fraction, cfg.val_fraction, stage_seed(cfg.seed, "split")));
  const auto counts = synth_class_counts(sc);
  std::string csv = "class,name,count\n";
  for (std::size_t c = 0; c < counts.size(); ++c)
    csv += std::to_string(c) + "," + default_class_names()[c] + "," + std::to_string(counts[c]) + "\n";
  detail::write_file(out / "class_counts.csv", csv);
  log::info("synth: wrote " + std::to_string(records.size()) + " images to " + out.string());
}

inline void cmd_preprocess(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  const fs::path dir(cfg.data_dir);
  const auto rows = read_labels(dir);
  std::map<std::string, Split> splits;
  if (fs::exists(dir / "splits.csv")) {
    splits = read_splits(dir / "splits.csv");
  } else {
    std::vector<int> labels;
    for (const auto& row : rows) labels.push_back(row.label);
    const auto drawn = stratified_split(labels, cfg.train_fraction, cfg.val_fraction, stage_seed(cfg.seed, "split"));
    for (std::size_t i = 0; i < rows.size(); ++i) splits[rows[i].source_id] = drawn[i];
    log::info("preprocess: no splits.csv, drew a stratified split");
  }
  QualityConfig quality;
  quality.min_side = cfg.min_side;
  std::vector<ImageSample> parts[3];
  Json rejected = Json::array();
  for (const auto& row : rows) {
    const auto it = splits.find(row.source_id);
    if (it == splits.end()) throw Error(Errc::io, "splits.csv has no entry for '" + row.source_id + "'");
    if (row.label < 0 || row.label >= static_cast<int>(kSynthClasses))
      throw Error(Errc::io, "labels.csv: label " + std::to_string(row.label) + " out of range for " + row.source_id);
    RawImage img;
    try {
      img = read_image(dir / "images" / row.filename);
    } catch (const Error& e) {
      if (e.code() != Errc::decode && e.code() != Errc::io) throw;
      rejected.push_back({{"source_id", row.source_id}, {"reason", "undecodable"}, {"detail", e.what()}});
      continue;
    }
    if (const auto why = quality_filter(img, quality); why != Reject::none) {
      rejected.push_back({{"source_id", row.source_id}, {"reason", std::string(reject_name(why))}});
      continue;
    }
    parts[static_cast<int>(it->second)].push_back(preprocess(img, row.label, row.source_id));
  }
  auto& train_set = parts[static_cast<int>(Split::train)];
  std::size_t synthetic = 0;
  if (cfg.smote && !train_set.empty()) {
    SmoteConfig sc;
    sc.k = cfg.smote_k;
    sc.seed = stage_seed(cfg.seed, "smote");
    auto res = smote_oversample(train_set, kSynthClasses, sc);
    synthetic = res.origins.size();
    train_set = std::move(res.samples);
  }
  Json report;
  for (auto s : {Split::train, Split::val, Split::test}) {
    const auto& part = parts[static_cast<int>(s)];
    save_bundle(out / (std::string(split_name(s)) + ".qds"), part);
    report["splits"][std::string(split_name(s))] = {{"samples", part.size()},
                                                     {"class_counts", class_counts(part, kSynthClasses)}};
  }
  report["smote_synthetic"] = synthetic;
  report["rejected"] = rejected;
  detail::write_json(out / "preprocess_report.json", report);
  log::info("preprocess: train " + std::to_string(train_set.size()) + " (" + std::to_string(synthetic) +
            " synthetic), rejected " + std::to_string(rejected.size()));
}

inline void cmd_train(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  const auto train_set = detail::load_split(cfg, "train");
  const auto val_set = detail::load_split(cfg, "val");
  const auto init = init_model<float>(cfg.arch(), stage_seed(cfg.seed, "init"));
  TrainConfig tc;
  tc.adam.lr = cfg.lr;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = stage_seed(cfg.seed, "train");
  tc.augment = cfg.augment;
  tc.cosine_schedule = cfg.cosine;
  tc.recalibrate_bn = true;
  std::string history = "epoch,loss,val_accuracy\n";
  const auto result = train(init, train_set, tc, &val_set, [&](const EpochStats& st) {
    history += std::to_string(st.epoch) + "," + detail::fixed(st.loss) + "," + detail::fixed(st.val_accuracy) + "\n";
    log::info("train: epoch " + std::to_string(st.epoch) + " loss " + detail::fixed(st.loss, 4) + " val acc " +
              detail::fixed(st.val_accuracy, 4));
  });
  ModelMetadata meta{{"seed", std::to_string(cfg.seed)},
                     {"epochs", std::to_string(cfg.epochs)},
                     {"batch_size", std::to_string(cfg.batch_size)},
                     {"lr", detail::format_double(cfg.lr)},
                     {"train_samples", std::to_string(train_set.size())}};
  if (!result.history.empty()) {
    meta["final_loss"] = detail::fixed(result.history.back().loss);
    meta["val_accuracy"] = detail::fixed(result.history.back().val_accuracy);
  }
  save_model(out / "model.qana", result.model, meta);
  detail::write_file(out / "history.csv", history);
}

inline Json metrics_json(const MetricsReport& r) {
  Json j;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    j["per_class"].push_back({{"class", detail::class_label(default_class_names(), c)},
                              {"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"accuracy", m.accuracy},
                              {"support", m.support}});
  }
  j["average"] = {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}, {"accuracy", r.macro.accuracy}};
  j["top1"] = r.top1;
  j["auc"] = std::isnan(r.auc) ? Json(nullptr) : Json(r.auc);
  j["samples"] = r.total;
  return j;
}

inline std::string confusion_csv(const MetricsReport& r) {
  std::string csv = "true\\pred";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) csv += "," + detail::class_label(default_class_names(), c);
  csv += "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    csv += detail::class_label(default_class_names(), t);
    for (auto v : r.confusion[t]) csv += "," + std::to_string(v);
    csv += "\n";
  }
  return csv;
}

inline void write_metrics(const fs::path& out, const MetricsReport& r) {
  detail::write_file(out / "metrics.txt", format_metrics_table(r));
  detail::write_file(out / "metrics.csv", metrics_csv(r));
  detail::write_json(out / "metrics.json", metrics_json(r));
  detail::write_file(out / "confusion.csv", confusion_csv(r));
}

inline MetricsReport cmd_eval(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  detail::require_file(cfg.model, "model");
  const auto mf = load_model(cfg.model);
  const auto report = evaluate(mf.model, detail::load_split(cfg, "test"));
  write_metrics(out, report);
  std::fputs(format_metrics_table(report).c_str(), stdout);
  return report;
}

inline void cmd_convert(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  detail::require_file(cfg.model, "model");
  const auto mf = load_model(cfg.model);
  std::vector<ImageSample> calib;
  for (auto& s : detail::strided(detail::load_split(cfg, "train"), cfg.calibration_samples))
    if (!s.synthetic) calib.push_back(std::move(s));
  Calibration cal;
  const auto spec = convert(mf.model, calib, &cal);
  save_snn(out / "model.qsnn", spec);

  std::string mapping = "source,kind,target,role\n";
  for (const auto& m : spec.mapping) mapping += m.source + "," + m.source_kind + "," + m.target + "," + m.role + "\n";
  detail::write_file(out / "mapping.csv", mapping);
  std::string calib_csv = "slot,scale,zero_point,mean_abs\n";
  for (const auto& s : cal.slots)
    calib_csv += s.name + "," + detail::format_double(s.qp.scale) + "," + std::to_string(s.qp.zero_point) + "," +
                 detail::format_double(s.mean_abs) + "\n";
  detail::write_file(out / "calibration.csv", calib_csv);
  const auto cost = cost_report(spec, cal, cfg.T);
  detail::write_file(out / "cost.txt", format_cost_report(cost));
  Json cj;
  cj["T"] = cost.T;
  cj["neurons"] = cost.neurons;
  cj["synapses"] = cost.synapses;
  cj["estimated_events"] = cost.est_events;
  for (const auto& row : cost.rows)
    cj["nodes"].push_back({{"node", row.node}, {"kind", row.kind}, {"neurons", row.neurons}, {"synapses", row.synapses},
                           {"estimated_events", row.est_events}});
  detail::write_json(out / "cost.json", cj);
  log::info("convert: " + std::to_string(spec.nodes.size()) + " nodes from " + std::to_string(calib.size()) +
            " calibration samples");
}

inline VerifyReport cmd_verify(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  detail::require_file(cfg.model, "model");
  detail::require_file(cfg.snn, "snn");
  const auto mf = load_model(cfg.model);
  const auto spec = load_snn(cfg.snn);
  const auto probes = detail::strided(detail::load_split(cfg, "test"), cfg.verify_samples);
  const auto rep = verify_conversion(fold_batchnorm(mf.model), spec, probes, cfg.T, detail::predict_options(cfg, 0));
  Json j{{"T", rep.T},
         {"samples", rep.samples},
         {"agreement", rep.agreement},
         {"float_agreement", rep.float_agreement},
         {"snn_accuracy", rep.snn_accuracy},
         {"reference_accuracy", rep.reference_accuracy},
         {"max_logit_deviation", rep.max_logit_deviation},
         {"mean_logit_deviation", rep.mean_logit_deviation},
         {"total_events", rep.total_events}};
  detail::write_json(out / "verify.json", j);
  std::string csv = "sample,source_id,logit_deviation\n";
  for (std::size_t i = 0; i < probes.size(); ++i)
    csv += std::to_string(i) + "," + probes[i].source_id + "," + detail::format_double(rep.logit_deviation[i]) + "\n";
  detail::write_file(out / "verify_samples.csv", csv);
  char text[512];
  std::snprintf(text, sizeof(text),
                "T                      %zu\nsamples                %zu\nargmax agreement       %.4f\n"
                "float agreement        %.4f\nsnn accuracy           %.4f\nreference accuracy     %.4f\n"
                "max logit deviation    %.6f\nmean logit deviation   %.6f\nevents                 %llu\n",
                rep.T, rep.samples, rep.agreement, rep.float_agreement, rep.snn_accuracy, rep.reference_accuracy,
                rep.max_logit_deviation, rep.mean_logit_deviation, static_cast<unsigned long long>(rep.total_events));
  detail::write_file(out / "verify.txt", text);
  std::fputs(text, stdout);
  return rep;
}

inline std::string thresholds_csv(const ClassThresholds& th) {
  std::string csv = "class,theta\n";
  for (std::size_t c = 0; c < th.theta.size(); ++c) csv += std::to_string(c) + "," + std::to_string(th.theta[c]) + "\n";
  return csv;
}

inline ClassThresholds read_thresholds(const fs::path& path) {
  ClassThresholds th;
  for (const auto& cells : detail::read_csv(path, {"class", "theta"})) {
    if (detail::parse_uint("class", cells[0]) != th.theta.size()) throw Error(Errc::io, path.string() + ": classes out of order");
    th.theta.push_back(static_cast<std::int64_t>(detail::parse_uint("theta", cells[1])));
  }
  return th;
}

inline void cmd_calibrate(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  detail::require_file(cfg.snn, "snn");
  const auto spec = load_snn(cfg.snn);
  const auto val = detail::load_split(cfg, "val");
  if (val.empty()) throw Error(Errc::empty_input, "calibrate: validation split is empty");
  std::vector<std::vector<std::int64_t>> totals;
  std::vector<int> labels;
  std::size_t plain_ok = 0;
  const DecodeConfig dc{cfg.alpha, cfg.beta};
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto p = predict(spec, val[i].pixels.data(), dc, nullptr, detail::predict_options(cfg, i));
    totals.push_back(p.record.totals);
    labels.push_back(val[i].label);
    plain_ok += p.label == val[i].label ? 1 : 0;
  }
  const auto th = calibrate_thresholds(totals, labels);
  std::size_t thr_ok = 0;
  Json per_class = Json::array();
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto probs = decode_probs(record_from_totals(totals[i], cfg.T), dc);
    thr_ok += select_class(probs, totals[i], &th) == labels[i] ? 1 : 0;
  }
  for (std::size_t c = 0; c < th.theta.size(); ++c) {
    std::vector<std::int64_t> counts;
    std::vector<bool> pos;
    for (std::size_t i = 0; i < totals.size(); ++i) {
      counts.push_back(totals[i][c]);
      pos.push_back(labels[i] == static_cast<int>(c));
    }
    per_class.push_back({{"class", c}, {"theta", th.theta[c]}, {"errors", threshold_errors(counts, pos, th.theta[c])}});
  }
  detail::write_file(out / "thresholds.csv", thresholds_csv(th));
  const double n = static_cast<double>(val.size());
  detail::write_json(out / "calibrate.json", {{"T", cfg.T},
                                              {"samples", val.size()},
                                              {"accuracy_argmax", plain_ok / n},
                                              {"accuracy_thresholded", thr_ok / n},
                                              {"classes", per_class}});
  log::info("calibrate: val accuracy " + detail::fixed(plain_ok / n, 4) + " argmax, " + detail::fixed(thr_ok / n, 4) +
            " with thresholds");
}

inline void cmd_infer(const RunConfig& cfg) {
  const auto out = detail::prepare_out(cfg);
  detail::require_file(cfg.snn, "snn");
  const auto spec = load_snn(cfg.snn);
  std::optional<ClassThresholds> th;
  if (!cfg.thresholds.empty()) {
    detail::require_file(cfg.thresholds, "thresholds");
    th = read_thresholds(cfg.thresholds);
  }
  std::vector<ImageSample> samples;
  if (!cfg.input.empty()) {
    detail::require_file(cfg.input, "input image");
    samples.push_back(preprocess(read_image(cfg.input), -1, fs::path(cfg.input).filename().string()));
  } else {
    samples = detail::strided(detail::load_split(cfg, "test"), cfg.infer_samples);
  }
  if (samples.empty()) throw Error(Errc::empty_input, "infer: nothing to classify");
  const DecodeConfig dc{cfg.alpha, cfg.beta};
  std::string csv = "source_id,label,predicted";
  for (std::size_t c = 0; c < spec.num_classes(); ++c) csv += ",p_" + detail::class_label(default_class_names(), c);
  csv += ",events\n";
  Json stats;
  stats["T"] = cfg.T;
  std::uint64_t all_events = 0;
  std::vector<std::uint64_t> per_layer(spec.nodes.size(), 0);
  std::size_t correct = 0, labelled = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto opt = detail::predict_options(cfg, i);
    opt.sim.record_trace = cfg.trace && i == 0;
    std::vector<TraceEvent> trace;
    const auto p = predict(spec, samples[i].pixels.data(), dc, th ? &*th : nullptr, opt, &trace);
    if (opt.sim.record_trace) detail::write_file(out / "trace.csv", trace_csv(spec, trace));
    csv += samples[i].source_id + "," + std::to_string(samples[i].label) + "," + std::to_string(p.label);
    for (double v : p.probs) csv += "," + detail::fixed(v);
    csv += "," + std::to_string(p.stats.total_events) + "\n";
    all_events += p.stats.total_events;
    for (std::size_t l = 0; l < p.stats.events_per_layer.size(); ++l) {
      const auto idx = spec.find(p.stats.events_per_layer[l].first);
      per_layer[idx] += p.stats.events_per_layer[l].second;
    }
    if (samples[i].label >= 0) {
      ++labelled;
      correct += p.label == samples[i].label ? 1 : 0;
    }
    stats["samples"].push_back({{"source_id", samples[i].source_id},
                                {"predicted", p.label},
                                {"total_events", p.stats.total_events},
                                {"output_counts", p.record.totals}});
  }
  const double n = static_cast<double>(samples.size());
  stats["mean_events"] = static_cast<double>(all_events) / n;
  for (std::size_t l = 0; l < spec.nodes.size(); ++l) {
    const auto& node = spec.nodes[l];
    if (node.kind == NodeKind::gain_eca || node.kind == NodeKind::gain_se) continue;
    const double mean = static_cast<double>(per_layer[l]) / n;
    stats["layers"].push_back({{"node", node.name},
                               {"mean_events", mean},
                               {"rate", mean / static_cast<double>(node.neurons() * cfg.T)}});
  }
  if (labelled > 0) stats["accuracy"] = static_cast<double>(correct) / static_cast<double>(labelled);
  detail::write_file(out / "predictions.csv", csv);
  detail::write_json(out / "spike_stats.json", stats);
  log::info("infer: classified " + std::to_string(samples.size()) + " samples");
}

}  // namespace qana
