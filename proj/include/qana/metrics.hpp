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


// Classification metrics from a confusion matrix plus one-vs-rest AUC.
// Per-class "accuracy" is the class recall (correct / support).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qana/error.hpp"

namespace qana {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted means over classes with support > 0
  double top1 = 0.0;
  double auc = 0.0;  // one-vs-rest, macro over classes with both positives and negatives
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t total = 0;
};

/// Display names in label order.
inline const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names{"akiec", "bcc", "bkl", "df", "nv", "vasc", "mel"};
  return names;
}

inline std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> labels, std::span<const int> preds,
                                                              std::size_t num_classes) {
  if (labels.size() != preds.size()) throw ShapeError("confusion_matrix", "prediction count", preds.size(), labels.size());
  std::vector<std::vector<std::size_t>> cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes || preds[i] < 0 ||
        static_cast<std::size_t>(preds[i]) >= num_classes)
      throw Error(Errc::invalid_argument, "confusion_matrix: class id out of range at row " + std::to_string(i));
    ++cm[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Unweighted mean of each column; rows with zero support are skipped
/// unless every row has zero support (e.g. rows copied from a table).
inline ClassMetrics macro_average(std::span<const ClassMetrics> rows) {
  const bool any_support = std::any_of(rows.begin(), rows.end(), [](const ClassMetrics& r) { return r.support > 0; });
  ClassMetrics m;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (any_support && r.support == 0) continue;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
    m.accuracy += r.accuracy;
    m.support += r.support;
    ++n;
  }
  if (n == 0) return m;
  const double d = static_cast<double>(n);
  m.precision /= d;
  m.recall /= d;
  m.f1 /= d;
  m.accuracy /= d;
  return m;
}

/// Area under the ROC curve via the Mann-Whitney statistic with mid-ranks
/// for ties (equal to trapezoidal integration of the empirical ROC).
/// NaN when either class is empty.
inline double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("binary_auc", "label count", positive.size(), scores.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t q = i; q < j; ++q)
      if (positive[order[q]]) rank_sum += mid;
    i = j;
  }
  for (bool p : positive) pos += p ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

/// `scores` is row-major [N, K] (probabilities or logits).
inline MetricsReport compute_metrics(std::span<const int> labels, std::span<const double> scores,
                                     std::size_t num_classes) {
  const std::size_t n = labels.size(), k = num_classes;
  if (scores.size() != n * k) throw ShapeError("compute_metrics", "score elements", scores.size(), n * k);
  std::vector<int> preds(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = scores.subspan(i * k, k);
    preds[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  MetricsReport r;
  r.confusion = confusion_matrix(labels, preds, k);
  r.total = n;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0, support = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += r.confusion[o][c];
      support += r.confusion[c][o];
    }
    const std::size_t tp = r.confusion[c][c];
    correct += tp;
    ClassMetrics m;
    m.support = support;
    m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    m.accuracy = m.recall;
    r.per_class.push_back(m);
  }
  r.macro = macro_average(r.per_class);
  r.top1 = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;

  double auc_sum = 0.0;
  std::size_t auc_n = 0;
  std::vector<double> col(n);
  std::vector<bool> pos(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores[i * k + c];
      pos[i] = labels[i] == static_cast<int>(c);
    }
    const double a = binary_auc(col, pos);
    if (!std::isnan(a)) {
      auc_sum += a;
      ++auc_n;
    }
  }
  r.auc = auc_n ? auc_sum / static_cast<double>(auc_n) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

namespace detail {

inline std::string class_label(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : "class" + std::to_string(c);
}

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace detail

/// Aligned text table: one row per class, then the macro average.
inline std::string format_metrics_table(const MetricsReport& r, const std::vector<std::string>& names = default_class_names()) {
  std::size_t w = 7;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) w = std::max(w, detail::class_label(names, c).size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %9s  %9s  %9s  %9s  %7s\n", static_cast<int>(w), "Class", "Precision",
                "Recall", "F1", "Accuracy", "Support");
  out += line;
  out += std::string(w + 53, '-') + "\n";
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    std::snprintf(line, sizeof(line), "%-*s  %9.3f  %9.3f  %9.3f  %9.3f  %7zu\n", static_cast<int>(w), name.c_str(),
                  m.precision, m.recall, m.f1, m.accuracy, m.support);
    out += line;
  };
  for (std::size_t c = 0; c < r.per_class.size(); ++c) row(detail::class_label(names, c), r.per_class[c]);
  out += std::string(w + 53, '-') + "\n";
  row("Average", r.macro);
  std::snprintf(line, sizeof(line), "\nTop-1 accuracy %.4f   AUC-ROC (ovr macro) %.4f   samples %zu\n", r.top1, r.auc,
                r.total);
  out += line;
  return out;
}

inline std::string metrics_csv(const MetricsReport& r, const std::vector<std::string>& names = default_class_names()) {
  std::string out = "class,precision,recall,f1,accuracy,support\n";
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    out += name + "," + detail::fmt3(m.precision) + "," + detail::fmt3(m.recall) + "," + detail::fmt3(m.f1) + "," +
           detail::fmt3(m.accuracy) + "," + std::to_string(m.support) + "\n";
  };
  for (std::size_t c = 0; c < r.per_class.size(); ++c) row(detail::class_label(names, c), r.per_class[c]);
  row("average", r.macro);
  return out;
}

}  // namespace qana
