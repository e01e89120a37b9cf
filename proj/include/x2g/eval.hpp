#pragma once

// Classification metrics: accuracy, Cohen's kappa, macro F1, one-vs-rest
// ROC AUC (midrank), per-class precision-recall curves and average
// precision, plus JSON reports and fold aggregation.
//
// Conventions: undefined precision/recall/F1 are 0; kappa is 0 when chance
// agreement is 1; classes without both positives and negatives are left out
// of the macro AUC (with a warning) but still count as 0 in macro F1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "x2g/common.hpp"

namespace x2g {

/// counts[truth][pred]
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

inline ConfusionMatrix confusion_matrix(std::span<const std::uint32_t> pred,
                                        std::span<const std::uint32_t> truth,
                                        std::size_t num_classes) {
  if (pred.size() != truth.size()) throw UsageError("confusion_matrix: length mismatch");
  ConfusionMatrix cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= num_classes || truth[i] >= num_classes)
      throw UsageError("confusion_matrix: class index out of range");
    ++cm[truth[i]][pred[i]];
  }
  return cm;
}

inline std::size_t total_count(const ConfusionMatrix& cm) {
  std::size_t t = 0;
  for (const auto& r : cm) t = std::accumulate(r.begin(), r.end(), t);
  return t;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = total_count(cm);
  if (total == 0) return 0.0;
  std::size_t diag = 0;
  for (std::size_t c = 0; c < cm.size(); ++c) diag += cm[c][c];
  return static_cast<double>(diag) / static_cast<double>(total);
}

inline double cohen_kappa(const ConfusionMatrix& cm) {
  const auto total = total_count(cm);
  if (total == 0) throw UsageError("cohen_kappa: empty confusion matrix");
  const double t = static_cast<double>(total);
  double pe = 0;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    double row = 0, col = 0;
    for (std::size_t k = 0; k < cm.size(); ++k) {
      row += static_cast<double>(cm[c][k]);
      col += static_cast<double>(cm[k][c]);
    }
    pe += row * col;
  }
  pe /= t * t;
  if (pe == 1.0) return 0.0;
  return (accuracy(cm) - pe) / (1.0 - pe);
}

struct ClassRates {
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
};

inline ClassRates class_rates(const ConfusionMatrix& cm) {
  const std::size_t c_n = cm.size();
  ClassRates r;
  r.precision.assign(c_n, 0.0);
  r.recall.assign(c_n, 0.0);
  r.f1.assign(c_n, 0.0);
  r.support.assign(c_n, 0);
  for (std::size_t c = 0; c < c_n; ++c) {
    std::size_t pred_c = 0;
    for (std::size_t k = 0; k < c_n; ++k) {
      r.support[c] += cm[c][k];
      pred_c += cm[k][c];
    }
    const double tp = static_cast<double>(cm[c][c]);
    if (pred_c > 0) r.precision[c] = tp / static_cast<double>(pred_c);
    if (r.support[c] > 0) r.recall[c] = tp / static_cast<double>(r.support[c]);
    const double s = r.precision[c] + r.recall[c];
    if (s > 0) r.f1[c] = 2.0 * r.precision[c] * r.recall[c] / s;
  }
  return r;
}

inline double macro_f1(const ConfusionMatrix& cm) {
  if (cm.empty()) return 0.0;
  auto r = class_rates(cm);
  return std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / static_cast<double>(cm.size());
}

/// Binary ROC AUC via the Mann-Whitney rank statistic with midranks for
/// ties. Empty when either class is missing.
inline std::optional<double> roc_auc(std::span<const double> scores,
                                     std::span<const std::uint8_t> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double p = static_cast<double>(n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

struct AucResult {
  std::vector<std::optional<double>> per_class;
  double macro = std::numeric_limits<double>::quiet_NaN();
};

/// `scores[i][c]` is the score of sample i for class c.
inline AucResult roc_auc_ovr(const std::vector<std::vector<double>>& scores,
                             std::span<const std::uint32_t> truth, std::size_t num_classes,
                             bool warn_excluded = true) {
  AucResult r;
  std::vector<double> s(scores.size());
  std::vector<std::uint8_t> pos(scores.size());
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      pos[i] = truth[i] == c;
    }
    auto auc = roc_auc(s, pos);
    if (auc) {
      sum += *auc;
      ++used;
    } else if (warn_excluded && !scores.empty()) {
      warn("class " + std::to_string(c) +
           " lacks positives or negatives; excluded from macro AUC");
    }
    r.per_class.push_back(auc);
  }
  if (used > 0) r.macro = sum / static_cast<double>(used);
  return r;
}

struct PrCurve {
  std::vector<double> threshold;
  std::vector<double> recall;
  std::vector<double> precision;
  double average_precision = 0.0;
};

/// Precision and recall at every distinct score threshold (descending), and
/// AP = sum_k (R_k - R_{k-1}) P_k. AP is 0 when there are no positives.
inline PrCurve pr_curve_ap(std::span<const double> scores,
                           std::span<const std::uint8_t> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) n_pos += positive[i] ? 1 : 0;
  PrCurve c;
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    do {
      if (positive[order[j]]) ++tp;
      else ++fp;
      ++j;
    } while (j < n && scores[order[j]] == scores[order[i]]);
    const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = n_pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_pos);
    c.threshold.push_back(scores[order[i]]);
    c.precision.push_back(prec);
    c.recall.push_back(rec);
    c.average_precision += (rec - prev_recall) * prec;
    prev_recall = rec;
    i = j;
  }
  return c;
}

inline std::vector<std::uint32_t> argmax_rows(const std::vector<std::vector<double>>& probs) {
  std::vector<std::uint32_t> out;
  out.reserve(probs.size());
  for (const auto& p : probs)
    out.push_back(static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  return out;
}

struct EvalReport {
  std::size_t num_samples = 0;
  double accuracy = 0, macro_auc = 0, macro_f1 = 0, kappa = 0;
  std::vector<double> precision, recall, f1, average_precision;
  std::vector<std::optional<double>> auc;
  std::vector<std::size_t> support;
  ConfusionMatrix confusion;
  std::vector<PrCurve> pr_curves;
};

/// Composes the metric operations over class-probability rows.
inline EvalReport evaluate_outputs(const std::vector<std::vector<double>>& probs,
                                   std::span<const std::uint32_t> truth,
                                   std::size_t num_classes, bool warn_excluded = true) {
  if (probs.size() != truth.size()) throw UsageError("evaluate: length mismatch");
  EvalReport r;
  r.num_samples = probs.size();
  const auto pred = argmax_rows(probs);
  r.confusion = confusion_matrix(pred, truth, num_classes);
  r.accuracy = accuracy(r.confusion);
  r.kappa = r.num_samples == 0 ? 0.0 : cohen_kappa(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  auto rates = class_rates(r.confusion);
  r.precision = rates.precision;
  r.recall = rates.recall;
  r.f1 = rates.f1;
  r.support = rates.support;
  auto auc = roc_auc_ovr(probs, truth, num_classes, warn_excluded);
  r.auc = auc.per_class;
  r.macro_auc = auc.macro;
  std::vector<double> s(probs.size());
  std::vector<std::uint8_t> pos(probs.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s[i] = probs[i][c];
      pos[i] = truth[i] == c;
    }
    auto curve = pr_curve_ap(s, pos);
    r.average_precision.push_back(curve.average_precision);
    r.pr_curves.push_back(std::move(curve));
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {
inline nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}
inline double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r, bool with_curves = true) {
  using nlohmann::json;
  json j;
  j["num_samples"] = r.num_samples;
  j["accuracy"] = r.accuracy;
  j["macro_auc"] = detail::number_or_null(r.macro_auc);
  j["macro_f1"] = r.macro_f1;
  j["kappa"] = r.kappa;
  json per = json::array();
  for (std::size_t c = 0; c < r.precision.size(); ++c) {
    per.push_back({{"precision", r.precision[c]},
                   {"recall", r.recall[c]},
                   {"f1", r.f1[c]},
                   {"average_precision", r.average_precision[c]},
                   {"auc", r.auc[c] ? json(*r.auc[c]) : json(nullptr)},
                   {"support", r.support[c]}});
  }
  j["per_class"] = per;
  j["confusion"] = r.confusion;
  if (with_curves) {
    json curves = json::array();
    for (const auto& c : r.pr_curves)
      curves.push_back({{"threshold", c.threshold},
                        {"recall", c.recall},
                        {"precision", c.precision},
                        {"average_precision", c.average_precision}});
    j["pr_curves"] = curves;
  }
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.num_samples = j.at("num_samples").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_auc = detail::number_from(j.at("macro_auc"));
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.kappa = j.at("kappa").get<double>();
  for (const auto& c : j.at("per_class")) {
    r.precision.push_back(c.at("precision").get<double>());
    r.recall.push_back(c.at("recall").get<double>());
    r.f1.push_back(c.at("f1").get<double>());
    r.average_precision.push_back(c.at("average_precision").get<double>());
    r.auc.push_back(c.at("auc").is_null() ? std::nullopt
                                          : std::optional<double>(c.at("auc").get<double>()));
    r.support.push_back(c.at("support").get<std::size_t>());
  }
  r.confusion = j.at("confusion").get<ConfusionMatrix>();
  if (j.contains("pr_curves")) {
    for (const auto& c : j.at("pr_curves")) {
      PrCurve pc;
      pc.threshold = c.at("threshold").get<std::vector<double>>();
      pc.recall = c.at("recall").get<std::vector<double>>();
      pc.precision = c.at("precision").get<std::vector<double>>();
      pc.average_precision = c.at("average_precision").get<double>();
      r.pr_curves.push_back(std::move(pc));
    }
  }
  return r;
}

struct MetricSummary {
  double mean = 0, stddev = 0;
};

/// Unweighted mean and population standard deviation of the headline
/// metrics across folds.
struct AggregateReport {
  std::size_t folds = 0;
  MetricSummary accuracy, macro_auc, macro_f1, kappa;
};

inline AggregateReport aggregate(std::span<const EvalReport> reports) {
  AggregateReport a;
  a.folds = reports.size();
  if (reports.empty()) return a;
  auto summarize = [&](auto field) {
    MetricSummary s;
    const double n = static_cast<double>(reports.size());
    // shifted by the first value so identical folds give exactly zero spread
    const double shift = field(reports.front());
    double d = 0, d2 = 0;
    for (const auto& r : reports) {
      const double x = field(r) - shift;
      d += x;
      d2 += x * x;
    }
    s.mean = shift + d / n;
    s.stddev = std::sqrt(std::max(0.0, d2 / n - (d / n) * (d / n)));
    return s;
  };
  a.accuracy = summarize([](const EvalReport& r) { return r.accuracy; });
  a.macro_auc = summarize([](const EvalReport& r) { return r.macro_auc; });
  a.macro_f1 = summarize([](const EvalReport& r) { return r.macro_f1; });
  a.kappa = summarize([](const EvalReport& r) { return r.kappa; });
  return a;
}

inline nlohmann::json to_json(const AggregateReport& a) {
  auto m = [](const MetricSummary& s) {
    return nlohmann::json{{"mean", detail::number_or_null(s.mean)},
                          {"std", detail::number_or_null(s.stddev)}};
  };
  return {{"folds", a.folds},
          {"accuracy", m(a.accuracy)},
          {"macro_auc", m(a.macro_auc)},
          {"macro_f1", m(a.macro_f1)},
          {"kappa", m(a.kappa)}};
}

}  // namespace x2g
