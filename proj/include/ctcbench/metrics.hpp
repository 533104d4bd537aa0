#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/core/error.hpp"
#include "ctcbench/data.hpp"

namespace ctcbench {

/// Shortest decimal text that parses back to the same double.
inline std::string real_str(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Binary confusion counts; CTC is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<Label>& predictions, const std::vector<Label>& truths) {
  if (predictions.size() != truths.size())
    throw ValidationError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                          std::to_string(truths.size()) + " truths");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool pred_pos = predictions[i] == Label::CTC;
    const bool true_pos = truths[i] == Label::CTC;
    if (pred_pos && true_pos) ++cm.tp;
    else if (pred_pos) ++cm.fp;
    else if (true_pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

enum class Averaging { MACRO, POSITIVE_CLASS };

inline std::string_view to_string(Averaging a) noexcept {
  return a == Averaging::MACRO ? "MACRO" : "POSITIVE_CLASS";
}

inline Averaging parse_averaging(std::string_view s) {
  if (s == "MACRO") return Averaging::MACRO;
  if (s == "POSITIVE_CLASS") return Averaging::POSITIVE_CLASS;
  throw ValidationError("unknown averaging '" + std::string(s) + "'");
}

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
  bool precision_undefined = false;  // zero denominator, reported as 0
  bool recall_undefined = false;
};

struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  Averaging averaging = Averaging::MACRO;
  ClassMetrics ctc;
  ClassMetrics leuko;
  ConfusionMatrix cm;
};

namespace metrics_detail {

inline double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline ClassMetrics class_metrics(std::size_t hit, std::size_t false_pos, std::size_t miss) {
  ClassMetrics m;
  m.precision = ratio(hit, hit + false_pos, m.precision_undefined);
  m.recall = ratio(hit, hit + miss, m.recall_undefined);
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.support = hit + miss;
  return m;
}

}  // namespace metrics_detail

/// Accuracy plus precision/recall/F1, macro-averaged over both classes or for
/// the CTC class alone. Undefined ratios are 0 and flagged per class.
inline MetricsReport compute_metrics(const ConfusionMatrix& cm, Averaging averaging = Averaging::MACRO) {
  if (cm.total() == 0) throw ValidationError("compute_metrics: empty confusion matrix");
  MetricsReport r;
  r.cm = cm;
  r.averaging = averaging;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.ctc = metrics_detail::class_metrics(cm.tp, cm.fp, cm.fn);
  r.leuko = metrics_detail::class_metrics(cm.tn, cm.fn, cm.fp);
  if (averaging == Averaging::MACRO) {
    r.precision = (r.ctc.precision + r.leuko.precision) / 2.0;
    r.recall = (r.ctc.recall + r.leuko.recall) / 2.0;
    r.f1 = (r.ctc.f1 + r.leuko.f1) / 2.0;
  } else {
    r.precision = r.ctc.precision;
    r.recall = r.ctc.recall;
    const std::size_t den = 2 * cm.tp + cm.fp + cm.fn;
    r.f1 = den == 0 ? 0.0 : static_cast<double>(2 * cm.tp) / static_cast<double>(den);
  }
  return r;
}

inline nlohmann::ordered_json to_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["support"] = m.support;
  if (m.precision_undefined) j["precision_undefined"] = true;
  if (m.recall_undefined) j["recall_undefined"] = true;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["averaging"] = std::string(to_string(r.averaging));
  j["per_class"] = {{"CTC", to_json(r.ctc)}, {"LEUKO", to_json(r.leuko)}};
  j["confusion"] = {{"tp", r.cm.tp}, {"fp", r.cm.fp}, {"tn", r.cm.tn}, {"fn", r.cm.fn}};
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  const auto& c = j.at("confusion");
  ConfusionMatrix cm{c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                     c.at("tn").get<std::size_t>(), c.at("fn").get<std::size_t>()};
  return compute_metrics(cm, parse_averaging(j.at("averaging").get<std::string>()));
}

/// Mean and sample standard deviation of one metric over seeds.
struct MeanStd {
  double mean = 0;
  double std = 0;
  std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  out.n = v.size();
  if (v.empty()) return out;
  double s = 0;
  for (double x : v) s += x;
  out.mean = s / v.size();
  if (v.size() > 1) {
    double sq = 0;
    for (double x : v) sq += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(sq / (v.size() - 1));
  }
  return out;
}

inline std::string format_mean_std(const MeanStd& m, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << m.mean << " ± " << m.std;
  return os.str();
}

/// One row of a mean ± std summary table.
struct SummaryRow {
  std::string name;
  MeanStd accuracy, precision, recall, f1;
  bool complete = true;
};

/// Markdown table with mean ± std columns; the best mean per column is bolded
/// when `bold_best` is set.
inline std::string render_summary_markdown(const std::vector<SummaryRow>& rows, bool bold_best) {
  auto best = [&](auto field) {
    double b = -1.0;
    for (const auto& r : rows) b = std::max(b, (r.*field).mean);
    return b;
  };
  const double bests[4] = {best(&SummaryRow::accuracy), best(&SummaryRow::precision),
                           best(&SummaryRow::recall), best(&SummaryRow::f1)};
  std::ostringstream os;
  os << "| | Accuracy | Precision | Recall | F1-score |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| **" << r.name << "**" << (r.complete ? "" : " (incomplete)");
    const MeanStd* cols[4] = {&r.accuracy, &r.precision, &r.recall, &r.f1};
    for (int i = 0; i < 4; ++i) {
      const auto cell = format_mean_std(*cols[i]);
      const bool mark = bold_best && rows.size() > 1 && std::abs(cols[i]->mean - bests[i]) < 1e-12;
      os << " | " << (mark ? "**" + cell + "**" : cell);
    }
    os << " |\n";
  }
  return os.str();
}

inline std::string render_summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "name,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,f1_mean,"
        "f1_std,n,complete\n";
  for (const auto& r : rows) {
    os << detail::csv_field(r.name);
    for (const MeanStd* m : {&r.accuracy, &r.precision, &r.recall, &r.f1})
      os << ',' << real_str(m->mean) << ',' << real_str(m->std);
    os << ',' << r.f1.n << ',' << (r.complete ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace ctcbench
