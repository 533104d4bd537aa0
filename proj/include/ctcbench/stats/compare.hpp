#pragma once

#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/stats/tests.hpp"

namespace ctcbench::stats {

/// One step of the comparison; `result` is empty when the test could not be
/// computed (`skipped_reason` says why).
struct TraceStep {
  std::string role;  // "levene", "shapiro_a", "shapiro_b", "shapiro_pooled", "final"
  std::optional<StatTestResult> result;
  std::string skipped_reason;
};

struct DecisionTrace {
  std::string group_a, group_b;
  double alpha = 0.05;
  std::vector<TraceStep> steps;
  bool variances_homogeneous = true;
  bool normality_rejected = false;
  bool normality_unassessable = false;
  std::string selected_test;
  std::string rationale;
  StatTestResult final_result;

  const TraceStep* step(std::string_view role) const {
    for (const auto& s : steps)
      if (s.role == role) return &s;
    return nullptr;
  }
};

/// Chooses and runs the two-group comparison for per-seed metric vectors:
/// Levene first, then Shapiro-Wilk on each group and on the pooled values.
/// Any normality rejection (or a group whose normality cannot be assessed)
/// selects Mann-Whitney; otherwise a t-test, pooled when Levene does not
/// reject and Welch when it does.
inline DecisionTrace compare_arms(const Sample& a, const Sample& b, double alpha = 0.05,
                                  Center center = Center::MEAN) {
  a.require(1, "compare_arms");
  b.require(1, "compare_arms");
  DecisionTrace t;
  t.group_a = a.group_label;
  t.group_b = b.group_label;
  t.alpha = alpha;

  auto attempt = [&](const std::string& role, auto&& fn) -> std::optional<StatTestResult> {
    TraceStep step{role, std::nullopt, ""};
    try {
      step.result = fn();
    } catch (const DegenerateError& e) {
      step.skipped_reason = e.what();
    } catch (const ValidationError& e) {
      step.skipped_reason = e.what();
    }
    t.steps.push_back(step);
    return step.result;
  };

  const auto lev = attempt("levene", [&] { return levene_test(a, b, center, alpha); });
  t.variances_homogeneous = !lev || !lev->reject_null;

  Sample pooled{a.values, "pooled"};
  pooled.values.insert(pooled.values.end(), b.values.begin(), b.values.end());
  for (const auto& [role, s] : {std::pair<std::string, const Sample*>{"shapiro_a", &a},
                                {"shapiro_b", &b},
                                {"shapiro_pooled", &pooled}}) {
    const auto sw = attempt(role, [&] { return shapiro_wilk(*s, alpha); });
    if (!sw) t.normality_unassessable = true;
    else if (sw->reject_null) t.normality_rejected = true;
  }

  if (t.normality_rejected || t.normality_unassessable) {
    t.selected_test = "Mann-Whitney U";
    t.rationale = t.normality_rejected ? "Shapiro-Wilk rejected normality"
                                       : "normality could not be assessed for every group";
    t.final_result = mann_whitney_u(a, b, Alternative::TWO_SIDED, alpha);
  } else {
    const bool equal_var = t.variances_homogeneous;
    t.selected_test = equal_var ? "Student t" : "Welch t";
    t.rationale = std::string("normality not rejected; Levene ") +
                  (equal_var ? "did not reject equal variances" : "rejected equal variances");
    t.final_result = t_test(a, b, equal_var, alpha);
  }
  t.steps.push_back({"final", t.final_result, ""});
  return t;
}

inline nlohmann::ordered_json to_json(const DecisionTrace& t) {
  nlohmann::ordered_json j;
  j["group_a"] = t.group_a;
  j["group_b"] = t.group_b;
  j["alpha"] = t.alpha;
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : t.steps) {
    nlohmann::ordered_json e;
    e["role"] = s.role;
    if (s.result) e["result"] = to_json(*s.result);
    else e["skipped_reason"] = s.skipped_reason;
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);
  j["variances_homogeneous"] = t.variances_homogeneous;
  j["normality_rejected"] = t.normality_rejected;
  j["normality_unassessable"] = t.normality_unassessable;
  j["selected_test"] = t.selected_test;
  j["rationale"] = t.rationale;
  j["final"] = to_json(t.final_result);
  return j;
}

/// Plain-text table of every test run: statistic, degrees of freedom, p.
inline std::string render_trace(const DecisionTrace& t) {
  std::ostringstream os;
  os << "Comparison: " << t.group_a << " vs " << t.group_b << " (alpha = " << t.alpha << ")\n\n";
  os << std::left << std::setw(16) << "step" << std::setw(16) << "test" << std::setw(14) << "statistic"
     << std::setw(14) << "df" << "p\n";
  for (const auto& s : t.steps) {
    os << std::setw(16) << s.role;
    if (!s.result) {
      os << "skipped: " << s.skipped_reason << "\n";
      continue;
    }
    const auto& r = *s.result;
    std::ostringstream df;
    for (std::size_t i = 0; i < r.dof.size(); ++i) df << (i ? ", " : "") << std::setprecision(4) << r.dof[i];
    std::ostringstream stat, p;
    stat << std::setprecision(5) << r.statistic;
    p << std::setprecision(4) << r.p_value;
    os << std::setw(16) << r.test_name << std::setw(14) << stat.str() << std::setw(14)
       << (df.str().empty() ? "-" : df.str()) << p.str() << (r.reject_null ? " *" : "") << "\n";
  }
  os << "\nSelected: " << t.selected_test << " (" << t.rationale << ")\n";
  os << "Verdict: " << (t.final_result.reject_null ? "reject" : "do not reject")
     << " the null hypothesis at alpha = " << t.alpha << " (p = " << std::setprecision(4)
     << t.final_result.p_value << ", " << to_string(t.final_result.method) << ")\n";
  return os.str();
}

}  // namespace ctcbench::stats
