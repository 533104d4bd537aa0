#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/core/error.hpp"
#include "ctcbench/stats/distributions.hpp"

namespace ctcbench::stats {

struct Sample {
  std::vector<double> values;
  std::string group_label;

  std::size_t size() const noexcept { return values.size(); }

  void require(std::size_t min_size, const char* who) const {
    if (values.size() < min_size)
      throw ValidationError(std::string(who) + ": group '" + group_label + "' needs at least " +
                            std::to_string(min_size) + " values");
    for (double v : values)
      if (!std::isfinite(v))
        throw ValidationError(std::string(who) + ": group '" + group_label + "' has a non-finite value");
  }
};

enum class Method { EXACT, APPROXIMATE };
enum class Center { MEAN, MEDIAN };
enum class Alternative { TWO_SIDED, LESS, GREATER };

inline std::string_view to_string(Method m) noexcept { return m == Method::EXACT ? "EXACT" : "APPROXIMATE"; }
inline std::string_view to_string(Center c) noexcept { return c == Center::MEAN ? "MEAN" : "MEDIAN"; }
inline std::string_view to_string(Alternative a) noexcept {
  switch (a) {
    case Alternative::TWO_SIDED: return "TWO_SIDED";
    case Alternative::LESS: return "LESS";
    case Alternative::GREATER: return "GREATER";
  }
  return "?";
}

inline Center parse_center(std::string_view s) {
  if (s == "MEAN") return Center::MEAN;
  if (s == "MEDIAN") return Center::MEDIAN;
  throw ValidationError("unknown Levene center '" + std::string(s) + "'");
}

struct StatTestResult {
  std::string test_name;
  double statistic = 0;
  double p_value = 1;
  Method method = Method::APPROXIMATE;
  double alpha = 0.05;
  bool reject_null = false;
  std::vector<double> dof;  // degrees of freedom where applicable
  std::string notes;
};

inline StatTestResult finish(StatTestResult r) {
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  r.reject_null = r.p_value < r.alpha;
  return r;
}

inline nlohmann::ordered_json to_json(const StatTestResult& r) {
  nlohmann::ordered_json j;
  j["test_name"] = r.test_name;
  j["statistic"] = r.statistic;
  j["p_value"] = r.p_value;
  j["method"] = std::string(to_string(r.method));
  j["alpha"] = r.alpha;
  j["reject_null"] = r.reject_null;
  if (!r.dof.empty()) j["dof"] = r.dof;
  j["notes"] = r.notes;
  return j;
}

namespace detail {

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Ascending-coefficient polynomial c[0] + c[1] x + ...
inline double poly(const double* c, int n, double x) {
  double r = 0.0;
  for (int i = n - 1; i >= 0; --i) r = r * x + c[i];
  return r;
}

}  // namespace detail

/// Levene's test for equal variances of two groups: one-way ANOVA F on the
/// absolute deviations from each group's mean (or median: Brown-Forsythe).
inline StatTestResult levene_test(const Sample& a, const Sample& b, Center center = Center::MEAN,
                                  double alpha = 0.05) {
  a.require(2, "levene_test");
  b.require(2, "levene_test");
  auto deviations = [center](const std::vector<double>& v) {
    const double c = center == Center::MEAN ? detail::mean(v) : detail::median(v);
    std::vector<double> z;
    z.reserve(v.size());
    for (double x : v) z.push_back(std::abs(x - c));
    return z;
  };
  const auto za = deviations(a.values), zb = deviations(b.values);
  const double na = static_cast<double>(za.size()), nb = static_cast<double>(zb.size());
  const double n = na + nb;
  const double ma = detail::mean(za), mb = detail::mean(zb);
  const double grand = (ma * na + mb * nb) / n;
  const double between = na * (ma - grand) * (ma - grand) + nb * (mb - grand) * (mb - grand);
  double within = 0.0;
  for (double z : za) within += (z - ma) * (z - ma);
  for (double z : zb) within += (z - mb) * (z - mb);

  StatTestResult r;
  r.test_name = "Levene";
  r.method = Method::APPROXIMATE;
  r.alpha = alpha;
  r.dof = {1.0, n - 2.0};
  r.notes = "center=" + std::string(to_string(center));
  if (within == 0.0) {
    if (between == 0.0)
      throw DegenerateError("levene_test: all absolute deviations are zero in both groups");
    r.statistic = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return finish(r);
  }
  r.statistic = (n - 2.0) * between / within;
  r.p_value = f_sf(r.statistic, 1.0, n - 2.0);
  return finish(r);
}

/// Shapiro-Wilk W with Royston's AS R94 coefficients and p-value
/// approximation, valid for 3 <= n <= 5000.
inline StatTestResult shapiro_wilk(const Sample& sample, double alpha = 0.05) {
  sample.require(3, "shapiro_wilk");
  const std::size_t n = sample.size();
  if (n > 5000) throw ValidationError("shapiro_wilk: n must be <= 5000");
  std::vector<double> x = sample.values;
  std::sort(x.begin(), x.end());
  const double range = x.back() - x.front();
  if (range < 1e-19 * std::max(1.0, std::abs(x.front())))
    throw DegenerateError("shapiro_wilk: all values identical");

  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double g[] = {-2.273, 0.459};

  const double an = static_cast<double>(n);
  const std::size_t half = n / 2;
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = detail::poly(c1, 6, rsn) - m[0] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
      first = 2;
      const double a2 = -m[1] / ssumm2 + detail::poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) /
                      (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      first = 1;
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  // Antisymmetric coefficient vector over the order statistics.
  std::vector<double> coef(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    coef[i] = -a[i];
    coef[n - 1 - i] = a[i];
  }
  const double sa = std::accumulate(coef.begin(), coef.end(), 0.0) / an;
  double sx = 0.0;
  for (double v : x) sx += v / range;
  sx /= an;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double asa = coef[i] - sa;
    const double xsx = x[i] / range - sx;
    ssa += asa * asa;
    ssx += xsx * xsx;
    sax += asa * xsx;
  }
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  const double w = 1.0 - w1;

  StatTestResult r;
  r.test_name = "Shapiro-Wilk";
  r.statistic = w;
  r.alpha = alpha;
  r.method = Method::APPROXIMATE;
  r.notes = "n=" + std::to_string(n);
  if (n == 3) {
    constexpr double pi6 = 6.0 / std::numbers::pi;
    const double stqr = std::asin(std::sqrt(0.75));
    r.p_value = std::max(0.0, pi6 * (std::asin(std::sqrt(std::min(w, 1.0))) - stqr));
    r.method = Method::EXACT;
    return finish(r);
  }
  double y = std::log(w1);
  const double lnn = std::log(an);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = detail::poly(g, 2, an);
    if (y >= gamma) {
      r.p_value = 1e-99;
      return finish(r);
    }
    y = -std::log(gamma - y);
    mu = detail::poly(c3, 4, an);
    sigma = std::exp(detail::poly(c4, 4, an));
  } else {
    mu = detail::poly(c5, 4, lnn);
    sigma = std::exp(detail::poly(c6, 3, lnn));
  }
  r.p_value = normal_sf((y - mu) / sigma);
  return finish(r);
}

namespace detail {

/// Midranks (1-based) of the pooled values, doubled so they are integers.
inline std::vector<std::int64_t> doubled_midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
  std::vector<std::int64_t> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    // ranks i+1 .. j+1 averaged, doubled: (i+1 + j+1)
    const auto r2 = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    i = j + 1;
  }
  return rank2;
}

inline double tie_term(const std::vector<double>& pooled) {
  std::vector<double> s = pooled;
  std::sort(s.begin(), s.end());
  double t = 0.0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
    const double c = static_cast<double>(j - i + 1);
    t += c * c * c - c;
    i = j + 1;
  }
  return t;
}

}  // namespace detail

/// Largest pooled size for which the exact null distribution is enumerated.
inline constexpr std::size_t kMannWhitneyExactLimit = 12;

/// Mann-Whitney U for group a (ties get midranks). GREATER means a tends to
/// exceed b. Exact p enumerates every assignment of the pooled ranks when
/// n1 + n2 <= 12; otherwise the tie-corrected normal approximation with
/// continuity correction is used. The two-sided exact p is
/// P(|U - n1 n2 / 2| >= |u_obs - n1 n2 / 2|).
inline StatTestResult mann_whitney_u(const Sample& a, const Sample& b,
                                     Alternative alt = Alternative::TWO_SIDED, double alpha = 0.05) {
  a.require(1, "mann_whitney_u");
  b.require(1, "mann_whitney_u");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<double> pooled = a.values;
  pooled.insert(pooled.end(), b.values.begin(), b.values.end());
  const auto rank2 = detail::doubled_midranks(pooled);

  // Doubled U: 2U = 2R1 - n1(n1+1)
  const auto offset2 = static_cast<std::int64_t>(n1 * (n1 + 1));
  std::int64_t r1_2 = 0;
  for (std::size_t i = 0; i < n1; ++i) r1_2 += rank2[i];
  const std::int64_t u2 = r1_2 - offset2;
  const auto mid2 = static_cast<std::int64_t>(n1 * n2);  // 2 * (n1 n2 / 2)

  StatTestResult r;
  r.test_name = "Mann-Whitney U";
  r.statistic = static_cast<double>(u2) / 2.0;
  r.alpha = alpha;
  const bool ties = detail::tie_term(pooled) > 0.0;
  r.notes = std::string("alternative=") + std::string(to_string(alt)) + (ties ? ", ties=midranks" : "");

  if (n <= kMannWhitneyExactLimit) {
    r.method = Method::EXACT;
    std::uint64_t total = 0, hits = 0;
    const std::uint32_t limit = 1u << n;
    for (std::uint32_t mask = 0; mask < limit; ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
      std::int64_t s = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) s += rank2[i];
      const std::int64_t u = s - offset2;
      ++total;
      bool extreme = false;
      switch (alt) {
        case Alternative::TWO_SIDED: extreme = std::llabs(u - mid2) >= std::llabs(u2 - mid2); break;
        case Alternative::GREATER: extreme = u >= u2; break;
        case Alternative::LESS: extreme = u <= u2; break;
      }
      if (extreme) ++hits;
    }
    r.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return finish(r);
  }

  r.method = Method::APPROXIMATE;
  const double dn = static_cast<double>(n);
  const double mu = static_cast<double>(n1 * n2) / 2.0;
  const double var = static_cast<double>(n1 * n2) / 12.0 *
                     ((dn + 1.0) - detail::tie_term(pooled) / (dn * (dn - 1.0)));
  if (var <= 0.0) {
    r.p_value = 1.0;
    r.notes += ", all values tied";
    return finish(r);
  }
  const double sd = std::sqrt(var);
  const double u = r.statistic;
  switch (alt) {
    case Alternative::TWO_SIDED:
      r.p_value = 2.0 * normal_sf(std::max(0.0, std::abs(u - mu) - 0.5) / sd);
      break;
    case Alternative::GREATER: r.p_value = normal_sf((u - mu - 0.5) / sd); break;
    case Alternative::LESS: r.p_value = normal_cdf((u - mu + 0.5) / sd); break;
  }
  r.notes += ", continuity-corrected normal approximation";
  return finish(r);
}

/// Two-sample t-test: pooled variance (Student) or Welch-Satterthwaite.
inline StatTestResult t_test(const Sample& a, const Sample& b, bool equal_var, double alpha = 0.05) {
  a.require(2, "t_test");
  b.require(2, "t_test");
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double m1 = detail::mean(a.values), m2 = detail::mean(b.values);
  const double v1 = detail::sample_var(a.values), v2 = detail::sample_var(b.values);
  StatTestResult r;
  r.alpha = alpha;
  r.method = Method::APPROXIMATE;
  double se, df;
  if (equal_var) {
    r.test_name = "Student t";
    df = n1 + n2 - 2.0;
    const double sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / df;
    se = std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
  } else {
    r.test_name = "Welch t";
    const double q1 = v1 / n1, q2 = v2 / n2;
    se = std::sqrt(q1 + q2);
    df = (q1 + q2) * (q1 + q2) / (q1 * q1 / (n1 - 1.0) + q2 * q2 / (n2 - 1.0));
    if (!std::isfinite(df)) df = n1 + n2 - 2.0;
  }
  r.dof = {df};
  if (se == 0.0) {
    r.statistic = m1 == m2 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m1 - m2);
    r.p_value = m1 == m2 ? 1.0 : 0.0;
    r.notes = "zero standard error";
    return finish(r);
  }
  r.statistic = (m1 - m2) / se;
  r.p_value = t_two_sided(r.statistic, df);
  return finish(r);
}

}  // namespace ctcbench::stats
