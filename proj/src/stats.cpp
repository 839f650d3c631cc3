#include "koopshare/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "koopshare/error.hpp"

namespace koopshare::stats {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int max_iter = 10000;
  constexpr double eps = 1e-16;
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw DataError("incomplete_beta: continued fraction failed to converge");
}

void check_group(const GroupData& g) {
  if (g.values.size() < 2) throw InsufficientData("group '" + g.label + "' needs at least 2 values");
  for (double v : g.values) {
    if (!std::isfinite(v)) throw InvalidInput("group '" + g.label + "' has a non-finite value");
  }
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sum_sq_dev(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidInput("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

double t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

AnovaResult anova_oneway(std::span<const GroupData> groups) {
  if (groups.size() < 2) throw InsufficientData("anova_oneway needs at least 2 groups");
  double grand = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    check_group(g);
    grand += std::accumulate(g.values.begin(), g.values.end(), 0.0);
    n += g.values.size();
  }
  grand /= static_cast<double>(n);

  double ss_between = 0.0, ss_within = 0.0;
  for (const auto& g : groups) {
    const double m = mean_of(g.values);
    ss_between += static_cast<double>(g.values.size()) * (m - grand) * (m - grand);
    ss_within += sum_sq_dev(g.values, m);
  }
  AnovaResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(n - groups.size());
  if (ss_within == 0.0) throw DegenerateData("anova_oneway: zero within-group variance in every group");
  const double ms_between = ss_between / r.df_between;
  const double ms_within = ss_within / r.df_within;
  r.F = ms_between / ms_within;
  r.p = f_survival(r.F, r.df_between, r.df_within);
  return r;
}

TTestResult t_test_two_sample(const GroupData& a, const GroupData& b) {
  check_group(a);
  check_group(b);
  const double na = static_cast<double>(a.values.size());
  const double nb = static_cast<double>(b.values.size());
  const double ma = mean_of(a.values), mb = mean_of(b.values);
  TTestResult r;
  r.df = static_cast<int>(na + nb) - 2;
  const double pooled = (sum_sq_dev(a.values, ma) + sum_sq_dev(b.values, mb)) / r.df;
  if (pooled == 0.0) throw DegenerateData("t_test_two_sample: zero pooled variance");
  r.t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  r.p = t_two_sided(r.t, r.df);
  return r;
}

std::vector<bool> holm_bonferroni(std::span<const double> p_values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("holm_bonferroni: alpha must lie in (0, 1)");
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("holm_bonferroni: p-values must lie in [0, 1]");
  }
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  std::vector<bool> reject(m, false);
  for (std::size_t rank = 0; rank < m; ++rank) {
    if (p_values[order[rank]] > alpha / static_cast<double>(m - rank)) break;
    reject[order[rank]] = true;
  }
  return reject;
}

}  // namespace koopshare::stats
