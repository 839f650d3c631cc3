#pragma once

#include <span>
#include <string>
#include <vector>

namespace koopshare::stats {

struct GroupData {
  std::string label;
  std::vector<double> values;
};

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// Upper tail P(F > f) for the F(d1, d2) distribution.
double f_survival(double f, double d1, double d2);
// Two-sided P(|T| > |t|) for Student's t with df degrees of freedom.
double t_two_sided(double t, double df);

struct AnovaResult {
  double F = 0.0;
  int df_between = 0;
  int df_within = 0;
  double p = 1.0;
};

AnovaResult anova_oneway(std::span<const GroupData> groups);

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
};

// Pooled-variance (Student) two-sample t-test.
TTestResult t_test_two_sample(const GroupData& a, const GroupData& b);

// Holm step-down. true = reject. Decisions are in input order.
std::vector<bool> holm_bonferroni(std::span<const double> p_values, double alpha);

}  // namespace koopshare::stats
