#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pcb::stats {

/// Both samples are constant and their means agree, so the statistic is 0/0.
class DegenerateTestError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct SampleSet {
    std::vector<double> values;
    std::string label;
};

enum class TTestKind { Welch, Student };

struct TTestResult {
    double t_statistic = 0.0;
    double degrees_of_freedom = 0.0;
    double p_value = 1.0;  // two-tailed
    double alpha = 0.05;
    bool reject_h0 = false;
};

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double regularized_beta(double a, double b, double x);

/// CDF of Student's t distribution with `df` degrees of freedom (df may be fractional).
double t_cdf(double x, double df);

/// Two-sided p-value P(|T| >= |t|). Computed directly so that tiny p-values keep
/// their relative precision instead of being lost in 1 - cdf.
double t_two_sided_p(double t, double df);

/// Two-sample t-test. Welch by default; Student pools the variances.
/// Both samples need at least two finite values. If both variances are zero
/// and the means differ, t is infinite, p is 0 and df falls back to the pooled value.
TTestResult welch_t_test(const SampleSet& a, const SampleSet& b, double alpha = 0.05, TTestKind kind = TTestKind::Welch);

}  // namespace pcb::stats
