#include "pcb/stats/ttest.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pcb/error.hpp"

namespace pcb::stats {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kEps = 1e-16;
constexpr int kMaxIterations = 10000;

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_fraction(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double md = m, m2 = 2.0 * m;
        double aa = md * (b - md) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + md) * (qab + md) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error(fmt::format("incomplete beta did not converge for a={}, b={}, x={}", a, b, x));
}

// I_x(a, b) with y = 1 - x supplied by the caller, which often knows it more
// accurately than the subtraction would give.
double ibeta(double a, double b, double x, double y) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log(y) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
    return 1.0 - front * beta_fraction(b, a, y) / b;
}

void check_df(double df) {
    if (!(df > 0.0)) throw ValidationError(fmt::format("degrees of freedom must be positive, got {}", df));
}

struct Moments {
    double n, mean, var;
};

Moments moments(const SampleSet& s, const char* which) {
    if (s.values.size() < 2)
        throw ValidationError(fmt::format("sample {} '{}' needs at least 2 values, has {}", which, s.label, s.values.size()));
    double sum = 0.0;
    for (double v : s.values) {
        if (!std::isfinite(v)) throw ValidationError(fmt::format("sample {} '{}' contains a non-finite value", which, s.label));
        sum += v;
    }
    const double n = static_cast<double>(s.values.size());
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : s.values) ss += (v - mean) * (v - mean);
    return {n, mean, ss / (n - 1.0)};
}

}  // namespace

double regularized_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError(fmt::format("incomplete beta argument {} outside [0, 1]", x));
    return ibeta(a, b, x, 1.0 - x);
}

double t_two_sided_p(double t, double df) {
    check_df(df);
    if (std::isnan(t)) throw ValidationError("t statistic is NaN");
    if (t == 0.0) return 1.0;
    if (std::isinf(t)) return 0.0;
    // Written as ratios so that t * t overflowing to inf still gives x = 0, y = 1.
    const double r = t * t / df;
    return ibeta(df / 2.0, 0.5, 1.0 / (1.0 + r), 1.0 / (1.0 + 1.0 / r));
}

double t_cdf(double x, double df) {
    check_df(df);
    if (x == 0.0) return 0.5;
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    const double half_tail = 0.5 * t_two_sided_p(x, df);
    return x > 0 ? 1.0 - half_tail : half_tail;
}

TTestResult welch_t_test(const SampleSet& a, const SampleSet& b, double alpha, TTestKind kind) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError(fmt::format("alpha must lie in (0, 1), got {}", alpha));
    const Moments ma = moments(a, "a"), mb = moments(b, "b");

    TTestResult r;
    r.alpha = alpha;
    const double pooled_df = ma.n + mb.n - 2.0;
    double se2 = 0.0;
    if (kind == TTestKind::Student) {
        const double sp = ((ma.n - 1.0) * ma.var + (mb.n - 1.0) * mb.var) / pooled_df;
        se2 = sp * (1.0 / ma.n + 1.0 / mb.n);
        r.degrees_of_freedom = pooled_df;
    } else {
        const double qa = ma.var / ma.n, qb = mb.var / mb.n;
        se2 = qa + qb;
        r.degrees_of_freedom = se2 > 0.0 ? se2 * se2 / (qa * qa / (ma.n - 1.0) + qb * qb / (mb.n - 1.0)) : pooled_df;
    }

    const double diff = ma.mean - mb.mean;
    if (se2 == 0.0) {
        if (diff == 0.0)
            throw DegenerateTestError(
                fmt::format("samples '{}' and '{}' are constant with equal means; the t statistic is undefined", a.label, b.label));
        r.t_statistic = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
    } else {
        r.t_statistic = diff / std::sqrt(se2);
        r.p_value = t_two_sided_p(r.t_statistic, r.degrees_of_freedom);
    }
    r.reject_h0 = r.p_value < alpha;
    return r;
}

}  // namespace pcb::stats
