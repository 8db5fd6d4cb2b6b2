#pragma once

// Student t distribution by direct numerical integration of its density.
// Shares no code with the library's continued-fraction evaluation.

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

namespace oracle {

inline long double t_density(long double x, long double df) {
    const long double log_norm =
        std::lgamma((df + 1.0L) / 2.0L) - std::lgamma(df / 2.0L) - 0.5L * std::log(df * 3.14159265358979323846264338327950288L);
    return std::exp(log_norm - (df + 1.0L) / 2.0L * std::log1p(x * x / df));
}

/// P(T > x) for x >= 0, integrated over [x, inf).
inline long double t_upper_tail(long double x, long double df) {
    // Double-exponential rule on [x, inf); copes with the heavy tails of small df.
    boost::math::quadrature::exp_sinh<long double> rule;
    auto f = [df, x](long double u) { return t_density(x + u, df); };
    return rule.integrate(f, 1e-18L);
}

inline long double t_cdf(long double x, long double df) {
    if (x == 0) return 0.5L;
    const long double tail = t_upper_tail(std::fabs(x), df);
    return x > 0 ? 1.0L - tail : tail;
}

struct TTest {
    long double t, df, p;
};

/// Two-sided test computed straight from the textbook formulas.
inline TTest t_test(const std::vector<double>& a, const std::vector<double>& b, bool pooled = false) {
    auto moments = [](const std::vector<double>& v) {
        long double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<long double>(v.size());
        long double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair{mean, ss / static_cast<long double>(v.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const long double na = static_cast<long double>(a.size()), nb = static_cast<long double>(b.size());
    TTest r{};
    if (pooled) {
        const long double sp = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2);
        r.t = (ma - mb) / std::sqrt(sp * (1 / na + 1 / nb));
        r.df = na + nb - 2;
    } else {
        const long double qa = va / na, qb = vb / nb;
        r.t = (ma - mb) / std::sqrt(qa + qb);
        r.df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1) + qb * qb / (nb - 1));
    }
    r.p = 2.0L * t_upper_tail(std::fabs(r.t), r.df);
    return r;
}

}  // namespace oracle
