#pragma once

#include <cmath>
#include <span>

#include "qxpand/error.hpp"

namespace qx {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double incbeta_cf(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    constexpr int max_iter = 300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw data_error("regularized_incomplete_beta: a, b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw data_error("regularized_incomplete_beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - log_beta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::incbeta_cf(x, a, b) / a;
    return 1.0 - front * detail::incbeta_cf(1.0 - x, b, a) / b;
}

inline double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw data_error("student_t_cdf: df must be positive");
    const double x = df / (df + t * t);
    const double half_tail = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

// Two-sided tail mass: P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw data_error("student_t_two_sided_p: df must be positive");
    if (t == 0.0) return 1.0;
    return regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5);
}

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
};

// Paired Student t-test on per-query scores: d = a - b,
// t = mean(d) * sqrt(n) / sd(d) with the n-1 denominator.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw data_error("paired_ttest: unequal lengths");
    const std::size_t n = a.size();
    if (n < 2) throw data_error("paired_ttest: need at least 2 paired observations");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    TTestResult out;
    out.df = static_cast<double>(n - 1);
    if (sd == 0.0) {
        if (mean == 0.0) return out;  // t = 0, p = 1
        throw data_error("paired_ttest: zero variance with nonzero mean difference");
    }
    out.t = mean * std::sqrt(static_cast<double>(n)) / sd;
    out.p = student_t_two_sided_p(out.t, out.df);
    return out;
}

}  // namespace qx
