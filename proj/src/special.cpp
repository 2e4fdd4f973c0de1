#include "nigcast/special.hpp"

#include "nigcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nigcast::special {

double digamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw ContractError("digamma: argument must be positive and finite");
    }
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Bernoulli-number series: 1/(12x^2) - 1/(120x^4) + 1/(252x^6) - 1/(240x^8) + 1/(132x^10)
    const double series =
        inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    return result + std::log(x) - 0.5 * inv - series;
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete_beta: a and b must be positive");
    if (x < 0.0 || x > 1.0) throw ContractError("incomplete_beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw ContractError("student_t_cdf: df must be positive");
    if (t == 0.0) return 0.5;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_logpdf(double y, double loc, double scale, double df) {
    const double z = (y - loc) / scale;
    return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * kPi) - std::log(scale) -
           0.5 * (df + 1.0) * std::log1p(z * z / df);
}

double student_t_upper_quantile(double df, double upper_tail) {
    if (!(df > 0.0)) throw ContractError("student_t_upper_quantile: df must be positive");
    if (!(upper_tail > 0.0 && upper_tail < 1.0)) {
        throw ContractError("student_t_upper_quantile: tail probability must lie in (0, 1)");
    }
    if (upper_tail == 0.5) return 0.0;
    if (upper_tail > 0.5) return -student_t_upper_quantile(df, 1.0 - upper_tail);

    // The survival function for t > 0 is 0.5 * I_{df/(df+t^2)}(df/2, 1/2).
    auto survival = [df](double t) { return 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t)); };
    double lo = 0.0;
    double hi = 1.0;
    while (survival(hi) > upper_tail) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) return std::numeric_limits<double>::infinity();
    }
    for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (survival(mid) > upper_tail) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish to full precision: d survival / dt = -pdf.
    double t = 0.5 * (lo + hi);
    for (int i = 0; i < 3; ++i) {
        const double step = (survival(t) - upper_tail) / std::exp(student_t_logpdf(t, 0.0, 1.0, df));
        if (!std::isfinite(step)) break;
        t += step;
    }
    return t;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ContractError("normal_quantile: p must lie in (0, 1)");
    double lo = -40.0;
    double hi = 40.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace nigcast::special
