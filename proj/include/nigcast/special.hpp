#pragma once

namespace nigcast::special {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEulerGamma = 0.57721566490153286061;

/// Digamma for x > 0: upward recurrence to x >= 10, then the asymptotic series.
double digamma(double x);

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

double student_t_cdf(double t, double df);
/// log density of the location-scale Student-t.
double student_t_logpdf(double y, double loc, double scale, double df);
/// Value t with P(T > t) = upper_tail, bisection on the CDF to 1e-12 absolute.
double student_t_upper_quantile(double df, double upper_tail);

double normal_pdf(double z);
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace nigcast::special
