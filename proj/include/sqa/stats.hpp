// sqa/stats.hpp  --  small statistics kit: moments, Student-t, normal.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_STATS_HPP_
#define SQA_STATS_HPP_

#include <cmath>
#include <limits>
#include <vector>

#include "sqa/common.hpp"

namespace sqa {

inline double mean_of(const std::vector<double>& v) {
  require(!v.empty(), Errc::empty_input, "mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_variance(const std::vector<double>& v) {
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

inline double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

namespace detail {

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-14;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    double m2 = 2.0 * m;
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
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// Standard normal CDF and its inverse (bisection on erfc; plenty for p-values).
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488016887242097); }

inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, Errc::range, "normal quantile needs p in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Student-t CDF via the incomplete beta function.
inline double student_t_cdf(double t, double df) {
  require(df > 0.0, Errc::range, "degrees of freedom must be positive");
  if (!std::isfinite(t)) return t > 0 ? 1.0 : 0.0;
  double x = df / (df + t * t);
  double p = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - p : p;
}

// Upper-tail quantile of Student's t. Degenerates to the normal quantile for
// very large df (covers the df = infinity table row).
inline double student_t_quantile(double p, double df) {
  require(p > 0.0 && p < 1.0, Errc::range, "t quantile needs p in (0,1)");
  require(df > 0.0, Errc::range, "degrees of freedom must be positive");
  if (!std::isfinite(df) || df > 1e7) return normal_quantile(p);
  double lo = -1e8, hi = 1e8;
  for (int i = 0; i < 300; ++i) {
    double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Half-width of the 95% confidence interval of a mean from n observations.
inline double ci95_halfwidth(double sample_std, std::size_t n) {
  if (n <= 1) return 0.0;
  double t = student_t_quantile(0.975, static_cast<double>(n - 1));
  return t * sample_std / std::sqrt(static_cast<double>(n));
}

}  // namespace sqa

#endif  // SQA_STATS_HPP_
