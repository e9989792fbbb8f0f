// sqa/metrics.hpp  --  accuracy metrics, the third-order mapping, and
// paired significance tests.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_METRICS_HPP_
#define SQA_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "sqa/common.hpp"
#include "sqa/stats.hpp"

namespace sqa {

namespace detail {

inline void check_paired(const std::vector<double>& a, const std::vector<double>& b) {
  require(!a.empty(), Errc::empty_input, "metric input is empty");
  require(a.size() == b.size(), Errc::dimension, "metric inputs differ in length");
}

}  // namespace detail

inline double mae(const std::vector<double>& preds, const std::vector<double>& targets) {
  detail::check_paired(preds, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

inline double rmse(const std::vector<double>& preds, const std::vector<double>& targets) {
  detail::check_paired(preds, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(preds.size()));
}

// Epsilon-insensitive RMSE. Each residual is reduced by the target's 95%
// confidence half-width (floored at zero) before squaring, and the sum is
// divided by N - d where d counts mapping degrees of freedom.
inline double rmse_star(const std::vector<double>& preds, const std::vector<double>& targets,
                        const std::vector<double>& ci95, int d) {
  detail::check_paired(preds, targets);
  require(ci95.size() == preds.size(), Errc::dimension, "ci95 length mismatch");
  require(d >= 0, Errc::config, "degrees of freedom must be >= 0");
  require(preds.size() > static_cast<std::size_t>(d), Errc::range,
          "need more than d samples for rmse*");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double e = std::max(0.0, std::abs(targets[i] - preds[i]) - ci95[i]);
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(preds.size() - static_cast<std::size_t>(d)));
}

inline double pcc(const std::vector<double>& a, const std::vector<double>& b) {
  detail::check_paired(a, b);
  require(a.size() >= 2, Errc::range, "need at least 2 samples for correlation");
  double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, Errc::singular, "correlation of a constant sequence");
  return sab / std::sqrt(saa * sbb);
}

// Ranks with ties resolved to the average rank of the tied run.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double srcc(const std::vector<double>& a, const std::vector<double>& b) {
  detail::check_paired(a, b);
  return pcc(average_ranks(a), average_ranks(b));
}

// ---- third-order polynomial mapping ----

struct Poly3Map {
  std::array<double, 4> coeff{0.0, 0.0, 0.0, 0.0};  // a0 + a1 x + a2 x^2 + a3 x^3
  double x_lo = 0.0;
  double x_hi = 0.0;
  bool monotone_increasing = false;

  double operator()(double x) const {
    return ((coeff[3] * x + coeff[2]) * x + coeff[1]) * x + coeff[0];
  }
};

// Least-squares cubic fit of targets on preds, used to remove systematic
// offsets before computing error metrics (the mapping adds d = 4 degrees of
// freedom to rmse*).
inline Poly3Map fit_poly3_map(const std::vector<double>& preds,
                              const std::vector<double>& targets) {
  detail::check_paired(preds, targets);
  require(preds.size() >= 4, Errc::range, "need at least 4 points for a cubic fit");

  const std::size_t n = preds.size();
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 4);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double x = preds[i];
    A(static_cast<Eigen::Index>(i), 0) = 1.0;
    A(static_cast<Eigen::Index>(i), 1) = x;
    A(static_cast<Eigen::Index>(i), 2) = x * x;
    A(static_cast<Eigen::Index>(i), 3) = x * x * x;
    y(static_cast<Eigen::Index>(i)) = targets[i];
  }

  // Column scaling keeps the decomposition well conditioned when the
  // prediction range is wide.
  Eigen::Vector4d scale;
  for (int c = 0; c < 4; ++c) {
    double m = A.col(c).cwiseAbs().maxCoeff();
    scale(c) = (m > 0.0) ? m : 1.0;
  }
  Eigen::MatrixXd As = A * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(As);
  require(qr.rank() == 4, Errc::singular, "cubic fit is rank deficient");
  Eigen::Vector4d beta = scale.cwiseInverse().asDiagonal() * qr.solve(y);

  Poly3Map map;
  for (int c = 0; c < 4; ++c) map.coeff[static_cast<std::size_t>(c)] = beta(c);
  map.x_lo = *std::min_element(preds.begin(), preds.end());
  map.x_hi = *std::max_element(preds.begin(), preds.end());

  // Monotone over the fitted range iff the derivative stays nonnegative at
  // the endpoints and at any interior critical point of the derivative.
  auto deriv = [&](double x) {
    return map.coeff[1] + 2.0 * map.coeff[2] * x + 3.0 * map.coeff[3] * x * x;
  };
  bool mono = deriv(map.x_lo) >= -1e-12 && deriv(map.x_hi) >= -1e-12;
  if (map.coeff[3] != 0.0) {
    double xc = -map.coeff[2] / (3.0 * map.coeff[3]);
    if (xc > map.x_lo && xc < map.x_hi) mono = mono && deriv(xc) >= -1e-12;
  }
  map.monotone_increasing = mono;
  return map;
}

inline std::vector<double> apply_map(const Poly3Map& map, const std::vector<double>& preds) {
  std::vector<double> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) out[i] = map(preds[i]);
  return out;
}

// ---- paired significance tests ----

struct SignificanceResult {
  std::size_t n = 0;
  double t_stat = 0.0;
  double t_p = 1.0;
  double wilcoxon_w = 0.0;
  double wilcoxon_p = 1.0;
};

// Paired two-sided tests on per-item losses of two systems. The Wilcoxon
// signed-rank statistic uses the normal approximation with tie correction
// and a 0.5 continuity correction.
inline SignificanceResult significance_test(const std::vector<double>& loss_a,
                                            const std::vector<double>& loss_b) {
  detail::check_paired(loss_a, loss_b);
  require(loss_a.size() >= 2, Errc::range, "need at least 2 pairs");

  const std::size_t n = loss_a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = loss_a[i] - loss_b[i];

  SignificanceResult res;
  res.n = n;

  double md = mean_of(d);
  double sd = sample_stddev(d);
  if (sd == 0.0) {
    res.t_stat = (md == 0.0) ? 0.0 : std::copysign(HUGE_VAL, md);
    res.t_p = (md == 0.0) ? 1.0 : 0.0;
  } else {
    res.t_stat = md / (sd / std::sqrt(static_cast<double>(n)));
    res.t_p = 2.0 * (1.0 - student_t_cdf(std::abs(res.t_stat), static_cast<double>(n - 1)));
    res.t_p = std::clamp(res.t_p, 0.0, 1.0);
  }

  std::vector<double> nz;
  for (double x : d)
    if (x != 0.0) nz.push_back(x);
  if (nz.empty()) {
    res.wilcoxon_w = 0.0;
    res.wilcoxon_p = 1.0;
    return res;
  }
  std::vector<double> mags(nz.size());
  for (std::size_t i = 0; i < nz.size(); ++i) mags[i] = std::abs(nz[i]);
  std::vector<double> ranks = average_ranks(mags);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < nz.size(); ++i)
    if (nz[i] > 0.0) w_plus += ranks[i];
  res.wilcoxon_w = w_plus;

  double m = static_cast<double>(nz.size());
  double mean_w = m * (m + 1.0) / 4.0;
  double var_w = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0;
  // Tie correction: each run of t equal magnitudes removes (t^3 - t)/48.
  {
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      double t = static_cast<double>(j - i + 1);
      var_w -= (t * t * t - t) / 48.0;
      i = j + 1;
    }
  }
  if (var_w <= 0.0) {
    res.wilcoxon_p = 1.0;
    return res;
  }
  double z = w_plus - mean_w;
  if (z > 0.5)
    z -= 0.5;
  else if (z < -0.5)
    z += 0.5;
  else
    z = 0.0;
  z /= std::sqrt(var_w);
  res.wilcoxon_p = std::clamp(2.0 * (1.0 - normal_cdf(std::abs(z))), 0.0, 1.0);
  return res;
}

}  // namespace sqa

#endif  // SQA_METRICS_HPP_
