// sqa/outliers.hpp  --  1-D DBSCAN and isolation forest.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_OUTLIERS_HPP_
#define SQA_OUTLIERS_HPP_

#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "sqa/common.hpp"

namespace sqa {

constexpr int kDbscanNoise = -1;

// Classic DBSCAN on the real line. A core point has at least min_pts
// neighbors within eps, counting itself. Points are visited and expanded in
// ascending index order, so ties break deterministically.
inline std::vector<int> dbscan_1d(const std::vector<double>& points, double eps, int min_pts) {
  require(!points.empty(), Errc::empty_input, "dbscan on empty point set");
  require(eps > 0.0, Errc::config, "dbscan eps must be positive");
  require(min_pts >= 1, Errc::config, "dbscan min_pts must be >= 1");

  const int n = static_cast<int>(points.size());
  const int undefined = -2;
  std::vector<int> labels(points.size(), undefined);

  auto neighbors_of = [&](int i) {
    std::vector<int> out;
    for (int j = 0; j < n; ++j)
      if (std::abs(points[i] - points[j]) <= eps) out.push_back(j);
    return out;
  };

  int cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] != undefined) continue;
    std::vector<int> nbrs = neighbors_of(i);
    if (static_cast<int>(nbrs.size()) < min_pts) {
      labels[i] = kDbscanNoise;
      continue;
    }
    labels[i] = cluster;
    std::deque<int> seeds(nbrs.begin(), nbrs.end());
    while (!seeds.empty()) {
      int j = seeds.front();
      seeds.pop_front();
      if (labels[j] == kDbscanNoise) labels[j] = cluster;  // border point
      if (labels[j] != undefined) continue;
      labels[j] = cluster;
      std::vector<int> jn = neighbors_of(j);
      if (static_cast<int>(jn.size()) >= min_pts)
        for (int k : jn) seeds.push_back(k);
    }
    ++cluster;
  }
  return labels;
}

namespace detail {

// Average unsuccessful-search path length in a BST of n nodes. Exact
// harmonic sums; the groups scored here are tiny and the asymptotic
// ln(n) + gamma form would be visibly off.
inline double avg_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  double h = 0.0;
  if (n - 1 <= 1000) {
    for (std::size_t i = 1; i <= n - 1; ++i) h += 1.0 / static_cast<double>(i);
  } else {
    h = std::log(static_cast<double>(n - 1)) + 0.5772156649015328606;
  }
  return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

struct IsoNode {
  double split = 0.0;
  int left = -1;
  int right = -1;
  std::size_t size = 0;  // leaf population
  bool leaf = false;
};

class IsoTree {
 public:
  IsoTree(const std::vector<double>& values, std::vector<std::size_t> idx, std::size_t height_limit,
          Rng& rng) {
    root_ = build(values, std::move(idx), 0, height_limit, rng);
  }

  double path_length(double x) const {
    std::size_t node = root_;
    double depth = 0.0;
    for (;;) {
      const IsoNode& nd = nodes_[node];
      if (nd.leaf) return depth + avg_path_length(nd.size);
      node = (x < nd.split) ? static_cast<std::size_t>(nd.left) : static_cast<std::size_t>(nd.right);
      depth += 1.0;
    }
  }

 private:
  std::size_t build(const std::vector<double>& values, std::vector<std::size_t> idx,
                    std::size_t depth, std::size_t height_limit, Rng& rng) {
    double lo = values[idx.front()], hi = values[idx.front()];
    for (std::size_t i : idx) {
      lo = std::min(lo, values[i]);
      hi = std::max(hi, values[i]);
    }
    if (idx.size() <= 1 || depth >= height_limit || lo == hi) {
      nodes_.push_back({0.0, -1, -1, idx.size(), true});
      return nodes_.size() - 1;
    }
    double split = lo + rng.uniform() * (hi - lo);
    if (split <= lo) split = std::nextafter(lo, hi);
    std::vector<std::size_t> left, right;
    for (std::size_t i : idx)
      (values[i] < split ? left : right).push_back(i);
    std::size_t l = build(values, std::move(left), depth + 1, height_limit, rng);
    std::size_t r = build(values, std::move(right), depth + 1, height_limit, rng);
    nodes_.push_back({split, static_cast<int>(l), static_cast<int>(r), 0, false});
    return nodes_.size() - 1;
  }

  std::vector<IsoNode> nodes_;
  std::size_t root_ = 0;
};

}  // namespace detail

// Isolation-forest anomaly scores, s(x) = 2^(-E[path]/c(subsample)),
// always in (0, 1). Each tree draws its own subsample without replacement
// and its split values uniformly within the node range; everything is
// seeded, so scores are reproducible.
inline std::vector<double> isolation_forest_1d(const std::vector<double>& points, int n_trees,
                                               std::size_t subsample, std::uint64_t seed) {
  require(points.size() >= 2, Errc::empty_input, "isolation forest needs at least 2 points");
  require(n_trees >= 1, Errc::config, "isolation forest needs at least 1 tree");

  const std::size_t n = points.size();
  const std::size_t psi = std::min(subsample == 0 ? n : subsample, n);
  const std::size_t height_limit =
      static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(psi, 2)))));

  std::vector<double> path_sum(n, 0.0);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  for (int t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> idx = all;
    if (psi < n) {
      // partial Fisher-Yates: first psi entries form the subsample
      for (std::size_t i = 0; i < psi; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
      }
      idx.resize(psi);
    }
    detail::IsoTree tree(points, std::move(idx), height_limit, rng);
    for (std::size_t i = 0; i < n; ++i) path_sum[i] += tree.path_length(points[i]);
  }

  const double c_psi = detail::avg_path_length(psi);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double e = path_sum[i] / static_cast<double>(n_trees);
    scores[i] = std::pow(2.0, -e / c_psi);
  }
  return scores;
}

}  // namespace sqa

#endif  // SQA_OUTLIERS_HPP_
