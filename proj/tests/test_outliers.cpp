// tests/test_outliers.cpp  --  1-D DBSCAN and isolation forest.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sqa/common.hpp"
#include "sqa/outliers.hpp"
#include "test_support.hpp"

using testsup::thrown_code;

namespace {

// Independent check of the DBSCAN contract: every cluster member is a core
// point or within eps of a core point of the same cluster, and every noise
// point is neither.
void check_dbscan_contract(const std::vector<double>& pts, const std::vector<int>& labels,
                           double eps, int min_pts) {
  const std::size_t n = pts.size();
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    int cnt = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(pts[i] - pts[j]) <= eps) ++cnt;
    core[i] = cnt >= min_pts;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == sqa::kDbscanNoise) {
      CHECK_FALSE(core[i]);
      for (std::size_t j = 0; j < n; ++j)
        if (core[j]) CHECK(std::abs(pts[i] - pts[j]) > eps);
    } else {
      bool reachable = core[i];
      for (std::size_t j = 0; j < n && !reachable; ++j)
        reachable = core[j] && labels[j] == labels[i] && std::abs(pts[i] - pts[j]) <= eps;
      CHECK(reachable);
    }
  }
}

double harmonic(std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  return h;
}

// Average BST unsuccessful-search depth, recomputed from scratch.
double c_of(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  return 2.0 * harmonic(n - 1) - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("dbscan labels a tight cluster and a far point") {
  std::vector<double> pts = {0.0, 0.1, 0.2, 5.0};
  auto labels = sqa::dbscan_1d(pts, 0.3, 3);
  REQUIRE(labels.size() == 4);
  CHECK(labels[0] == 0);
  CHECK(labels[1] == 0);
  CHECK(labels[2] == 0);
  CHECK(labels[3] == sqa::kDbscanNoise);
  check_dbscan_contract(pts, labels, 0.3, 3);
}

TEST_CASE("dbscan separates two clusters") {
  std::vector<double> pts = {0.0, 0.1, 0.2, 10.0, 10.1, 10.2};
  auto labels = sqa::dbscan_1d(pts, 0.15, 2);
  CHECK(labels[0] == labels[1]);
  CHECK(labels[1] == labels[2]);
  CHECK(labels[3] == labels[4]);
  CHECK(labels[4] == labels[5]);
  CHECK(labels[0] != labels[3]);
  CHECK(labels[0] != sqa::kDbscanNoise);
  CHECK(labels[3] != sqa::kDbscanNoise);
  check_dbscan_contract(pts, labels, 0.15, 2);
}

TEST_CASE("dbscan adopts border points into the cluster") {
  // 1.0 has only two neighbors so it is not core, but it sits within eps of
  // the core point 0.75; 1.3 is reachable from nothing.
  std::vector<double> pts = {0.0, 0.25, 0.5, 0.75, 1.0, 1.3};
  auto labels = sqa::dbscan_1d(pts, 0.26, 3);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) CHECK(labels[i] == 0);
  CHECK(labels[5] == sqa::kDbscanNoise);
  check_dbscan_contract(pts, labels, 0.26, 3);
}

TEST_CASE("dbscan puts identical values in one cluster") {
  std::vector<double> pts(5, 42.0);
  auto labels = sqa::dbscan_1d(pts, 0.5, 3);
  for (int l : labels) CHECK(l == 0);
}

TEST_CASE("dbscan marks everything noise when min_pts is unreachable") {
  std::vector<double> pts = {0.0, 1.0, 2.0, 3.0};
  auto labels = sqa::dbscan_1d(pts, 0.4, 2);
  for (int l : labels) CHECK(l == sqa::kDbscanNoise);
}

TEST_CASE("dbscan satisfies its contract on random data") {
  sqa::Rng rng(314);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> pts(25);
    for (auto& p : pts) p = rng.uniform(0.0, 10.0);
    double eps = rng.uniform(0.2, 1.5);
    int min_pts = 2 + static_cast<int>(rng.below(4));
    auto labels = sqa::dbscan_1d(pts, eps, min_pts);
    check_dbscan_contract(pts, labels, eps, min_pts);
  }
}

TEST_CASE("dbscan validates its arguments") {
  CHECK(thrown_code([] { sqa::dbscan_1d({}, 1.0, 3); }) == sqa::Errc::empty_input);
  CHECK(thrown_code([] { sqa::dbscan_1d({1.0}, 0.0, 3); }) == sqa::Errc::config);
  CHECK(thrown_code([] { sqa::dbscan_1d({1.0}, 1.0, 0); }) == sqa::Errc::config);
}

TEST_CASE("isolation forest matches the closed form for four ones and a ten") {
  // With the full sample in every tree, any root split in (1, 10) sends the
  // four 1s into a constant leaf and isolates the 10 at depth 1, so the
  // expected path lengths do not depend on the seed at all.
  std::vector<double> pts = {1.0, 1.0, 1.0, 1.0, 10.0};
  const double c5 = c_of(5);
  CHECK(c5 == Catch::Approx(2.0 * (1.0 + 0.5 + 1.0 / 3.0 + 0.25) - 8.0 / 5.0).epsilon(1e-14));

  const double expect_outlier = std::pow(2.0, -1.0 / c5);
  const double expect_inlier = std::pow(2.0, -(1.0 + c_of(4)) / c5);

  for (std::uint64_t seed : {1ULL, 77ULL, 4096ULL}) {
    auto scores = sqa::isolation_forest_1d(pts, 50, 0, seed);
    REQUIRE(scores.size() == 5);
    for (int i = 0; i < 4; ++i) CHECK(scores[i] == Catch::Approx(expect_inlier).epsilon(1e-12));
    CHECK(scores[4] == Catch::Approx(expect_outlier).epsilon(1e-12));
    CHECK(scores[4] > scores[0]);
  }
}

TEST_CASE("isolation forest scores stay in the open unit interval") {
  sqa::Rng rng(99);
  std::vector<double> pts(40);
  for (auto& p : pts) p = rng.normal(50.0, 10.0);
  pts.push_back(200.0);

  auto scores = sqa::isolation_forest_1d(pts, 100, 16, 5);
  for (double s : scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }

  // The planted outlier scores above every inlier.
  double max_inlier = 0.0;
  for (std::size_t i = 0; i + 1 < scores.size(); ++i) max_inlier = std::max(max_inlier, scores[i]);
  CHECK(scores.back() > max_inlier);
  CHECK(scores.back() > 0.6);
}

TEST_CASE("isolation forest is deterministic in its seed") {
  sqa::Rng rng(2024);
  std::vector<double> pts(30);
  for (auto& p : pts) p = rng.uniform(0.0, 100.0);

  auto a = sqa::isolation_forest_1d(pts, 64, 8, 123);
  auto b = sqa::isolation_forest_1d(pts, 64, 8, 123);
  auto c = sqa::isolation_forest_1d(pts, 64, 8, 124);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("isolation forest validates its arguments") {
  CHECK(thrown_code([] { sqa::isolation_forest_1d({1.0}, 10, 0, 1); }) == sqa::Errc::empty_input);
  CHECK(thrown_code([] { sqa::isolation_forest_1d({1.0, 2.0}, 0, 0, 1); }) == sqa::Errc::config);
}

TEST_CASE("identical points all score the same") {
  std::vector<double> pts(8, 3.5);
  auto scores = sqa::isolation_forest_1d(pts, 32, 0, 9);
  // Every tree is a single constant leaf of size 8, so E[path] = c(8) and the
  // score collapses to one half.
  for (double s : scores) CHECK(s == Catch::Approx(0.5).epsilon(1e-12));
}
