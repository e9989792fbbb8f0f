// tests/test_gradcheck.cpp  --  analytic gradients vs central differences.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqa/lstm.hpp"
#include "sqa/model.hpp"
#include "sqa/network.hpp"
#include "sqa/train.hpp"

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;
constexpr double kFloor = 1e-3;

double rel_err(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), kFloor});
  return std::abs(analytic - numeric) / denom;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, sqa::Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal(0.0, 1.0);
  return m;
}

sqa::ModelConfig mini_config(bool pyramid, bool attention) {
  sqa::ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.base_hidden = 2;
  cfg.pyramid_hidden = {2};
  cfg.reduction_factor = 2;
  cfg.use_pyramid = pyramid;
  cfg.use_attention = attention;
  cfg.attention_dim = 2;
  cfg.fc_hidden = 2;
  cfg.seed = 99;
  return cfg;
}

std::vector<sqa::TrainExample> mini_batch(int input_dim, sqa::Rng& rng) {
  std::vector<sqa::TrainExample> set(2);
  set[0].id = "a";
  set[0].X = random_matrix(input_dim, 5, rng);
  set[0].target = 7.0;
  set[1].id = "b";
  set[1].X = random_matrix(input_dim, 4, rng);
  set[1].target = 2.5;
  return set;
}

// Checks every coordinate of the flattened gradient against a central
// difference of the batch loss.
void check_model_gradients(const sqa::ModelConfig& cfg) {
  sqa::Rng rng(cfg.seed ^ 0x9e3779b9);
  sqa::ModelParams p = sqa::init_params(cfg);
  auto set = mini_batch(cfg.input_dim, rng);

  sqa::ModelGrads g = sqa::zero_grads_like(p);
  sqa::dataset_loss_and_grads(cfg, p, set, g);
  std::vector<double> analytic = sqa::flatten(g);

  std::vector<double> flat = sqa::flatten(p);
  REQUIRE(analytic.size() == flat.size());

  sqa::ModelParams probe = sqa::init_params(cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    double keep = flat[i];
    flat[i] = keep + kStep;
    sqa::unflatten(flat, probe);
    double lp = sqa::dataset_loss(cfg, probe, set);
    flat[i] = keep - kStep;
    sqa::unflatten(flat, probe);
    double lm = sqa::dataset_loss(cfg, probe, set);
    flat[i] = keep;
    double numeric = (lp - lm) / (2.0 * kStep);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  INFO("worst relative error " << worst << " over " << flat.size() << " parameters");
  CHECK(worst < kTol);
}

}  // namespace

TEST_CASE("single-direction lstm gradients match finite differences") {
  sqa::Rng rng(7);
  const int I = 3, H = 2, T = 4;
  sqa::LstmParams p;
  p.W = random_matrix(4 * H, I + H, rng) * 0.5;
  p.b = random_matrix(4 * H, 1, rng).col(0) * 0.2;
  Eigen::MatrixXd X = random_matrix(I, T, rng);
  Eigen::MatrixXd S = random_matrix(H, T, rng);  // loss = sum(S .* H)

  auto loss = [&](const sqa::LstmParams& q, const Eigen::MatrixXd& Xq) {
    sqa::LstmCache cache;
    return (sqa::lstm_forward(q, Xq, cache).array() * S.array()).sum();
  };

  sqa::LstmCache cache;
  sqa::lstm_forward(p, X, cache);
  sqa::LstmParams grads;
  grads.W = Eigen::MatrixXd::Zero(4 * H, I + H);
  grads.b = Eigen::VectorXd::Zero(4 * H);
  Eigen::MatrixXd dX = sqa::lstm_backward(p, cache, S, grads);

  double worst = 0.0;
  auto probe = [&](double& slot, double analytic) {
    double keep = slot;
    slot = keep + kStep;
    double lp = loss(p, X);
    slot = keep - kStep;
    double lm = loss(p, X);
    slot = keep;
    worst = std::max(worst, rel_err(analytic, (lp - lm) / (2.0 * kStep)));
  };
  for (Eigen::Index i = 0; i < p.W.rows(); ++i)
    for (Eigen::Index j = 0; j < p.W.cols(); ++j) probe(p.W(i, j), grads.W(i, j));
  for (Eigen::Index i = 0; i < p.b.size(); ++i) probe(p.b(i), grads.b(i));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) probe(X(i, j), dX(i, j));
  INFO("worst relative error " << worst);
  CHECK(worst < kTol);
}

TEST_CASE("bidirectional lstm gradients match finite differences") {
  sqa::Rng rng(19);
  const int I = 2, H = 2, T = 5;
  sqa::BlstmParams p;
  p.fwd.W = random_matrix(4 * H, I + H, rng) * 0.5;
  p.fwd.b = random_matrix(4 * H, 1, rng).col(0) * 0.2;
  p.bwd.W = random_matrix(4 * H, I + H, rng) * 0.5;
  p.bwd.b = random_matrix(4 * H, 1, rng).col(0) * 0.2;
  Eigen::MatrixXd X = random_matrix(I, T, rng);
  Eigen::MatrixXd S = random_matrix(2 * H, T, rng);

  auto loss = [&]() {
    sqa::BlstmCache cache;
    return (sqa::blstm_forward(p, X, cache).array() * S.array()).sum();
  };

  sqa::BlstmCache cache;
  sqa::blstm_forward(p, X, cache);
  sqa::BlstmParams grads;
  grads.fwd.W = Eigen::MatrixXd::Zero(4 * H, I + H);
  grads.fwd.b = Eigen::VectorXd::Zero(4 * H);
  grads.bwd.W = grads.fwd.W;
  grads.bwd.b = grads.fwd.b;
  Eigen::MatrixXd dX = sqa::blstm_backward(p, cache, S, grads);

  double worst = 0.0;
  auto probe = [&](double& slot, double analytic) {
    double keep = slot;
    slot = keep + kStep;
    double lp = loss();
    slot = keep - kStep;
    double lm = loss();
    slot = keep;
    worst = std::max(worst, rel_err(analytic, (lp - lm) / (2.0 * kStep)));
  };
  for (int d = 0; d < 2; ++d) {
    sqa::LstmParams& pp = d == 0 ? p.fwd : p.bwd;
    sqa::LstmParams& gg = d == 0 ? grads.fwd : grads.bwd;
    for (Eigen::Index i = 0; i < pp.W.rows(); ++i)
      for (Eigen::Index j = 0; j < pp.W.cols(); ++j) probe(pp.W(i, j), gg.W(i, j));
    for (Eigen::Index i = 0; i < pp.b.size(); ++i) probe(pp.b(i), gg.b(i));
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) probe(X(i, j), dX(i, j));
  INFO("worst relative error " << worst);
  CHECK(worst < kTol);
}

TEST_CASE("full model gradients, pyramid and attention") {
  check_model_gradients(mini_config(true, true));
}

TEST_CASE("full model gradients, pyramid only") {
  check_model_gradients(mini_config(true, false));
}

TEST_CASE("full model gradients, attention only") {
  check_model_gradients(mini_config(false, true));
}

TEST_CASE("full model gradients, plain stack") {
  check_model_gradients(mini_config(false, false));
}
