// tests/test_model.cpp  --  LSTM cells, the bidirectional wrapper, pyramid
// reduction, attention, parameter plumbing, and checkpoints.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include <Eigen/Dense>

#include "sqa/checkpoint.hpp"
#include "sqa/lstm.hpp"
#include "sqa/model.hpp"
#include "sqa/network.hpp"
#include "test_support.hpp"

using testsup::TempDir;
using testsup::thrown_code;

namespace {

sqa::ModelConfig tiny_config() {
  sqa::ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.base_hidden = 2;
  cfg.pyramid_hidden = {2};
  cfg.reduction_factor = 2;
  cfg.attention_dim = 2;
  cfg.fc_hidden = 2;
  cfg.seed = 42;
  return cfg;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, sqa::Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal(0.0, 1.0);
  return m;
}

sqa::FeatureStats stats_for(int dim) {
  sqa::FeatureStats s;
  s.mean.assign(static_cast<std::size_t>(dim), 0.5);
  s.variance.assign(static_cast<std::size_t>(dim), 2.0);
  s.frame_count = 10;
  return s;
}

}  // namespace

TEST_CASE("lstm cell follows the gate equations") {
  sqa::LstmParams p;
  p.W.resize(4, 2);
  // rows: input, forget, candidate, output; columns: x, h_prev
  p.W << 0.5, 0.1, 0.3, 0.2, 1.0, -0.5, 0.7, 0.4;
  p.b.resize(4);
  p.b << 0.1, 1.0, 0.0, -0.2;

  Eigen::VectorXd x(1), h(1), c(1);
  x << 0.8;
  h << 0.5;
  c << 0.3;
  auto step = sqa::lstm_cell_forward(p, x, h, c);

  double zi = 0.5 * 0.8 + 0.1 * 0.5 + 0.1;
  double zf = 0.3 * 0.8 + 0.2 * 0.5 + 1.0;
  double zg = 1.0 * 0.8 - 0.5 * 0.5 + 0.0;
  double zo = 0.7 * 0.8 + 0.4 * 0.5 - 0.2;
  double i = 1.0 / (1.0 + std::exp(-zi));
  double f = 1.0 / (1.0 + std::exp(-zf));
  double g = std::tanh(zg);
  double o = 1.0 / (1.0 + std::exp(-zo));
  double expect_c = f * 0.3 + i * g;
  double expect_h = o * std::tanh(expect_c);

  CHECK(step.c(0) == Catch::Approx(expect_c).epsilon(1e-14));
  CHECK(step.h(0) == Catch::Approx(expect_h).epsilon(1e-14));
}

TEST_CASE("sequence forward equals repeated cell updates") {
  sqa::Rng rng(8);
  const int I = 3, H = 2, T = 6;
  sqa::LstmParams p;
  p.W = random_matrix(4 * H, I + H, rng) * 0.4;
  p.b = random_matrix(4 * H, 1, rng).col(0) * 0.1;

  Eigen::MatrixXd X = random_matrix(I, T, rng);
  sqa::LstmCache cache;
  Eigen::MatrixXd Hs = sqa::lstm_forward(p, X, cache);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  for (int t = 0; t < T; ++t) {
    auto step = sqa::lstm_cell_forward(p, X.col(t), h, c);
    h = step.h;
    c = step.c;
    for (int j = 0; j < H; ++j) CHECK(Hs(j, t) == Catch::Approx(h(j)).epsilon(1e-13));
  }
}

TEST_CASE("reversing input and directions reverses blstm output") {
  sqa::Rng rng(21);
  const int I = 3, H = 2, T = 5;
  sqa::BlstmParams p;
  p.fwd.W = random_matrix(4 * H, I + H, rng) * 0.4;
  p.fwd.b = random_matrix(4 * H, 1, rng).col(0) * 0.1;
  p.bwd.W = random_matrix(4 * H, I + H, rng) * 0.4;
  p.bwd.b = random_matrix(4 * H, 1, rng).col(0) * 0.1;

  Eigen::MatrixXd X = random_matrix(I, T, rng);
  sqa::BlstmCache c1, c2;
  Eigen::MatrixXd Y = sqa::blstm_forward(p, X, c1);

  sqa::BlstmParams swapped;
  swapped.fwd = p.bwd;
  swapped.bwd = p.fwd;
  Eigen::MatrixXd Yr = sqa::blstm_forward(swapped, X.rowwise().reverse(), c2);

  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd a = Y.col(t);
    Eigen::VectorXd b = Yr.col(T - 1 - t);
    for (int j = 0; j < H; ++j) {
      CHECK(a(j) == Catch::Approx(b(H + j)).epsilon(1e-13));
      CHECK(a(H + j) == Catch::Approx(b(j)).epsilon(1e-13));
    }
  }
}

TEST_CASE("pyramid reduction stacks frame pairs and zero-pads the tail") {
  Eigen::MatrixXd Y(2, 5);
  Y << 1, 3, 5, 7, 9, 2, 4, 6, 8, 10;
  Eigen::MatrixXd R = sqa::pyramid_reduce(Y, 2);
  REQUIRE(R.rows() == 4);
  REQUIRE(R.cols() == 3);

  Eigen::VectorXd c0(4), c1(4), c2(4);
  c0 << 1, 2, 3, 4;
  c1 << 5, 6, 7, 8;
  c2 << 9, 10, 0, 0;
  CHECK((R.col(0) - c0).norm() == 0.0);
  CHECK((R.col(1) - c1).norm() == 0.0);
  CHECK((R.col(2) - c2).norm() == 0.0);

  // M = 1 is the identity.
  CHECK((sqa::pyramid_reduce(Y, 1) - Y).norm() == 0.0);
}

TEST_CASE("pyramid reduction backward is the exact adjoint") {
  sqa::Rng rng(31);
  for (int M : {2, 3}) {
    for (int T : {1, 4, 7, 12}) {
      Eigen::MatrixXd Y = random_matrix(3, T, rng);
      Eigen::MatrixXd R = sqa::pyramid_reduce(Y, M);
      Eigen::MatrixXd G = random_matrix(R.rows(), R.cols(), rng);
      Eigen::MatrixXd back = sqa::pyramid_reduce_backward(G, M, T);
      double lhs = (R.array() * G.array()).sum();
      double rhs = (Y.array() * back.array()).sum();
      CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoder output length follows the ceiling chain") {
  sqa::ModelConfig cfg = tiny_config();
  cfg.pyramid_hidden = {2, 2, 2};

  auto chain = [&](int t) {
    for (std::size_t l = 0; l < cfg.pyramid_hidden.size(); ++l)
      t = (t + cfg.reduction_factor - 1) / cfg.reduction_factor;
    return t;
  };
  CHECK(sqa::encoder_output_length(cfg, 64) == 8);
  CHECK(sqa::encoder_output_length(cfg, 100) == 13);
  CHECK(sqa::encoder_output_length(cfg, 1) == 1);
  for (int t : {1, 2, 3, 17, 63, 64, 65, 200})
    CHECK(sqa::encoder_output_length(cfg, t) == chain(t));

  cfg.use_pyramid = false;
  CHECK(sqa::encoder_output_length(cfg, 100) == 100);

  cfg.use_pyramid = true;
  cfg.reduction_factor = 3;
  cfg.pyramid_hidden = {2, 2};
  CHECK(sqa::encoder_output_length(cfg, 10) == 2);  // 10 -> 4 -> 2
}

TEST_CASE("a real forward pass produces the predicted length") {
  sqa::ModelConfig cfg = tiny_config();
  cfg.pyramid_hidden = {2, 2};
  sqa::ModelParams p = sqa::init_params(cfg);
  sqa::Rng rng(5);
  for (int T : {1, 2, 5, 9, 16}) {
    Eigen::MatrixXd X = random_matrix(cfg.input_dim, T, rng);
    sqa::ForwardTrace trace;
    sqa::model_forward(cfg, p, X, trace);
    CHECK(trace.Henc.cols() == sqa::encoder_output_length(cfg, T));
    CHECK(trace.Henc.rows() == 2 * cfg.pyramid_hidden.back());
  }
}

TEST_CASE("attention weights are row-stochastic and match a direct evaluation") {
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);
  sqa::Rng rng(17);
  Eigen::MatrixXd H = random_matrix(4, 6, rng);  // encoder_dim = 4

  sqa::AttentionCache cache;
  Eigen::MatrixXd ctx = sqa::self_attention(p, H, cache);
  REQUIRE(ctx.rows() == cfg.attention_dim);
  REQUIRE(ctx.cols() == 6);

  for (Eigen::Index i = 0; i < cache.A.rows(); ++i) {
    CHECK(cache.A.row(i).sum() == Catch::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index j = 0; j < cache.A.cols(); ++j) CHECK(cache.A(i, j) >= 0.0);
  }

  // Straight-line recomputation.
  Eigen::MatrixXd Q = p.Wq * H, K = p.Wk * H, V = p.Wv * H;
  Eigen::MatrixXd S = Q.transpose() * K / std::sqrt(static_cast<double>(cfg.attention_dim));
  Eigen::MatrixXd A(6, 6);
  for (int i = 0; i < 6; ++i) {
    Eigen::RowVectorXd e = S.row(i).array().exp().matrix();
    A.row(i) = e / e.sum();
  }
  Eigen::MatrixXd expect = V * A.transpose();
  CHECK((ctx - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention over a single frame is the value projection") {
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);
  Eigen::MatrixXd H(4, 1);
  H << 0.3, -0.7, 1.1, 0.2;
  sqa::AttentionCache cache;
  Eigen::MatrixXd ctx = sqa::self_attention(p, H, cache);
  CHECK(cache.A(0, 0) == Catch::Approx(1.0).epsilon(1e-14));
  Eigen::MatrixXd expect = p.Wv * H;
  CHECK((ctx - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("disabling attention feeds encoder output straight through") {
  sqa::ModelConfig cfg = tiny_config();
  cfg.use_attention = false;
  sqa::ModelParams p = sqa::init_params(cfg);
  CHECK(p.Wq.size() == 0);

  sqa::Rng rng(3);
  Eigen::MatrixXd X = random_matrix(cfg.input_dim, 7, rng);
  sqa::ForwardTrace trace;
  sqa::model_forward(cfg, p, X, trace);
  CHECK((trace.Ctx - trace.Henc).cwiseAbs().maxCoeff() == 0.0);
  CHECK(trace.pooled.size() == trace.Henc.rows());
}

TEST_CASE("disabling the pyramid keeps the sequence length") {
  sqa::ModelConfig cfg = tiny_config();
  cfg.use_pyramid = false;
  cfg.pyramid_hidden = {2, 2};
  sqa::ModelParams p = sqa::init_params(cfg);
  sqa::Rng rng(4);
  Eigen::MatrixXd X = random_matrix(cfg.input_dim, 9, rng);
  sqa::ForwardTrace trace;
  sqa::model_forward(cfg, p, X, trace);
  CHECK(trace.Henc.cols() == 9);

  // Stacked layer inputs are plain 2H wide, not M * 2H.
  auto dims = sqa::model_dims(cfg);
  CHECK(dims.layer_input[1] == 2 * cfg.base_hidden);
}

TEST_CASE("prediction clamps where the raw score does not") {
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);
  sqa::Rng rng(12);
  Eigen::MatrixXd X = random_matrix(cfg.input_dim, 4, rng);

  p.bo = 50.0;
  sqa::ForwardTrace trace;
  double raw = sqa::model_forward(cfg, p, X, trace);
  CHECK(raw > 10.0);
  CHECK(sqa::predict_mos(cfg, p, X) == 10.0);

  p.bo = -50.0;
  raw = sqa::model_forward(cfg, p, X, trace);
  CHECK(raw < 0.0);
  CHECK(sqa::predict_mos(cfg, p, X) == 0.0);
}

TEST_CASE("model dims and parameter count agree with hand counting") {
  sqa::ModelConfig cfg = tiny_config();
  auto dims = sqa::model_dims(cfg);
  REQUIRE(dims.layer_hidden.size() == 2);
  CHECK(dims.layer_input[0] == 3);
  CHECK(dims.layer_input[1] == 2 * 2 * 2);  // M * 2 * h0
  CHECK(dims.encoder_dim == 4);
  CHECK(dims.ctx_dim == 2);

  sqa::ModelParams p = sqa::init_params(cfg);
  // layer 0: two directions of W (8 x 5) + b (8) = 2 * 48 = 96
  // layer 1: two directions of W (8 x 10) + b (8) = 2 * 88 = 176
  // attention: 3 * (2 x 4) = 24; head: Wf (2 x 2) + bf (2) + wo (2) + bo = 9
  CHECK(sqa::param_count(p) == 96u + 176u + 24u + 9u);

  auto flat = sqa::flatten(p);
  CHECK(flat.size() == sqa::param_count(p));
  sqa::ModelParams q = sqa::init_params(cfg);
  for (auto& v : flat) v += 1.0;
  sqa::unflatten(flat, q);
  auto flat2 = sqa::flatten(q);
  CHECK(flat2 == flat);

  flat.pop_back();
  CHECK(thrown_code([&] { sqa::unflatten(flat, q); }) == sqa::Errc::dimension);
}

TEST_CASE("initialization seeds the forget gates and bounds the weights") {
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);

  for (const auto& layer : p.layers) {
    for (const auto* lp : {&layer.fwd, &layer.bwd}) {
      Eigen::Index H = lp->b.size() / 4;
      for (Eigen::Index j = 0; j < lp->b.size(); ++j) {
        bool forget = j >= H && j < 2 * H;
        CHECK(lp->b(j) == (forget ? 1.0 : 0.0));
      }
      double lim = 1.0 / std::sqrt(static_cast<double>(lp->W.cols()));
      CHECK(lp->W.cwiseAbs().maxCoeff() <= lim);
      CHECK(lp->W.cwiseAbs().maxCoeff() > 0.0);
    }
  }
  CHECK(p.bf.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.bo == 0.0);

  auto a = sqa::flatten(sqa::init_params(cfg));
  auto b = sqa::flatten(sqa::init_params(cfg));
  CHECK(a == b);
  cfg.seed = 43;
  auto c = sqa::flatten(sqa::init_params(cfg));
  CHECK(a != c);
}

TEST_CASE("model config validation") {
  sqa::ModelConfig cfg = tiny_config();
  cfg.base_hidden = 0;
  CHECK(thrown_code([&] { sqa::validate_model_config(cfg); }) == sqa::Errc::config);
  cfg = tiny_config();
  cfg.reduction_factor = 0;
  CHECK(thrown_code([&] { sqa::validate_model_config(cfg); }) == sqa::Errc::config);
  cfg = tiny_config();
  cfg.pyramid_hidden = {2, 0};
  CHECK(thrown_code([&] { sqa::validate_model_config(cfg); }) == sqa::Errc::config);
}

TEST_CASE("input matrix layout puts frames in columns") {
  sqa::Spectrogram spec;
  spec.frames = 2;
  spec.bins = 3;
  spec.data = {1, 2, 3, 4, 5, 6};
  Eigen::MatrixXd X = sqa::to_input_matrix(spec);
  REQUIRE(X.rows() == 3);
  REQUIRE(X.cols() == 2);
  CHECK(X(0, 0) == 1.0);
  CHECK(X(2, 0) == 3.0);
  CHECK(X(0, 1) == 4.0);
  CHECK(X(2, 1) == 6.0);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  TempDir dir("sqa_ckpt");
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);
  sqa::FeatureStats stats = stats_for(cfg.input_dim);

  std::string path = dir.file("model.sqmd");
  sqa::save_model(path, cfg, stats, p);
  auto ck = sqa::load_model(path);

  CHECK(ck.config.input_dim == cfg.input_dim);
  CHECK(ck.config.base_hidden == cfg.base_hidden);
  CHECK(ck.config.pyramid_hidden == cfg.pyramid_hidden);
  CHECK(ck.config.reduction_factor == cfg.reduction_factor);
  CHECK(ck.config.use_pyramid == cfg.use_pyramid);
  CHECK(ck.config.use_attention == cfg.use_attention);
  CHECK(ck.config.attention_dim == cfg.attention_dim);
  CHECK(ck.config.fc_hidden == cfg.fc_hidden);
  CHECK(ck.stats.mean == stats.mean);
  CHECK(ck.stats.variance == stats.variance);
  CHECK(ck.stats.frame_count == stats.frame_count);
  CHECK(sqa::flatten(ck.params) == sqa::flatten(p));
}

TEST_CASE("checkpoint corruption is detected") {
  TempDir dir("sqa_ckptbad");
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);
  std::string path = dir.file("model.sqmd");
  sqa::save_model(path, cfg, stats_for(cfg.input_dim), p);

  auto slurp = [&]() {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  auto spit = [&](const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  const std::string good = slurp();

  // Flip one byte in the middle.
  std::string bad = good;
  bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x5a);
  spit(bad);
  CHECK(thrown_code([&] { sqa::load_model(path); }) == sqa::Errc::checksum);

  // Wrong magic.
  bad = good;
  bad[0] = 'X';
  spit(bad);
  CHECK(thrown_code([&] { sqa::load_model(path); }) == sqa::Errc::parse);

  // Severe truncation.
  spit(good.substr(0, 8));
  CHECK(thrown_code([&] { sqa::load_model(path); }) == sqa::Errc::parse);

  // Milder truncation shifts the checksum window.
  spit(good.substr(0, good.size() - 9));
  CHECK(thrown_code([&] { sqa::load_model(path); }) == sqa::Errc::checksum);

  // Unsupported version with a correct checksum.
  bad = good;
  bad[4] = 2;
  std::uint32_t crc = sqa::detail::crc32(reinterpret_cast<const unsigned char*>(bad.data()),
                                         bad.size() - 4);
  std::memcpy(bad.data() + bad.size() - 4, &crc, 4);
  spit(bad);
  CHECK(thrown_code([&] { sqa::load_model(path); }) == sqa::Errc::version);

  CHECK(thrown_code([&] { sqa::load_model(dir.file("nope.sqmd")); }) == sqa::Errc::io);
}

TEST_CASE("saving rejects stats of the wrong width") {
  TempDir dir("sqa_ckptdim");
  sqa::ModelConfig cfg = tiny_config();
  sqa::ModelParams p = sqa::init_params(cfg);
  auto stats = stats_for(cfg.input_dim + 1);
  CHECK(thrown_code([&] { sqa::save_model(dir.file("m.sqmd"), cfg, stats, p); }) ==
        sqa::Errc::dimension);
}

TEST_CASE("mse loss averages squared residuals") {
  CHECK(sqa::mse_loss({1.0, 2.0}, {0.0, 4.0}) == Catch::Approx((1.0 + 4.0) / 2.0));
  CHECK(thrown_code([] { sqa::mse_loss({}, {}); }) == sqa::Errc::dimension);
}
