// sqa/lstm.hpp  --  LSTM cell and sequence passes with caches for
// backpropagation through time, plus the bidirectional wrapper.
//
// Sequences are (dim x T) matrices, one column per frame.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_LSTM_HPP_
#define SQA_LSTM_HPP_

#include <cmath>

#include <Eigen/Dense>

#include "sqa/common.hpp"
#include "sqa/model.hpp"

namespace sqa {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmStep {
  Eigen::VectorXd h;  // (H)
  Eigen::VectorXd c;  // (H)
};

// One cell update. Gate blocks of the preactivation z = W [x; h_prev] + b
// are input, forget, candidate, output, each H tall.
inline LstmStep lstm_cell_forward(const LstmParams& p, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev) {
  const Eigen::Index H = h_prev.size();
  require(p.W.rows() == 4 * H && p.W.cols() == x.size() + H, Errc::dimension,
          "LSTM weight shape mismatch");
  Eigen::VectorXd xh(x.size() + H);
  xh << x, h_prev;
  Eigen::VectorXd z = p.W * xh + p.b;
  LstmStep s;
  s.c.resize(H);
  s.h.resize(H);
  for (Eigen::Index j = 0; j < H; ++j) {
    double i = sigmoid(z(j));
    double f = sigmoid(z(H + j));
    double g = std::tanh(z(2 * H + j));
    double o = sigmoid(z(3 * H + j));
    s.c(j) = f * c_prev(j) + i * g;
    s.h(j) = o * std::tanh(s.c(j));
  }
  return s;
}

struct LstmCache {
  Eigen::MatrixXd X;      // (I, T) input
  Eigen::MatrixXd gates;  // (4H, T) post-activation i, f, g, o
  Eigen::MatrixXd C;      // (H, T) cell states
  Eigen::MatrixXd tanhC;  // (H, T)
  Eigen::MatrixXd H;      // (H, T) outputs
};

// Unidirectional pass over a whole sequence with zero initial state.
inline Eigen::MatrixXd lstm_forward(const LstmParams& p, const Eigen::MatrixXd& X,
                                    LstmCache& cache) {
  const Eigen::Index I = X.rows(), T = X.cols();
  require(T >= 1, Errc::range, "empty sequence");
  const Eigen::Index H = p.b.size() / 4;
  require(p.W.rows() == 4 * H && p.W.cols() == I + H, Errc::dimension,
          "LSTM weight shape mismatch");

  cache.X = X;
  cache.gates.resize(4 * H, T);
  cache.C.resize(H, T);
  cache.tanhC.resize(H, T);
  cache.H.resize(H, T);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd xh(I + H), z(4 * H);
  for (Eigen::Index t = 0; t < T; ++t) {
    xh.head(I) = X.col(t);
    xh.tail(H) = h;
    z.noalias() = p.W * xh;
    z += p.b;
    for (Eigen::Index j = 0; j < H; ++j) {
      double i = sigmoid(z(j));
      double f = sigmoid(z(H + j));
      double g = std::tanh(z(2 * H + j));
      double o = sigmoid(z(3 * H + j));
      cache.gates(j, t) = i;
      cache.gates(H + j, t) = f;
      cache.gates(2 * H + j, t) = g;
      cache.gates(3 * H + j, t) = o;
      c(j) = f * c(j) + i * g;
      cache.C(j, t) = c(j);
      double tc = std::tanh(c(j));
      cache.tanhC(j, t) = tc;
      h(j) = o * tc;
      cache.H(j, t) = h(j);
    }
  }
  return cache.H;
}

// BPTT over the cached sequence. Returns the gradient w.r.t. the input and
// accumulates parameter gradients into `grads`.
inline Eigen::MatrixXd lstm_backward(const LstmParams& p, const LstmCache& cache,
                                     const Eigen::MatrixXd& dH_out, LstmParams& grads) {
  const Eigen::Index I = cache.X.rows(), T = cache.X.cols();
  const Eigen::Index H = cache.H.rows();
  require(dH_out.rows() == H && dH_out.cols() == T, Errc::dimension,
          "output gradient shape mismatch");

  Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(I, T);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dz(4 * H), xh(I + H), dxh(I + H);

  for (Eigen::Index t = T - 1; t >= 0; --t) {
    for (Eigen::Index j = 0; j < H; ++j) {
      double i = cache.gates(j, t);
      double f = cache.gates(H + j, t);
      double g = cache.gates(2 * H + j, t);
      double o = cache.gates(3 * H + j, t);
      double tc = cache.tanhC(j, t);
      double c_prev = (t > 0) ? cache.C(j, t - 1) : 0.0;

      double dh = dH_out(j, t) + dh_next(j);
      double dc = dc_next(j) + dh * o * (1.0 - tc * tc);
      double d_i = dc * g;
      double d_f = dc * c_prev;
      double d_g = dc * i;
      double d_o = dh * tc;

      dz(j) = d_i * i * (1.0 - i);
      dz(H + j) = d_f * f * (1.0 - f);
      dz(2 * H + j) = d_g * (1.0 - g * g);
      dz(3 * H + j) = d_o * o * (1.0 - o);
      dc_next(j) = dc * f;
    }
    xh.head(I) = cache.X.col(t);
    if (t > 0)
      xh.tail(H) = cache.H.col(t - 1);
    else
      xh.tail(H).setZero();
    grads.W.noalias() += dz * xh.transpose();
    grads.b += dz;
    dxh.noalias() = p.W.transpose() * dz;
    dX.col(t) = dxh.head(I);
    dh_next = dxh.tail(H);
  }
  return dX;
}

struct BlstmCache {
  LstmCache fwd;
  LstmCache bwd;  // over the time-reversed input
};

// Bidirectional pass: forward direction over the sequence, backward
// direction over its reversal, outputs concatenated as [forward; backward]
// per frame.
inline Eigen::MatrixXd blstm_forward(const BlstmParams& p, const Eigen::MatrixXd& X,
                                     BlstmCache& cache) {
  const Eigen::Index T = X.cols();
  Eigen::MatrixXd Hf = lstm_forward(p.fwd, X, cache.fwd);
  Eigen::MatrixXd Xr = X.rowwise().reverse();
  Eigen::MatrixXd Hbr = lstm_forward(p.bwd, Xr, cache.bwd);

  const Eigen::Index H = Hf.rows();
  Eigen::MatrixXd Y(2 * H, T);
  Y.topRows(H) = Hf;
  Y.bottomRows(H) = Hbr.rowwise().reverse();
  return Y;
}

inline Eigen::MatrixXd blstm_backward(const BlstmParams& p, const BlstmCache& cache,
                                      const Eigen::MatrixXd& dY, BlstmParams& grads) {
  const Eigen::Index H = cache.fwd.H.rows();
  require(dY.rows() == 2 * H, Errc::dimension, "BLSTM gradient shape mismatch");

  Eigen::MatrixXd dXf = lstm_backward(p.fwd, cache.fwd, dY.topRows(H), grads.fwd);
  Eigen::MatrixXd dHb = dY.bottomRows(H).rowwise().reverse();
  Eigen::MatrixXd dXbr = lstm_backward(p.bwd, cache.bwd, dHb, grads.bwd);
  return dXf + dXbr.rowwise().reverse();
}

}  // namespace sqa

#endif  // SQA_LSTM_HPP_
