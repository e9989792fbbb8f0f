// sqa/network.hpp  --  full network assembly: pyramid reduction, scaled
// dot-product self-attention, pooling decode head, and the forward and
// backward passes over one utterance.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_NETWORK_HPP_
#define SQA_NETWORK_HPP_

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "sqa/common.hpp"
#include "sqa/dsp.hpp"
#include "sqa/lstm.hpp"
#include "sqa/model.hpp"

namespace sqa {

// Network input layout: one column per frame.
inline Eigen::MatrixXd to_input_matrix(const Spectrogram& spec) {
  require(spec.frames >= 1 && spec.bins >= 1, Errc::empty_input, "empty spectrogram");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(spec.bins), static_cast<Eigen::Index>(spec.frames));
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t f = 0; f < spec.bins; ++f)
      X(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(t)) = spec.at(t, f);
  return X;
}

constexpr double kScoreMin = 0.0;
constexpr double kScoreMax = 10.0;

// Stacks M consecutive frames into one column, zero-padding the last group,
// so a (D, T) sequence becomes (M*D, ceil(T/M)).
inline Eigen::MatrixXd pyramid_reduce(const Eigen::MatrixXd& Y, int M) {
  require(M >= 1, Errc::config, "reduction factor must be >= 1");
  const Eigen::Index D = Y.rows(), T = Y.cols();
  require(T >= 1, Errc::range, "empty sequence");
  const Eigen::Index To = (T + M - 1) / M;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M) * D, To);
  for (Eigen::Index j = 0; j < To; ++j)
    for (Eigen::Index m = 0; m < M; ++m) {
      Eigen::Index t = j * M + m;
      if (t < T) out.block(m * D, j, D, 1) = Y.col(t);
    }
  return out;
}

// Adjoint of pyramid_reduce: routes gradients back to the original frames,
// discarding the zero-pad positions.
inline Eigen::MatrixXd pyramid_reduce_backward(const Eigen::MatrixXd& dOut, int M,
                                               Eigen::Index T) {
  const Eigen::Index D = dOut.rows() / M;
  require(dOut.rows() == static_cast<Eigen::Index>(M) * D, Errc::dimension,
          "reduced gradient height not divisible by M");
  Eigen::MatrixXd dY(D, T);
  for (Eigen::Index j = 0; j < dOut.cols(); ++j)
    for (Eigen::Index m = 0; m < M; ++m) {
      Eigen::Index t = j * M + m;
      if (t < T) dY.col(t) = dOut.block(m * D, j, D, 1);
    }
  return dY;
}

struct AttentionCache {
  Eigen::MatrixXd Hin;      // (D, T)
  Eigen::MatrixXd Q, K, V;  // (att, T)
  Eigen::MatrixXd A;        // (T, T), rows sum to 1
};

// Single-head scaled dot-product self-attention. Context i mixes the value
// projections of every frame under softmax(q_i . k_j / sqrt(d)) weights.
inline Eigen::MatrixXd self_attention(const ModelParams& p, const Eigen::MatrixXd& H,
                                      AttentionCache& cache) {
  require(p.Wq.cols() == H.rows(), Errc::dimension, "attention input dim mismatch");
  const Eigen::Index T = H.cols();
  cache.Hin = H;
  cache.Q.noalias() = p.Wq * H;
  cache.K.noalias() = p.Wk * H;
  cache.V.noalias() = p.Wv * H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.Wq.rows()));
  Eigen::MatrixXd S = (cache.Q.transpose() * cache.K) * scale;
  cache.A.resize(T, T);
  for (Eigen::Index i = 0; i < T; ++i) {
    double mx = S.row(i).maxCoeff();
    Eigen::RowVectorXd e = (S.row(i).array() - mx).exp().matrix();
    cache.A.row(i) = e / e.sum();
  }
  return cache.V * cache.A.transpose();
}

inline Eigen::MatrixXd self_attention_backward(const ModelParams& p, const AttentionCache& c,
                                               const Eigen::MatrixXd& dCtx, ModelGrads& g) {
  const Eigen::Index T = c.A.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.Wq.rows()));

  Eigen::MatrixXd dV = dCtx * c.A;                // (att, T)
  Eigen::MatrixXd dA = dCtx.transpose() * c.V;    // (T, T)
  Eigen::MatrixXd dS(T, T);
  for (Eigen::Index i = 0; i < T; ++i) {
    double dot = dA.row(i).dot(c.A.row(i));
    dS.row(i) = (c.A.row(i).array() * (dA.row(i).array() - dot)).matrix();
  }
  dS *= scale;
  Eigen::MatrixXd dQ = c.K * dS.transpose();
  Eigen::MatrixXd dK = c.Q * dS;

  g.Wq.noalias() += dQ * c.Hin.transpose();
  g.Wk.noalias() += dK * c.Hin.transpose();
  g.Wv.noalias() += dV * c.Hin.transpose();
  return p.Wq.transpose() * dQ + p.Wk.transpose() * dK + p.Wv.transpose() * dV;
}

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> layer_inputs;   // input fed to each BLSTM
  std::vector<BlstmCache> layer_caches;
  std::vector<Eigen::Index> pre_reduce_T;      // input length before each reduce
  Eigen::MatrixXd Henc;                        // (encoder_dim, Th)
  AttentionCache att;
  Eigen::MatrixXd Ctx;                         // (ctx_dim, Th)
  Eigen::VectorXd pooled;                      // (ctx_dim)
  Eigen::VectorXd fc_pre, fc_act;              // (fc_hidden)
  double score = 0.0;                          // unclamped
};

// Encoder only: base BLSTM plus pyramid (or plain) stack.
inline Eigen::MatrixXd encoder_forward(const ModelConfig& cfg, const ModelParams& p,
                                       const Eigen::MatrixXd& X, ForwardTrace& trace) {
  require(X.rows() == cfg.input_dim, Errc::dimension, "feature dim mismatch");
  require(X.cols() >= 1, Errc::range, "empty feature sequence");

  trace.layer_inputs.clear();
  trace.layer_caches.assign(p.layers.size(), BlstmCache{});
  trace.pre_reduce_T.assign(p.layers.size(), 0);

  Eigen::MatrixXd cur = X;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (l > 0) {
      trace.pre_reduce_T[l] = cur.cols();
      if (cfg.use_pyramid) cur = pyramid_reduce(cur, cfg.reduction_factor);
    }
    trace.layer_inputs.push_back(cur);
    cur = blstm_forward(p.layers[l], trace.layer_inputs.back(), trace.layer_caches[l]);
  }
  trace.Henc = cur;
  return trace.Henc;
}

// Whole model on one utterance. Returns the raw (unclamped) score; clamping
// to [0, 10] is applied only at prediction time.
inline double model_forward(const ModelConfig& cfg, const ModelParams& p,
                            const Eigen::MatrixXd& X, ForwardTrace& trace) {
  Eigen::MatrixXd H = encoder_forward(cfg, p, X, trace);
  trace.Ctx = cfg.use_attention ? self_attention(p, H, trace.att) : H;
  trace.pooled = trace.Ctx.rowwise().mean();
  trace.fc_pre = p.Wf * trace.pooled + p.bf;
  trace.fc_act = trace.fc_pre.cwiseMax(0.0);
  trace.score = p.wo.dot(trace.fc_act) + p.bo;
  return trace.score;
}

// Accumulates parameter gradients for d(loss)/d(score) = dscore.
inline void model_backward(const ModelConfig& cfg, const ModelParams& p,
                           const ForwardTrace& trace, double dscore, ModelGrads& g) {
  g.wo.noalias() += dscore * trace.fc_act.transpose();
  g.bo += dscore;
  Eigen::VectorXd dfc = p.wo.transpose() * dscore;
  for (Eigen::Index i = 0; i < dfc.size(); ++i)
    if (trace.fc_pre(i) <= 0.0) dfc(i) = 0.0;
  g.Wf.noalias() += dfc * trace.pooled.transpose();
  g.bf += dfc;
  Eigen::VectorXd dpooled = p.Wf.transpose() * dfc;

  const Eigen::Index Th = trace.Ctx.cols();
  Eigen::MatrixXd dCtx = (dpooled / static_cast<double>(Th)).replicate(1, Th);

  Eigen::MatrixXd dH =
      cfg.use_attention ? self_attention_backward(p, trace.att, dCtx, g) : dCtx;

  for (std::size_t l = p.layers.size(); l-- > 0;) {
    Eigen::MatrixXd dIn =
        blstm_backward(p.layers[l], trace.layer_caches[l], dH, g.layers[l]);
    if (l > 0) {
      dH = cfg.use_pyramid
               ? pyramid_reduce_backward(dIn, cfg.reduction_factor, trace.pre_reduce_T[l])
               : dIn;
    }
  }
}

inline double predict_mos(const ModelConfig& cfg, const ModelParams& p,
                          const Eigen::MatrixXd& X) {
  ForwardTrace trace;
  double s = model_forward(cfg, p, X, trace);
  return std::min(kScoreMax, std::max(kScoreMin, s));
}

inline double mse_loss(const std::vector<double>& preds, const std::vector<double>& targets) {
  require(!preds.empty() && preds.size() == targets.size(), Errc::dimension,
          "loss input mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(preds.size());
}

}  // namespace sqa

#endif  // SQA_NETWORK_HPP_
