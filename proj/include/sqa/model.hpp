// sqa/model.hpp  --  model configuration, parameter containers,
// deterministic initialization, and parameter (un)flattening.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_MODEL_HPP_
#define SQA_MODEL_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sqa/common.hpp"

namespace sqa {

// Gate rows inside every 4H-tall LSTM weight block are ordered input,
// forget, cell candidate, output.
struct ModelConfig {
  int input_dim = 513;
  int base_hidden = 256;                       // per direction
  std::vector<int> pyramid_hidden = {128, 64, 32};  // per direction
  int reduction_factor = 2;                    // M
  bool use_pyramid = true;
  bool use_attention = true;
  int attention_dim = 64;
  int fc_hidden = 32;
  std::uint64_t seed = 1;
};

inline void validate_model_config(const ModelConfig& cfg) {
  require(cfg.input_dim >= 1, Errc::config, "input_dim must be >= 1");
  require(cfg.base_hidden >= 1, Errc::config, "base_hidden must be >= 1");
  for (int h : cfg.pyramid_hidden)
    require(h >= 1, Errc::config, "pyramid widths must be >= 1");
  require(cfg.reduction_factor >= 1, Errc::config, "reduction_factor must be >= 1");
  require(cfg.attention_dim >= 1, Errc::config, "attention_dim must be >= 1");
  require(cfg.fc_hidden >= 1, Errc::config, "fc_hidden must be >= 1");
}

struct ModelDims {
  std::vector<int> layer_input;   // per recurrent layer
  std::vector<int> layer_hidden;  // per direction
  int encoder_dim = 0;            // 2 * last hidden
  int ctx_dim = 0;                // attention_dim when attention is on
};

inline ModelDims model_dims(const ModelConfig& cfg) {
  validate_model_config(cfg);
  ModelDims d;
  d.layer_hidden.push_back(cfg.base_hidden);
  for (int h : cfg.pyramid_hidden) d.layer_hidden.push_back(h);
  d.layer_input.push_back(cfg.input_dim);
  for (std::size_t l = 1; l < d.layer_hidden.size(); ++l) {
    int prev_out = 2 * d.layer_hidden[l - 1];
    d.layer_input.push_back(cfg.use_pyramid ? cfg.reduction_factor * prev_out : prev_out);
  }
  d.encoder_dim = 2 * d.layer_hidden.back();
  d.ctx_dim = cfg.use_attention ? cfg.attention_dim : d.encoder_dim;
  return d;
}

// Output length of the encoder for a T-frame input: each pyramid layer
// shortens by ceil(T / M).
inline int encoder_output_length(const ModelConfig& cfg, int frames) {
  require(frames >= 1, Errc::range, "need at least one frame");
  int t = frames;
  if (cfg.use_pyramid) {
    for (std::size_t l = 0; l < cfg.pyramid_hidden.size(); ++l)
      t = (t + cfg.reduction_factor - 1) / cfg.reduction_factor;
  }
  return t;
}

struct LstmParams {
  Eigen::MatrixXd W;  // (4H, I+H)
  Eigen::VectorXd b;  // (4H)
};

struct BlstmParams {
  LstmParams fwd;
  LstmParams bwd;
};

struct ModelParams {
  std::vector<BlstmParams> layers;
  Eigen::MatrixXd Wq, Wk, Wv;  // (attention_dim, encoder_dim); empty if attention off
  Eigen::MatrixXd Wf;          // (fc_hidden, ctx_dim)
  Eigen::VectorXd bf;          // (fc_hidden)
  Eigen::RowVectorXd wo;       // (1, fc_hidden)
  double bo = 0.0;
};

namespace detail {

inline void fill_uniform(Eigen::MatrixXd& m, double lim, Rng& rng) {
  double* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = rng.uniform(-lim, lim);
}

inline LstmParams init_lstm(int input, int hidden, Rng& rng) {
  LstmParams p;
  p.W.resize(4 * hidden, input + hidden);
  double lim = 1.0 / std::sqrt(static_cast<double>(input + hidden));
  fill_uniform(p.W, lim, rng);
  p.b = Eigen::VectorXd::Zero(4 * hidden);
  p.b.segment(hidden, hidden).setOnes();  // forget-gate bias starts at 1
  return p;
}

}  // namespace detail

inline ModelParams init_params(const ModelConfig& cfg) {
  ModelDims dims = model_dims(cfg);
  Rng rng(derive_seed(cfg.seed, 0xb10c));
  ModelParams p;
  for (std::size_t l = 0; l < dims.layer_hidden.size(); ++l) {
    BlstmParams layer;
    layer.fwd = detail::init_lstm(dims.layer_input[l], dims.layer_hidden[l], rng);
    layer.bwd = detail::init_lstm(dims.layer_input[l], dims.layer_hidden[l], rng);
    p.layers.push_back(std::move(layer));
  }
  if (cfg.use_attention) {
    double lim = 1.0 / std::sqrt(static_cast<double>(dims.encoder_dim));
    p.Wq.resize(cfg.attention_dim, dims.encoder_dim);
    p.Wk.resize(cfg.attention_dim, dims.encoder_dim);
    p.Wv.resize(cfg.attention_dim, dims.encoder_dim);
    detail::fill_uniform(p.Wq, lim, rng);
    detail::fill_uniform(p.Wk, lim, rng);
    detail::fill_uniform(p.Wv, lim, rng);
  }
  {
    double lim = 1.0 / std::sqrt(static_cast<double>(dims.ctx_dim));
    p.Wf.resize(cfg.fc_hidden, dims.ctx_dim);
    detail::fill_uniform(p.Wf, lim, rng);
    p.bf = Eigen::VectorXd::Zero(cfg.fc_hidden);
    double lim_o = 1.0 / std::sqrt(static_cast<double>(cfg.fc_hidden));
    p.wo.resize(cfg.fc_hidden);
    for (Eigen::Index i = 0; i < p.wo.size(); ++i) p.wo(i) = rng.uniform(-lim_o, lim_o);
    p.bo = 0.0;
  }
  return p;
}

// Gradients share the parameter layout.
using ModelGrads = ModelParams;

inline ModelGrads zero_grads_like(const ModelParams& p) {
  ModelGrads g;
  for (const auto& layer : p.layers) {
    BlstmParams z;
    z.fwd.W = Eigen::MatrixXd::Zero(layer.fwd.W.rows(), layer.fwd.W.cols());
    z.fwd.b = Eigen::VectorXd::Zero(layer.fwd.b.size());
    z.bwd.W = Eigen::MatrixXd::Zero(layer.bwd.W.rows(), layer.bwd.W.cols());
    z.bwd.b = Eigen::VectorXd::Zero(layer.bwd.b.size());
    g.layers.push_back(std::move(z));
  }
  g.Wq = Eigen::MatrixXd::Zero(p.Wq.rows(), p.Wq.cols());
  g.Wk = Eigen::MatrixXd::Zero(p.Wk.rows(), p.Wk.cols());
  g.Wv = Eigen::MatrixXd::Zero(p.Wv.rows(), p.Wv.cols());
  g.Wf = Eigen::MatrixXd::Zero(p.Wf.rows(), p.Wf.cols());
  g.bf = Eigen::VectorXd::Zero(p.bf.size());
  g.wo = Eigen::RowVectorXd::Zero(p.wo.size());
  g.bo = 0.0;
  return g;
}

namespace detail {

template <typename Fn>
void for_each_block(ModelParams& p, Fn&& fn) {
  for (auto& layer : p.layers) {
    fn(layer.fwd.W.data(), layer.fwd.W.size());
    fn(layer.fwd.b.data(), layer.fwd.b.size());
    fn(layer.bwd.W.data(), layer.bwd.W.size());
    fn(layer.bwd.b.data(), layer.bwd.b.size());
  }
  fn(p.Wq.data(), p.Wq.size());
  fn(p.Wk.data(), p.Wk.size());
  fn(p.Wv.data(), p.Wv.size());
  fn(p.Wf.data(), p.Wf.size());
  fn(p.bf.data(), p.bf.size());
  fn(p.wo.data(), p.wo.size());
  fn(&p.bo, 1);
}

template <typename Fn>
void for_each_block(const ModelParams& p, Fn&& fn) {
  for_each_block(const_cast<ModelParams&>(p),
                 [&](double* d, Eigen::Index n) { fn(static_cast<const double*>(d), n); });
}

}  // namespace detail

inline std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  detail::for_each_block(p, [&](const double*, Eigen::Index sz) {
    n += static_cast<std::size_t>(sz);
  });
  return n;
}

inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  out.reserve(param_count(p));
  detail::for_each_block(p, [&](const double* d, Eigen::Index sz) {
    out.insert(out.end(), d, d + sz);
  });
  return out;
}

inline void unflatten(const std::vector<double>& flat, ModelParams& p) {
  require(flat.size() == param_count(p), Errc::dimension, "flat parameter size mismatch");
  std::size_t off = 0;
  detail::for_each_block(p, [&](double* d, Eigen::Index sz) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off) + sz, d);
    off += static_cast<std::size_t>(sz);
  });
}

}  // namespace sqa

#endif  // SQA_MODEL_HPP_
