// sqa/train.hpp  --  Adam with global-norm clipping and the MSE training
// loop with best-validation-epoch selection.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_TRAIN_HPP_
#define SQA_TRAIN_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "sqa/common.hpp"
#include "sqa/network.hpp"

namespace sqa {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> m, v;
  std::int64_t t = 0;
};

inline AdamState adam_init(const AdamConfig& cfg, std::size_t n_params) {
  require(cfg.lr > 0 && cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1 &&
              cfg.eps > 0,
          Errc::config, "bad Adam hyperparameters");
  AdamState s;
  s.cfg = cfg;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  return s;
}

// Scales the gradient so its global L2 norm is at most max_norm; returns the
// pre-clip norm.
inline double clip_global_norm(std::vector<double>& g, double max_norm) {
  require(max_norm > 0, Errc::config, "clip norm must be positive");
  double sq = 0.0;
  for (double x : g) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double s = max_norm / norm;
    for (double& x : g) x *= s;
  }
  return norm;
}

// One bias-corrected Adam update in place.
inline void adam_step(AdamState& s, std::vector<double>& params,
                      const std::vector<double>& grads) {
  require(params.size() == s.m.size() && grads.size() == s.m.size(), Errc::dimension,
          "Adam state size mismatch");
  s.t += 1;
  const double b1 = s.cfg.beta1, b2 = s.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * grads[i];
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * grads[i] * grads[i];
    double mhat = s.m[i] / c1;
    double vhat = s.v[i] / c2;
    params[i] -= s.cfg.lr * mhat / (std::sqrt(vhat) + s.cfg.eps);
  }
}

struct TrainExample {
  std::string id;
  Eigen::MatrixXd X;  // (F, T)
  double target = 0.0;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t shuffle_seed = 17;
  double clip_norm = 5.0;
  AdamConfig adam;
};

inline void validate_train_config(const TrainConfig& cfg) {
  require(cfg.epochs >= 1, Errc::config, "epochs must be >= 1");
  require(cfg.batch_size >= 1, Errc::config, "batch_size must be >= 1");
  require(cfg.clip_norm > 0, Errc::config, "clip_norm must be positive");
}

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;  // 1-based
  double best_val_mse = std::numeric_limits<double>::infinity();
  bool diverged = false;
};

// Mean squared error of the raw (unclamped) scores over a set.
inline double dataset_loss(const ModelConfig& cfg, const ModelParams& p,
                           const std::vector<TrainExample>& set) {
  require(!set.empty(), Errc::empty_input, "empty dataset");
  double s = 0.0;
  ForwardTrace trace;
  for (const auto& ex : set) {
    double d = model_forward(cfg, p, ex.X, trace) - ex.target;
    s += d * d;
  }
  return s / static_cast<double>(set.size());
}

// Loss plus accumulated gradients (caller supplies zeroed grads). The
// factor 2/n of the MSE derivative is folded into dscore.
inline double dataset_loss_and_grads(const ModelConfig& cfg, const ModelParams& p,
                                     const std::vector<TrainExample>& set, ModelGrads& g) {
  require(!set.empty(), Errc::empty_input, "empty dataset");
  const double n = static_cast<double>(set.size());
  double s = 0.0;
  ForwardTrace trace;
  for (const auto& ex : set) {
    double d = model_forward(cfg, p, ex.X, trace) - ex.target;
    s += d * d;
    model_backward(cfg, p, trace, 2.0 * d / n, g);
  }
  return s / n;
}

// Minibatch Adam training. Batches are reshuffled each epoch from a seed
// derived per epoch; the parameters left in `params` are the snapshot from
// the epoch with the lowest validation MSE. With an empty validation set the
// epoch training MSE drives selection instead. Non-finite loss or parameters
// stop training with diverged=true and keep the best snapshot so far.
inline TrainResult train(const ModelConfig& model_cfg, ModelParams& params,
                         const std::vector<TrainExample>& train_set,
                         const std::vector<TrainExample>& val_set, const TrainConfig& cfg) {
  validate_train_config(cfg);
  require(!train_set.empty(), Errc::empty_input, "empty training set");
  for (const auto& ex : train_set)
    require(ex.X.rows() == model_cfg.input_dim, Errc::dimension,
            "feature dim mismatch in '" + ex.id + "'");

  std::vector<double> flat = flatten(params);
  AdamState adam = adam_init(cfg.adam, flat.size());
  TrainResult res;
  std::vector<double> best = flat;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    double epoch_sq = 0.0;
    bool bad = false;
    for (std::size_t start = 0; start < order.size() && !bad;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double bn = static_cast<double>(stop - start);

      ModelGrads g = zero_grads_like(params);
      ForwardTrace trace;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& ex = train_set[order[k]];
        double d = model_forward(model_cfg, params, ex.X, trace) - ex.target;
        if (!std::isfinite(d)) {
          bad = true;
          break;
        }
        epoch_sq += d * d;
        model_backward(model_cfg, params, trace, 2.0 * d / bn, g);
      }
      if (bad) break;

      std::vector<double> gflat = flatten(g);
      clip_global_norm(gflat, cfg.clip_norm);
      adam_step(adam, flat, gflat);
      if (!all_finite(flat)) {
        bad = true;
        break;
      }
      unflatten(flat, params);
    }

    if (bad) {
      res.diverged = true;
      break;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_mse = epoch_sq / static_cast<double>(train_set.size());
    st.val_mse = val_set.empty() ? st.train_mse : dataset_loss(model_cfg, params, val_set);
    res.history.push_back(st);
    if (!std::isfinite(st.val_mse)) {
      res.diverged = true;
      break;
    }
    if (st.val_mse < res.best_val_mse) {
      res.best_val_mse = st.val_mse;
      res.best_epoch = epoch;
      best = flat;
    }
  }

  unflatten(best, params);
  return res;
}

inline void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out) {
  out << "epoch,train_mse,val_mse\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f", e.epoch, e.train_mse, e.val_mse);
    out << buf << '\n';
  }
}

}  // namespace sqa

#endif  // SQA_TRAIN_HPP_
