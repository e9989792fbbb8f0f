// sqa/splits.hpp  --  stratified train/val/test splits and K-fold rotation.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_SPLITS_HPP_
#define SQA_SPLITS_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sqa/common.hpp"
#include "sqa/ratings.hpp"

namespace sqa {

struct SplitConfig {
  double train_frac = 0.7;
  double val_frac = 0.1;
  double test_frac = 0.2;
  int n_folds = 5;
  std::uint64_t seed = 7;
};

inline void validate_split_config(const SplitConfig& cfg) {
  require(cfg.train_frac > 0 && cfg.val_frac >= 0 && cfg.test_frac > 0, Errc::config,
          "split fractions must be positive");
  require(std::abs(cfg.train_frac + cfg.val_frac + cfg.test_frac - 1.0) < 1e-9, Errc::config,
          "split fractions must sum to 1");
  require(cfg.n_folds >= 1, Errc::config, "n_folds must be >= 1");
}

struct SplitPlan {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// K rotated splits, stratified by corpus. Per corpus the ids are shuffled
// once, arranged on a circle, and fold k takes a contiguous test block (the
// blocks partition the corpus across folds), the next floor(val_frac * n)
// ids as validation, and everything else as training, so rounding remainders
// land in the training set.
inline std::vector<SplitPlan> make_splits(const std::vector<StimulusMOS>& stimuli,
                                          const SplitConfig& cfg) {
  validate_split_config(cfg);
  require(stimuli.size() >= 10, Errc::range, "need at least 10 stimuli to split");

  std::map<std::string, std::vector<std::string>> by_corpus;
  std::map<std::string, int> seen;
  for (const auto& s : stimuli) {
    require(++seen[s.stimulus_id] == 1, Errc::duplicate,
            "duplicate stimulus '" + s.stimulus_id + "'");
    by_corpus[to_string(s.corpus)].push_back(s.stimulus_id);
  }

  const std::size_t K = static_cast<std::size_t>(cfg.n_folds);
  std::vector<SplitPlan> plans(K);

  std::uint64_t corpus_index = 0;
  for (auto& [corpus, ids] : by_corpus) {
    const std::size_t n = ids.size();
    require(n >= K, Errc::range, "corpus '" + corpus + "' has fewer stimuli than folds");
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(cfg.seed, corpus_index++));
    rng.shuffle(ids);

    std::vector<std::size_t> block(K), start(K);
    std::size_t acc = 0;
    for (std::size_t k = 0; k < K; ++k) {
      block[k] = n / K + (k < n % K ? 1 : 0);
      start[k] = acc;
      acc += block[k];
    }
    const std::size_t n_val = static_cast<std::size_t>(
        std::floor(cfg.val_frac * static_cast<double>(n)));

    for (std::size_t k = 0; k < K; ++k) {
      std::vector<int> role(n, 0);  // 0 train, 1 val, 2 test
      for (std::size_t i = 0; i < block[k]; ++i) role[(start[k] + i) % n] = 2;
      for (std::size_t i = 0; i < n_val; ++i) role[(start[k] + block[k] + i) % n] = 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (role[i] == 2)
          plans[k].test.push_back(ids[i]);
        else if (role[i] == 1)
          plans[k].val.push_back(ids[i]);
        else
          plans[k].train.push_back(ids[i]);
      }
    }
  }

  for (auto& p : plans) {
    std::sort(p.train.begin(), p.train.end());
    std::sort(p.val.begin(), p.val.end());
    std::sort(p.test.begin(), p.test.end());
    require(!p.train.empty() && !p.test.empty(), Errc::range,
            "degenerate split: empty train or test set");
  }
  return plans;
}

inline SplitPlan make_single_split(const std::vector<StimulusMOS>& stimuli,
                                   const SplitConfig& cfg) {
  return make_splits(stimuli, cfg).front();
}

}  // namespace sqa

#endif  // SQA_SPLITS_HPP_
