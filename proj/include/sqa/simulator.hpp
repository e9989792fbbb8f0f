// sqa/simulator.hpp  --  crowdsourcing study simulator and synthetic audio
// generation with controlled quality.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_SIMULATOR_HPP_
#define SQA_SIMULATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sqa/audio.hpp"
#include "sqa/common.hpp"
#include "sqa/ratings.hpp"

namespace sqa {

// ---- rating study ----

// Each HIT bundles trials_per_hit trials; a trial pairs one test stimulus
// with its own hidden reference and low anchor, and every rater of the HIT
// scores all three on the 0-100 slider.
struct StudyConfig {
  int raters_per_hit = 5;
  int trials_per_hit = 15;
  double test_mos_lo = 2.0;
  double test_mos_hi = 6.0;
  double ref_mos_lo = 9.75;
  double ref_mos_hi = 10.0;
  double anchor_mos_lo = 0.0;
  double anchor_mos_hi = 0.5;
  double rater_bias_std = 3.0;    // additive, raw scale
  double rater_scale_lo = 0.9;    // multiplicative slider usage, clamped at the rails
  double rater_scale_hi = 1.1;
  double rater_noise_std = 5.0;   // per rating, raw scale
  double spammer_frac = 0.1;
  double unanswered_prob = 0.03;
  std::uint64_t seed = 99;
};

inline void validate_study_config(const StudyConfig& cfg) {
  require(cfg.raters_per_hit >= 1, Errc::config, "raters_per_hit must be >= 1");
  require(cfg.trials_per_hit >= 1, Errc::config, "trials_per_hit must be >= 1");
  require(cfg.test_mos_lo <= cfg.test_mos_hi && cfg.test_mos_lo >= 0 && cfg.test_mos_hi <= 10,
          Errc::config, "test MOS range must lie in [0,10]");
  require(cfg.rater_scale_lo > 0 && cfg.rater_scale_lo <= cfg.rater_scale_hi, Errc::config,
          "bad rater scale range");
  require(cfg.spammer_frac >= 0 && cfg.spammer_frac <= 1, Errc::config,
          "spammer_frac must be in [0,1]");
  require(cfg.unanswered_prob >= 0 && cfg.unanswered_prob < 1, Errc::config,
          "unanswered_prob must be in [0,1)");
}

struct StudyResult {
  std::vector<RatingRecord> table;
  std::map<std::string, double> true_mos;  // every stimulus, including refs/anchors
  std::set<std::string> spammer_workers;
};

// Test stimuli with uniformly drawn true MOS.
inline std::vector<std::pair<std::string, double>> make_test_stimuli(int n,
                                                                     const StudyConfig& cfg) {
  validate_study_config(cfg);
  require(n >= 1, Errc::range, "need at least one stimulus");
  Rng rng(derive_seed(cfg.seed, 0x571));
  std::vector<std::pair<std::string, double>> out;
  out.reserve(static_cast<std::size_t>(n));
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "s%04d", i + 1);
    out.emplace_back(buf, rng.uniform(cfg.test_mos_lo, cfg.test_mos_hi));
  }
  return out;
}

// Simulates the study over the given test stimuli. Honest raters apply a
// personal slider scale and bias plus Gaussian noise to 10x the true MOS,
// clamped to the slider; spammers answer uniformly at random. Each HIT gets
// fresh raters.
inline StudyResult generate_study(const std::vector<std::pair<std::string, double>>& test_stimuli,
                                  const StudyConfig& cfg) {
  validate_study_config(cfg);
  require(!test_stimuli.empty(), Errc::empty_input, "no test stimuli");

  StudyResult res;
  Rng rng(derive_seed(cfg.seed, 0x0a11));
  char buf[64];

  const std::size_t n_hits =
      (test_stimuli.size() + static_cast<std::size_t>(cfg.trials_per_hit) - 1) /
      static_cast<std::size_t>(cfg.trials_per_hit);
  int worker_no = 0;

  for (std::size_t h = 0; h < n_hits; ++h) {
    std::snprintf(buf, sizeof(buf), "h%03zu", h + 1);
    std::string hit_id = buf;

    struct Rater {
      std::string id;
      bool spammer;
      double scale, bias;
    };
    std::vector<Rater> raters;
    for (int w = 0; w < cfg.raters_per_hit; ++w) {
      Rater r;
      std::snprintf(buf, sizeof(buf), "w%04d", ++worker_no);
      r.id = buf;
      r.spammer = rng.uniform() < cfg.spammer_frac;
      r.scale = rng.uniform(cfg.rater_scale_lo, cfg.rater_scale_hi);
      r.bias = rng.normal(0.0, cfg.rater_bias_std);
      if (r.spammer) res.spammer_workers.insert(r.id);
      raters.push_back(std::move(r));
    }

    std::size_t lo = h * static_cast<std::size_t>(cfg.trials_per_hit);
    std::size_t hi = std::min(test_stimuli.size(), lo + static_cast<std::size_t>(cfg.trials_per_hit));
    for (std::size_t s = lo; s < hi; ++s) {
      std::snprintf(buf, sizeof(buf), "%s_t%02zu", hit_id.c_str(), s - lo + 1);
      std::string trial_id = buf;

      struct Item {
        std::string id;
        Condition cond;
        double truth;
      };
      std::vector<Item> items;
      items.push_back({trial_id + "_ref", Condition::reference,
                       rng.uniform(cfg.ref_mos_lo, cfg.ref_mos_hi)});
      items.push_back({trial_id + "_anchor", Condition::anchor,
                       rng.uniform(cfg.anchor_mos_lo, cfg.anchor_mos_hi)});
      items.push_back({test_stimuli[s].first, Condition::test, test_stimuli[s].second});

      for (const auto& item : items) res.true_mos[item.id] = item.truth;

      for (const auto& rater : raters) {
        for (const auto& item : items) {
          RatingRecord rec;
          rec.worker_id = rater.id;
          rec.hit_id = hit_id;
          rec.trial_id = trial_id;
          rec.stimulus_id = item.id;
          rec.condition = item.cond;
          rec.corpus = Corpus::synthetic;
          if (rng.uniform() < cfg.unanswered_prob) {
            rec.answered = false;
          } else {
            rec.answered = true;
            double raw = rater.spammer
                             ? rng.uniform(0.0, 100.0)
                             : rater.scale * 10.0 * item.truth + rater.bias +
                                   rng.normal(0.0, cfg.rater_noise_std);
            rec.raw_score = std::min(100.0, std::max(0.0, raw));
          }
          res.table.push_back(std::move(rec));
        }
      }
    }
  }
  return res;
}

// ---- synthetic audio ----

struct SynthAudioConfig {
  double duration_lo_s = 3.0;
  double duration_hi_s = 6.0;
  double snr_db_lo = -10.1;
  double snr_db_hi = 11.4;
  std::uint64_t seed = 4242;
};

inline void validate_synth_config(const SynthAudioConfig& cfg) {
  require(cfg.duration_lo_s > 0 && cfg.duration_lo_s <= cfg.duration_hi_s, Errc::config,
          "bad duration range");
  require(cfg.snr_db_lo < cfg.snr_db_hi, Errc::config, "bad SNR range");
}

struct SyntheticClip {
  AudioClip clip;
  std::vector<double> speech_stem;
  std::vector<double> noise_stem;
  double snr_db = 0.0;
  double quality = 0.0;  // in [0, 10], affine in SNR
};

inline double quality_to_snr_db(double q, const SynthAudioConfig& cfg) {
  require(q >= 0.0 && q <= 10.0, Errc::range, "quality must be in [0,10]");
  return cfg.snr_db_lo + (q / 10.0) * (cfg.snr_db_hi - cfg.snr_db_lo);
}

// A harmonic carrier with a syllabic amplitude envelope, mixed with white
// noise scaled for an exact stem-energy SNR, then peak-normalized (both
// stems identically, preserving the SNR).
inline SyntheticClip generate_synthetic_audio(const std::string& id, double quality,
                                              double duration_s, const SynthAudioConfig& cfg) {
  validate_synth_config(cfg);
  require(duration_s >= cfg.duration_lo_s && duration_s <= cfg.duration_hi_s, Errc::range,
          "duration outside configured range");

  std::uint64_t h = 1469598103934665603ULL;
  for (char c : id) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  Rng rng(derive_seed(cfg.seed, h));

  const int rate = kRequiredSampleRate;
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * rate));
  const double f0 = rng.uniform(120.0, 220.0);
  const double am_hz = rng.uniform(2.0, 4.0);
  const double phase = rng.uniform(0.0, 2.0 * 3.141592653589793);

  SyntheticClip out;
  out.quality = quality;
  out.snr_db = quality_to_snr_db(quality, cfg);
  out.speech_stem.resize(n);
  out.noise_stem.resize(n);

  const double two_pi = 2.0 * 3.141592653589793;
  double es = 0.0, en = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / rate;
    double env = 0.5 * (1.0 - std::cos(two_pi * am_hz * t + phase));
    double s = 0.0;
    double amp = 0.5;
    for (int k = 1; k <= 4; ++k) {
      s += amp * std::sin(two_pi * f0 * k * t);
      amp *= 0.6;
    }
    out.speech_stem[i] = env * s;
    out.noise_stem[i] = rng.normal();
    es += out.speech_stem[i] * out.speech_stem[i];
    en += out.noise_stem[i] * out.noise_stem[i];
  }
  require(es > 0 && en > 0, Errc::range, "degenerate stems");

  double alpha = std::sqrt(es / (en * std::pow(10.0, out.snr_db / 10.0)));
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.noise_stem[i] *= alpha;
    peak = std::max(peak, std::abs(out.speech_stem[i] + out.noise_stem[i]));
  }
  double norm = (peak > 0.0) ? 0.9 / peak : 1.0;

  out.clip.id = id;
  out.clip.sample_rate_hz = rate;
  out.clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.speech_stem[i] *= norm;
    out.noise_stem[i] *= norm;
    out.clip.samples[i] = out.speech_stem[i] + out.noise_stem[i];
  }
  return out;
}

struct CorpusItem {
  AudioClip clip;
  double true_mos = 0.0;
  double snr_db = 0.0;
};

// n clips with ids syn0001..., quality drawn uniformly from [q_lo, q_hi] and
// durations from the configured range.
inline std::vector<CorpusItem> build_corpus(int n, const SynthAudioConfig& cfg, double q_lo = 0.0,
                                            double q_hi = 10.0) {
  validate_synth_config(cfg);
  require(n >= 1, Errc::range, "need at least one clip");
  require(q_lo >= 0 && q_lo <= q_hi && q_hi <= 10, Errc::config, "bad quality range");

  Rng rng(derive_seed(cfg.seed, 0xc0));
  std::vector<CorpusItem> out;
  out.reserve(static_cast<std::size_t>(n));
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "syn%04d", i + 1);
    double q = rng.uniform(q_lo, q_hi);
    double dur = rng.uniform(cfg.duration_lo_s, cfg.duration_hi_s);
    SyntheticClip clip = generate_synthetic_audio(buf, q, dur, cfg);
    out.push_back({std::move(clip.clip), q, clip.snr_db});
  }
  return out;
}

}  // namespace sqa

#endif  // SQA_SIMULATOR_HPP_
