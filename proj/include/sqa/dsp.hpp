// sqa/dsp.hpp  --  log-magnitude spectrogram features.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_DSP_HPP_
#define SQA_DSP_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "sqa/audio.hpp"
#include "sqa/common.hpp"
#include "sqa/fft.hpp"

namespace sqa {

// Analysis parameters. The default profile uses 40 ms frames with a 30 ms
// hop and a 1024-point transform (smallest power of two that holds a 640
// sample frame). strict_profile() keeps a 512-point transform by shortening
// the frame to 512 samples.
struct FrameConfig {
  double frame_len_ms = 40.0;
  double hop_ms = 30.0;
  std::size_t fft_len = 1024;
  double log_floor = 1e-10;

  std::size_t frame_len_samples(int rate_hz) const {
    return static_cast<std::size_t>(frame_len_ms * rate_hz / 1000.0 + 0.5);
  }
  std::size_t hop_samples(int rate_hz) const {
    return static_cast<std::size_t>(hop_ms * rate_hz / 1000.0 + 0.5);
  }
  std::size_t bins() const { return fft_len / 2 + 1; }

  static FrameConfig strict_profile() {
    FrameConfig cfg;
    cfg.frame_len_ms = 32.0;  // 512 samples at 16 kHz
    cfg.fft_len = 512;
    return cfg;
  }
};

inline void validate_frame_config(const FrameConfig& cfg, int rate_hz) {
  require(cfg.frame_len_ms > 0 && cfg.hop_ms > 0, Errc::config, "frame/hop must be positive");
  require(cfg.hop_ms <= cfg.frame_len_ms, Errc::config, "hop must not exceed frame length");
  require(is_power_of_two(cfg.fft_len), Errc::config, "fft_len must be a power of two");
  require(cfg.fft_len >= cfg.frame_len_samples(rate_hz), Errc::config,
          "fft_len shorter than frame");
  require(cfg.log_floor > 0, Errc::config, "log_floor must be positive");
}

struct Spectrogram {
  std::string id;
  std::size_t frames = 0;  // T
  std::size_t bins = 0;    // F
  std::vector<double> data;  // row-major T x F

  double& at(std::size_t t, std::size_t f) { return data[t * bins + f]; }
  double at(std::size_t t, std::size_t f) const { return data[t * bins + f]; }
  const double* row(std::size_t t) const { return data.data() + t * bins; }
};

// Symmetric Hann window, w[0] = w[L-1] = 0.
inline std::vector<double> hann_window(std::size_t len) {
  std::vector<double> w(len);
  if (len == 1) {
    w[0] = 0.0;
    return w;
  }
  const double two_pi = 6.283185307179586476925286766559;
  for (std::size_t n = 0; n < len; ++n)
    w[n] = 0.5 * (1.0 - std::cos(two_pi * static_cast<double>(n) / static_cast<double>(len - 1)));
  return w;
}

// Slices the clip into frames of frame_len samples every hop samples.
// The trailing partial frame is dropped.
inline std::vector<std::vector<double>> frame_signal(const AudioClip& clip,
                                                     const FrameConfig& cfg) {
  validate_frame_config(cfg, clip.sample_rate_hz);
  const std::size_t frame = cfg.frame_len_samples(clip.sample_rate_hz);
  const std::size_t hop = cfg.hop_samples(clip.sample_rate_hz);
  const std::size_t n = clip.samples.size();
  require(n >= frame, Errc::range,
          "clip '" + clip.id + "' shorter than one frame");
  const std::size_t count = 1 + (n - frame) / hop;
  std::vector<std::vector<double>> frames(count);
  for (std::size_t i = 0; i < count; ++i) {
    frames[i].assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(i * hop),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(i * hop + frame));
  }
  return frames;
}

// Hann window, zero-pad to fft_len, FFT, then ln(max(|X[k]|, log_floor))
// over the first fft_len/2 + 1 bins.
inline Spectrogram stft_log_magnitude(const std::vector<std::vector<double>>& frames,
                                      const FrameConfig& cfg, const std::string& id = "") {
  require(!frames.empty(), Errc::empty_input, "no frames");
  const std::size_t frame_len = frames.front().size();
  require(cfg.fft_len >= frame_len, Errc::config, "fft_len shorter than frame");
  const std::vector<double> window = hann_window(frame_len);

  Spectrogram spec;
  spec.id = id;
  spec.frames = frames.size();
  spec.bins = cfg.bins();
  spec.data.resize(spec.frames * spec.bins);

  std::vector<double> buf(frame_len);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require(frames[t].size() == frame_len, Errc::dimension, "ragged frame lengths");
    for (std::size_t i = 0; i < frame_len; ++i) buf[i] = frames[t][i] * window[i];
    auto bins = fft_real(buf, cfg.fft_len);
    for (std::size_t k = 0; k < spec.bins; ++k)
      spec.at(t, k) = std::log(std::max(std::abs(bins[k]), cfg.log_floor));
  }
  return spec;
}

inline Spectrogram extract_features(const AudioClip& clip, const FrameConfig& cfg) {
  return stft_log_magnitude(frame_signal(clip, cfg), cfg, clip.id);
}

struct FeatureStats {
  std::vector<double> mean;      // per bin
  std::vector<double> variance;  // per bin, population
  std::uint64_t frame_count = 0;
};

// Streaming per-bin accumulator (Welford with Chan's merge). Merging partial
// accumulators in a fixed order keeps pooled statistics deterministic.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(std::size_t bins) : mean_(bins, 0.0), m2_(bins, 0.0) {}

  std::size_t bins() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }

  void add_frame(const double* row) {
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t f = 0; f < mean_.size(); ++f) {
      double delta = row[f] - mean_[f];
      mean_[f] += delta * inv;
      m2_[f] += delta * (row[f] - mean_[f]);
    }
  }

  void add(const Spectrogram& spec) {
    require(spec.bins == mean_.size(), Errc::dimension, "spectrogram bin count mismatch");
    for (std::size_t t = 0; t < spec.frames; ++t) add_frame(spec.row(t));
  }

  void merge(const StatsAccumulator& other) {
    require(other.bins() == bins(), Errc::dimension, "accumulator bin count mismatch");
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    for (std::size_t f = 0; f < mean_.size(); ++f) {
      double delta = other.mean_[f] - mean_[f];
      mean_[f] += delta * nb / n;
      m2_[f] += other.m2_[f] + delta * delta * na * nb / n;
    }
    count_ += other.count_;
  }

  FeatureStats finish() const {
    require(count_ >= 2, Errc::empty_input, "need at least 2 frames for feature stats");
    FeatureStats s;
    s.mean = mean_;
    s.variance.resize(m2_.size());
    for (std::size_t f = 0; f < m2_.size(); ++f)
      s.variance[f] = std::max(0.0, m2_[f] / static_cast<double>(count_));
    s.frame_count = count_;
    return s;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::uint64_t count_ = 0;
};

inline FeatureStats compute_feature_stats(const std::vector<Spectrogram>& specs) {
  require(!specs.empty(), Errc::empty_input, "no spectrograms");
  StatsAccumulator acc(specs.front().bins);
  for (const auto& s : specs) acc.add(s);
  return acc.finish();
}

// entry' = (entry - mean[f]) / sqrt(variance[f] + 1e-8)
inline Spectrogram normalize(const Spectrogram& spec, const FeatureStats& stats) {
  require(spec.bins == stats.mean.size() && spec.bins == stats.variance.size(), Errc::dimension,
          "feature dimension mismatch between spectrogram and stats");
  Spectrogram out = spec;
  std::vector<double> inv_std(spec.bins);
  for (std::size_t f = 0; f < spec.bins; ++f) inv_std[f] = 1.0 / std::sqrt(stats.variance[f] + 1e-8);
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t f = 0; f < spec.bins; ++f)
      out.at(t, f) = (spec.at(t, f) - stats.mean[f]) * inv_std[f];
  return out;
}

// ---- feature / stats file formats ----
//
// Feature file: "SQFT" | u32 version | u32 T | u32 F | T*F float32 LE, row-major.
// Stats file:   "SQST" | u32 version | u32 F | u64 frame_count | F f64 means | F f64 variances.

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(in.good(), Errc::parse, "'" + path + "': truncated file");
  return v;
}

}  // namespace detail

inline void save_features(const Spectrogram& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write '" + path + "'");
  out.write("SQFT", 4);
  detail::write_pod<std::uint32_t>(out, 1);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(spec.frames));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(spec.bins));
  for (double v : spec.data) detail::write_pod<float>(out, static_cast<float>(v));
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

inline Spectrogram load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "SQFT", 4) == 0, Errc::parse,
          "'" + path + "': not a feature file");
  auto version = detail::read_pod<std::uint32_t>(in, path);
  require(version == 1, Errc::version, "'" + path + "': unsupported feature file version");
  Spectrogram spec;
  spec.frames = detail::read_pod<std::uint32_t>(in, path);
  spec.bins = detail::read_pod<std::uint32_t>(in, path);
  require(spec.frames >= 1 && spec.bins >= 1, Errc::parse, "'" + path + "': empty feature file");
  spec.data.resize(spec.frames * spec.bins);
  for (auto& v : spec.data) v = detail::read_pod<float>(in, path);
  std::size_t slash = path.find_last_of("/\\");
  std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
  std::size_t dot = base.find_last_of('.');
  spec.id = (dot == std::string::npos) ? base : base.substr(0, dot);
  return spec;
}

// Debug CSV export: one row per frame.
inline void export_features_csv(const Spectrogram& spec, std::ostream& out) {
  out.precision(9);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t f = 0; f < spec.bins; ++f) {
      if (f) out << ',';
      out << spec.at(t, f);
    }
    out << '\n';
  }
}

inline void save_feature_stats(const FeatureStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write '" + path + "'");
  out.write("SQST", 4);
  detail::write_pod<std::uint32_t>(out, 1);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(stats.mean.size()));
  detail::write_pod<std::uint64_t>(out, stats.frame_count);
  for (double v : stats.mean) detail::write_pod<double>(out, v);
  for (double v : stats.variance) detail::write_pod<double>(out, v);
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

inline FeatureStats load_feature_stats(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "SQST", 4) == 0, Errc::parse,
          "'" + path + "': not a stats file");
  auto version = detail::read_pod<std::uint32_t>(in, path);
  require(version == 1, Errc::version, "'" + path + "': unsupported stats file version");
  FeatureStats stats;
  auto bins = detail::read_pod<std::uint32_t>(in, path);
  stats.frame_count = detail::read_pod<std::uint64_t>(in, path);
  stats.mean.resize(bins);
  stats.variance.resize(bins);
  for (auto& v : stats.mean) v = detail::read_pod<double>(in, path);
  for (auto& v : stats.variance) v = detail::read_pod<double>(in, path);
  return stats;
}

}  // namespace sqa

#endif  // SQA_DSP_HPP_
