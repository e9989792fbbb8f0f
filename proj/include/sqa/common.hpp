// sqa/common.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_COMMON_HPP_
#define SQA_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sqa {

// Stable error codes. The CLI maps these onto distinct exit codes, so the
// numbering is part of the tool's interface.
enum class Errc : int {
  io = 10,
  parse = 11,
  unsupported_encoding = 12,
  unsupported_channels = 13,
  unsupported_rate = 14,
  range = 15,
  dimension = 16,
  config = 17,
  version = 18,
  checksum = 19,
  empty_input = 20,
  duplicate = 21,
  singular = 22,
  divergence = 23,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  Errc code_;
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::io: return "io";
    case Errc::parse: return "parse";
    case Errc::unsupported_encoding: return "unsupported_encoding";
    case Errc::unsupported_channels: return "unsupported_channels";
    case Errc::unsupported_rate: return "unsupported_rate";
    case Errc::range: return "range";
    case Errc::dimension: return "dimension";
    case Errc::config: return "config";
    case Errc::version: return "version";
    case Errc::checksum: return "checksum";
    case Errc::empty_input: return "empty_input";
    case Errc::duplicate: return "duplicate";
    case Errc::singular: return "singular";
    case Errc::divergence: return "divergence";
  }
  return "unknown";
}

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

// splitmix64, used to derive independent sub-seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

// Deterministic RNG. Distributions are spelled out here instead of using
// <random> adaptors so that streams are bit-identical across standard
// library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed == 0 ? 0x853c49e6748fea9bULL : seed) {
    // warm up so that low-entropy seeds decorrelate
    for (int i = 0; i < 4; ++i) next_u64();
  }

  std::uint64_t next_u64() {
    state_ = splitmix64_state(state_);
    return mix(state_);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // standard normal via Box-Muller; one value per call, cache unused half
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t splitmix64_state(std::uint64_t s) { return s + 0x9e3779b97f4a7c15ULL; }
  static std::uint64_t mix(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace sqa

#endif  // SQA_COMMON_HPP_
