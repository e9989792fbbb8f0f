// sqa/checkpoint.hpp  --  model checkpoint container: config, feature
// normalization stats, and flattened weights, CRC32-protected.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_CHECKPOINT_HPP_
#define SQA_CHECKPOINT_HPP_

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sqa/common.hpp"
#include "sqa/dsp.hpp"
#include "sqa/model.hpp"

namespace sqa {

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct ByteWriter {
  std::string buf;
  void raw(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
};

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  void raw(void* p, std::size_t n) {
    require(pos + n <= buf.size(), Errc::parse, "truncated checkpoint");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    raw(&v, 4);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
};

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
  ModelConfig config;
  FeatureStats stats;
  ModelParams params;
};

inline void save_model(const std::string& path, const ModelConfig& cfg,
                       const FeatureStats& stats, const ModelParams& params) {
  require(stats.mean.size() == static_cast<std::size_t>(cfg.input_dim), Errc::dimension,
          "stats dim does not match input_dim");

  detail::ByteWriter w;
  w.raw("SQMD", 4);
  w.u32(kCheckpointVersion);

  w.i32(cfg.input_dim);
  w.i32(cfg.base_hidden);
  w.u32(static_cast<std::uint32_t>(cfg.pyramid_hidden.size()));
  for (int h : cfg.pyramid_hidden) w.i32(h);
  w.i32(cfg.reduction_factor);
  w.u8(cfg.use_pyramid ? 1 : 0);
  w.u8(cfg.use_attention ? 1 : 0);
  w.i32(cfg.attention_dim);
  w.i32(cfg.fc_hidden);
  w.u64(cfg.seed);

  w.u32(static_cast<std::uint32_t>(stats.mean.size()));
  w.u64(stats.frame_count);
  for (double v : stats.mean) w.f64(v);
  for (double v : stats.variance) w.f64(v);

  std::vector<double> flat = flatten(params);
  w.u64(flat.size());
  for (double v : flat) w.f64(v);

  std::uint32_t crc =
      detail::crc32(reinterpret_cast<const unsigned char*>(w.buf.data()), w.buf.size());
  w.u32(crc);

  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot open '" + path + "' for writing");
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

inline ModelCheckpoint load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  require(buf.size() >= 12, Errc::parse, "checkpoint too small");
  require(buf.compare(0, 4, "SQMD") == 0, Errc::parse, "bad checkpoint magic");

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  std::uint32_t actual = detail::crc32(reinterpret_cast<const unsigned char*>(buf.data()),
                                       buf.size() - 4);
  require(stored_crc == actual, Errc::checksum, "checkpoint CRC mismatch");

  detail::ByteReader r{buf, 4};
  std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, Errc::version,
          "unsupported checkpoint version " + std::to_string(version));

  ModelCheckpoint ck;
  ck.config.input_dim = r.i32();
  ck.config.base_hidden = r.i32();
  std::uint32_t n_pyr = r.u32();
  require(n_pyr <= 64, Errc::parse, "implausible pyramid depth");
  ck.config.pyramid_hidden.clear();
  for (std::uint32_t i = 0; i < n_pyr; ++i) ck.config.pyramid_hidden.push_back(r.i32());
  ck.config.reduction_factor = r.i32();
  ck.config.use_pyramid = r.u8() != 0;
  ck.config.use_attention = r.u8() != 0;
  ck.config.attention_dim = r.i32();
  ck.config.fc_hidden = r.i32();
  ck.config.seed = r.u64();
  validate_model_config(ck.config);

  std::uint32_t F = r.u32();
  require(F == static_cast<std::uint32_t>(ck.config.input_dim), Errc::dimension,
          "stats dim does not match input_dim");
  ck.stats.frame_count = r.u64();
  ck.stats.mean.resize(F);
  ck.stats.variance.resize(F);
  for (std::uint32_t i = 0; i < F; ++i) ck.stats.mean[i] = r.f64();
  for (std::uint32_t i = 0; i < F; ++i) ck.stats.variance[i] = r.f64();

  ck.params = init_params(ck.config);
  std::uint64_t n = r.u64();
  require(n == param_count(ck.params), Errc::dimension,
          "weight count does not match configuration");
  std::vector<double> flat(n);
  for (std::uint64_t i = 0; i < n; ++i) flat[i] = r.f64();
  unflatten(flat, ck.params);

  require(r.pos + 4 == buf.size(), Errc::parse, "trailing bytes in checkpoint");
  return ck;
}

}  // namespace sqa

#endif  // SQA_CHECKPOINT_HPP_
