// sqa/audio.hpp  --  WAV input/output for 16 kHz mono PCM16 clips.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_AUDIO_HPP_
#define SQA_AUDIO_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sqa/common.hpp"

namespace sqa {

constexpr int kRequiredSampleRate = 16000;
constexpr double kMinClipSeconds = 0.1;
constexpr double kMaxClipSeconds = 60.0;

struct AudioClip {
  std::string id;
  int sample_rate_hz = kRequiredSampleRate;
  std::vector<double> samples;  // amplitudes in [-1, 1]

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

inline void validate_clip(const AudioClip& clip) {
  require(!clip.samples.empty(), Errc::empty_input, "clip '" + clip.id + "' has no samples");
  require(clip.sample_rate_hz == kRequiredSampleRate, Errc::unsupported_rate,
          "clip '" + clip.id + "': sample rate must be 16000");
  require(all_finite(clip.samples), Errc::range, "clip '" + clip.id + "' has non-finite samples");
  double dur = clip.duration_s();
  require(dur >= kMinClipSeconds && dur <= kMaxClipSeconds, Errc::range,
          "clip '" + clip.id + "' duration outside [0.1, 60] s");
}

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

// Strict RIFF/WAVE reader: PCM16 little-endian, 1 channel, 16 kHz. Samples
// are scaled to [-1, 1] by dividing by 32768.
inline AudioClip load_audio(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 12, Errc::parse, "'" + path + "': truncated RIFF header");
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          Errc::parse, "'" + path + "': not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_len = detail::read_u32le(hdr + 4);
    std::size_t body = pos + 8;
    require(body + chunk_len <= bytes.size(), Errc::parse, "'" + path + "': truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      require(chunk_len >= 16, Errc::parse, "'" + path + "': short fmt chunk");
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  require(have_fmt && data != nullptr, Errc::parse, "'" + path + "': missing fmt or data chunk");
  require(format == 1 && bits == 16, Errc::unsupported_encoding,
          "'" + path + "': only PCM16 is supported");
  require(channels == 1, Errc::unsupported_channels, "'" + path + "': only mono is supported");
  require(rate == kRequiredSampleRate, Errc::unsupported_rate,
          "'" + path + "': sample rate must be 16000");
  require(data_len % 2 == 0, Errc::parse, "'" + path + "': odd PCM16 payload size");

  AudioClip clip;
  std::size_t slash = path.find_last_of("/\\");
  std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
  if (base.size() > 4 && base.substr(base.size() - 4) == ".wav") base.resize(base.size() - 4);
  clip.id = base;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    std::int16_t s = static_cast<std::int16_t>(
        static_cast<std::uint16_t>(data[2 * i] | (data[2 * i + 1] << 8)));
    clip.samples[i] = static_cast<double>(s) / 32768.0;
  }
  validate_clip(clip);
  return clip;
}

// Canonical 44-byte-header writer, PCM16 mono. Samples are clamped to
// [-1, 1] and rounded to the nearest representable level.
inline void save_audio(const AudioClip& clip, const std::string& path) {
  validate_clip(clip);
  std::string out;
  std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  out.reserve(44 + 2 * n);
  out += "RIFF";
  detail::put_u32le(out, 36 + 2 * n);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);  // PCM
  detail::put_u16le(out, 1);  // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz * 2));
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, 2 * n);
  for (double x : clip.samples) {
    double v = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
    int s = static_cast<int>(std::lround(v * 32767.0));
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot write '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), Errc::io, "write failed for '" + path + "'");
}

}  // namespace sqa

#endif  // SQA_AUDIO_HPP_
