// sqa/fft.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_FFT_HPP_
#define SQA_FFT_HPP_

#include <complex>
#include <vector>

#include "sqa/common.hpp"

namespace sqa {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 DIT FFT. Length must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  require(is_power_of_two(n), Errc::dimension, "fft length must be a power of two");
  if (n == 1) return;

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  const double two_pi = 6.283185307179586476925286766559;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -two_pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = x[i + k];
        std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// FFT of a real frame zero-padded to fft_len.
inline std::vector<std::complex<double>> fft_real(const std::vector<double>& frame,
                                                  std::size_t fft_len) {
  require(frame.size() <= fft_len, Errc::dimension, "frame longer than fft length");
  std::vector<std::complex<double>> buf(fft_len, {0.0, 0.0});
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = {frame[i], 0.0};
  fft_inplace(buf);
  return buf;
}

}  // namespace sqa

#endif  // SQA_FFT_HPP_
