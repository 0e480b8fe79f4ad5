#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace dpi {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / double(len);
    const std::complex<double> step(std::cos(ang), std::sin(ang));
    for (std::size_t base = 0; base < n; base += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[base + j];
        const std::complex<double> v = a[base + j + len / 2] * w;
        a[base + j] = u + v;
        a[base + j + len / 2] = u - v;
        w *= step;
      }
    }
  }
}

// Magnitude spectrum of a real signal zero-padded to n_fft samples
// (n_fft a power of two >= x.size()); returns bins 0..n_fft/2 inclusive.
inline std::vector<double> magnitude_spectrum(std::span<const double> x,
                                              std::size_t n_fft) {
  std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
  for (std::size_t i = 0; i < x.size() && i < n_fft; ++i) buf[i] = x[i];
  fft_radix2(buf);
  std::vector<double> mags(n_fft / 2 + 1);
  for (std::size_t k = 0; k < mags.size(); ++k) mags[k] = std::abs(buf[k]);
  return mags;
}

}  // namespace dpi
