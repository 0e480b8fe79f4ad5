#pragma once

// Small shared helpers for the test suite.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/signal.hpp"

inline std::vector<double> sine_wave(double f0_hz, double amp, int fs,
                                     std::size_t n, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * std::numbers::pi * f0_hz * double(i) /
                              double(fs) +
                          phase);
  return x;
}

inline dpi::Frame make_frame(const std::vector<double>& xs, int fs = 11025) {
  return {0, std::span<const double>(xs), fs};
}

// Runs fn, which must throw dpi::Error, and returns its code.
template <typename Fn>
dpi::ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const dpi::Error& e) {
    return e.code();
  }
  FAIL("expected a dpi::Error to be thrown");
  return dpi::ErrorCode::io_error;  // unreachable
}
