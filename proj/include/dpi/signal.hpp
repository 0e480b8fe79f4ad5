#pragma once

// Per-frame analysis of neck-surface accelerometer recordings: framing,
// voicing detection, fundamental frequency, H1-H2, NSAM, and the linear
// NSAM -> SPL calibration fit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/fft.hpp"

namespace dpi {

enum class Condition { lab_rainbow, lab_spontaneous, field };

inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::lab_rainbow: return "lab_rainbow";
    case Condition::lab_spontaneous: return "lab_spontaneous";
    case Condition::field: return "field";
  }
  return "unknown";
}

inline std::optional<Condition> condition_from_string(std::string_view s) {
  if (s == "lab_rainbow") return Condition::lab_rainbow;
  if (s == "lab_spontaneous") return Condition::lab_spontaneous;
  if (s == "field") return Condition::field;
  return std::nullopt;
}

struct AccelRecording {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate_hz = 11025;
  std::string subject_id;
  Condition condition = Condition::field;
  std::optional<int> day_index;  // present for field recordings
};

struct Frame {
  std::size_t index = 0;
  std::span<const double> samples;  // view into the recording
  int sample_rate_hz = 11025;
};

struct FrameFeatureRow {
  std::size_t frame_index = 0;
  bool voiced = false;
  std::optional<double> f0_hz;    // voiced frames only
  std::optional<double> h1h2_db;  // voiced frames only
  double nsam_db = 0.0;           // every frame; silence clamped to the floor
};

struct VoicingConfig {
  double energy_floor_db = -50.0;      // frame RMS gate, dB re full scale
  double periodicity_threshold = 0.5;  // normalized autocorrelation gate
  double f0_min_hz = 70.0;
  double f0_max_hz = 600.0;
  // a shorter-lag peak within this fraction of the global autocorrelation
  // maximum wins, which suppresses octave-down errors
  double octave_peak_fraction = 0.9;
};

struct H1H2Config {
  double band_frac = 0.2;        // search band h*f0*(1 +/- band_frac)
  std::size_t min_zero_pad = 8;  // FFT length >= this multiple of frame length
  // candidate peaks more than this far below the spectral maximum are treated
  // as leakage skirt or noise floor, not harmonics
  double rel_floor_db = 40.0;
};

struct CalibrationModel {
  double slope = 1.0;      // dB SPL per dB NSAM
  double intercept = 0.0;  // dB SPL
  double residual_rms = 0.0;
};

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / double(x.size()));
}

// Non-overlapping frames; a trailing partial frame is dropped.
inline std::vector<Frame> frame_signal(const AccelRecording& rec,
                                       double frame_ms = 50.0) {
  if (rec.samples.empty()) fail(ErrorCode::empty_signal, "recording is empty");
  const auto frame_len = static_cast<std::size_t>(
      std::lround(frame_ms / 1000.0 * rec.sample_rate_hz));
  if (frame_len == 0)
    fail(ErrorCode::empty_signal, "frame length rounds to zero samples");
  std::vector<Frame> frames;
  frames.reserve(rec.samples.size() / frame_len);
  const std::span<const double> all(rec.samples);
  for (std::size_t start = 0; start + frame_len <= all.size();
       start += frame_len)
    frames.push_back(
        {frames.size(), all.subspan(start, frame_len), rec.sample_rate_hz});
  return frames;
}

// r(lag) = sum x[i]*x[i+lag] / sqrt(sum_{i<n-lag} x[i]^2 * sum_{i>=lag} x[i]^2)
inline double normalized_autocorr(std::span<const double> x, std::size_t lag) {
  const std::size_t n = x.size();
  if (lag >= n) return 0.0;
  double num = 0.0, e_head = 0.0, e_tail = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) {
    num += x[i] * x[i + lag];
    e_head += x[i] * x[i];
    e_tail += x[i + lag] * x[i + lag];
  }
  const double den = std::sqrt(e_head * e_tail);
  return den > 0.0 ? num / den : 0.0;
}

struct LagRange {
  std::size_t lo = 0, hi = 0;  // inclusive; lo > hi means empty
};

inline LagRange f0_lag_range(const VoicingConfig& cfg, int sample_rate_hz,
                             std::size_t frame_len) {
  LagRange r;
  r.lo = static_cast<std::size_t>(std::floor(sample_rate_hz / cfg.f0_max_hz));
  r.hi = static_cast<std::size_t>(std::ceil(sample_rate_hz / cfg.f0_min_hz));
  r.lo = std::max<std::size_t>(r.lo, 2);
  // keep at least a quarter frame of overlap in the correlation
  if (frame_len < 4) {
    r.lo = 1;
    r.hi = 0;
    return r;
  }
  r.hi = std::min(r.hi, frame_len - frame_len / 4);
  return r;
}

inline bool detect_voicing(const Frame& frame, const VoicingConfig& cfg = {}) {
  const double level = rms(frame.samples);
  if (level <= 0.0) return false;
  if (20.0 * std::log10(level) < cfg.energy_floor_db) return false;
  const LagRange range = f0_lag_range(cfg, frame.sample_rate_hz,
                                      frame.samples.size());
  if (range.lo > range.hi) return false;
  for (std::size_t lag = range.lo; lag <= range.hi; ++lag)
    if (normalized_autocorr(frame.samples, lag) >= cfg.periodicity_threshold)
      return true;
  return false;
}

namespace detail {

// Parabolic vertex offset from three equally spaced samples around a peak.
// Returns offset in [-0.5, 0.5] and the interpolated peak value.
inline std::pair<double, double> parabolic_peak(double y_prev, double y_peak,
                                                double y_next) {
  const double denom = y_prev - 2.0 * y_peak + y_next;
  if (!(denom < 0.0)) return {0.0, y_peak};
  double delta = 0.5 * (y_prev - y_next) / denom;
  delta = std::clamp(delta, -0.5, 0.5);
  const double value = y_peak - 0.25 * (y_prev - y_next) * delta;
  return {delta, value};
}

}  // namespace detail

// Autocorrelation pitch with parabolic refinement. Among local maxima that
// reach both the periodicity threshold and octave_peak_fraction of the global
// maximum, the shortest lag wins; that keeps a strong half-frequency peak
// (subharmonic or true octave-down error) from capturing the estimate.
inline double estimate_f0(const Frame& frame, const VoicingConfig& cfg = {}) {
  const std::size_t n = frame.samples.size();
  const LagRange range = f0_lag_range(cfg, frame.sample_rate_hz, n);
  if (range.lo > range.hi)
    fail(ErrorCode::no_periodicity, "frame too short for the f0 search range");

  const std::size_t eval_lo = range.lo > 1 ? range.lo - 1 : range.lo;
  const std::size_t eval_hi = std::min(range.hi + 1, n - 1);
  std::vector<double> r(eval_hi - eval_lo + 1);
  for (std::size_t lag = eval_lo; lag <= eval_hi; ++lag)
    r[lag - eval_lo] = normalized_autocorr(frame.samples, lag);

  double r_max = -1.0;
  for (std::size_t lag = range.lo; lag <= range.hi; ++lag)
    r_max = std::max(r_max, r[lag - eval_lo]);
  const double gate =
      std::max(cfg.periodicity_threshold, cfg.octave_peak_fraction * r_max);

  std::size_t best_lag = 0;
  bool found = false;
  for (std::size_t lag = range.lo; lag <= range.hi && !found; ++lag) {
    const double here = r[lag - eval_lo];
    if (here < gate) continue;
    const bool rises_left = lag - 1 < eval_lo || here >= r[lag - 1 - eval_lo];
    const bool falls_right = lag + 1 > eval_hi || here >= r[lag + 1 - eval_lo];
    if (rises_left && falls_right) {
      best_lag = lag;
      found = true;
    }
  }
  if (!found)
    fail(ErrorCode::no_periodicity, "no autocorrelation peak above threshold");

  double lag_refined = double(best_lag);
  if (best_lag - 1 >= eval_lo && best_lag + 1 <= eval_hi) {
    const auto [delta, value] =
        detail::parabolic_peak(r[best_lag - 1 - eval_lo], r[best_lag - eval_lo],
                               r[best_lag + 1 - eval_lo]);
    (void)value;
    lag_refined += delta;
  }
  return double(frame.sample_rate_hz) / lag_refined;
}

namespace detail {

// Interpolated dB magnitude of the strongest spectral peak near center_hz.
// The peak must be a local maximum inside the search band and must clear the
// relative noise floor; otherwise there is no harmonic to measure.
inline std::optional<double> harmonic_peak_db(std::span<const double> mags,
                                              double center_hz, double band_frac,
                                              double rel_floor_db,
                                              double bin_hz) {
  const std::size_t n_bins = mags.size();
  auto k_lo = static_cast<std::size_t>(
      std::floor(center_hz * (1.0 - band_frac) / bin_hz));
  auto k_hi = static_cast<std::size_t>(
      std::ceil(center_hz * (1.0 + band_frac) / bin_hz));
  k_lo = std::max<std::size_t>(k_lo, 1);
  k_hi = std::min(k_hi, n_bins - 2);
  if (k_lo > k_hi) return std::nullopt;

  std::size_t k_best = k_lo;
  for (std::size_t k = k_lo; k <= k_hi; ++k)
    if (mags[k] > mags[k_best]) k_best = k;
  if (!(mags[k_best] > mags[k_best - 1] && mags[k_best] >= mags[k_best + 1]))
    return std::nullopt;

  double global_max = 0.0;
  for (double m : mags) global_max = std::max(global_max, m);
  if (global_max <= 0.0 || mags[k_best] <= 0.0) return std::nullopt;
  const double peak_db = 20.0 * std::log10(mags[k_best]);
  if (peak_db <= 20.0 * std::log10(global_max) - rel_floor_db)
    return std::nullopt;

  const double floor_mag = 1e-300;
  const auto [delta, value_db] = parabolic_peak(
      20.0 * std::log10(std::max(mags[k_best - 1], floor_mag)), peak_db,
      20.0 * std::log10(std::max(mags[k_best + 1], floor_mag)));
  (void)delta;
  return value_db;
}

}  // namespace detail

// H1-H2: dB difference between the first and second harmonic magnitudes,
// measured on a Hann-windowed, heavily zero-padded FFT with parabolic peak
// interpolation in the dB domain.
inline double compute_h1h2(const Frame& frame, double f0_hz,
                           const H1H2Config& cfg = {}) {
  const double nyquist = frame.sample_rate_hz / 2.0;
  if (!(f0_hz > 0.0) || 2.0 * f0_hz >= nyquist)
    fail(ErrorCode::harmonic_not_found,
         "first two harmonics must lie below Nyquist");
  const std::size_t n = frame.samples.size();
  if (n < 4) fail(ErrorCode::harmonic_not_found, "frame too short");

  std::vector<double> windowed(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n - 1));
    windowed[i] = frame.samples[i] * w;
  }
  const std::size_t n_fft = next_pow2(cfg.min_zero_pad * n);
  const std::vector<double> mags = magnitude_spectrum(windowed, n_fft);
  const double bin_hz = double(frame.sample_rate_hz) / double(n_fft);

  const auto h1 = detail::harmonic_peak_db(mags, f0_hz, cfg.band_frac,
                                           cfg.rel_floor_db, bin_hz);
  if (!h1)
    fail(ErrorCode::harmonic_not_found, "no spectral peak near f0");
  const auto h2 = detail::harmonic_peak_db(mags, 2.0 * f0_hz, cfg.band_frac,
                                           cfg.rel_floor_db, bin_hz);
  if (!h2)
    fail(ErrorCode::harmonic_not_found, "no spectral peak near 2*f0");
  return *h1 - *h2;
}

// NSAM: frame level in dB re full scale, 20*log10(RMS).
inline double compute_nsam(const Frame& frame) {
  const double level = rms(frame.samples);
  if (level <= 0.0)
    fail(ErrorCode::silent_frame, "all-zero frame has no defined level");
  return 20.0 * std::log10(level);
}

struct FeatureExtractionConfig {
  double frame_ms = 50.0;
  VoicingConfig voicing{};
  H1H2Config h1h2{};
  // NSAM for silent or denormal-level frames is clamped here so every row
  // carries a finite value; such frames are never voiced, so day features
  // are unaffected.
  double silence_floor_db = -300.0;
};

struct ExtractionResult {
  std::vector<FrameFeatureRow> rows;  // one per frame, in order
  // frames that passed the voicing gate but yielded no usable f0 or harmonic
  // pair; they are kept as unvoiced rows
  std::size_t demoted_frames = 0;
};

inline ExtractionResult extract_frame_features(
    const AccelRecording& rec, const FeatureExtractionConfig& cfg = {}) {
  ExtractionResult out;
  const std::vector<Frame> frames = frame_signal(rec, cfg.frame_ms);
  out.rows.reserve(frames.size());
  for (const Frame& frame : frames) {
    FrameFeatureRow row;
    row.frame_index = frame.index;
    const double level = rms(frame.samples);
    row.nsam_db = level > 0.0
                      ? std::max(20.0 * std::log10(level), cfg.silence_floor_db)
                      : cfg.silence_floor_db;
    if (detect_voicing(frame, cfg.voicing)) {
      try {
        const double f0 = estimate_f0(frame, cfg.voicing);
        const double h1h2 = compute_h1h2(frame, f0, cfg.h1h2);
        row.voiced = true;
        row.f0_hz = f0;
        row.h1h2_db = h1h2;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::no_periodicity ||
            e.code() == ErrorCode::harmonic_not_found)
          ++out.demoted_frames;
        else
          throw;
      }
    }
    out.rows.push_back(row);
  }
  return out;
}

// Least-squares line spl = slope*nsam + intercept over (nsam, spl) pairs.
inline CalibrationModel fit_calibration(
    std::span<const std::pair<double, double>> pairs) {
  const std::size_t n = pairs.size();
  if (n < 2)
    fail(ErrorCode::degenerate_calibration, "need at least two level pairs");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pairs) {
    mx += x;
    my += y;
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pairs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx <= 1e-12 * double(n) * (mx * mx + 1.0))
    fail(ErrorCode::degenerate_calibration, "NSAM values have no spread");
  CalibrationModel model;
  model.slope = sxy / sxx;
  model.intercept = my - model.slope * mx;
  double sse = 0.0;
  for (const auto& [x, y] : pairs) {
    const double r = y - (model.slope * x + model.intercept);
    sse += r * r;
  }
  model.residual_rms = std::sqrt(sse / double(n));
  return model;
}

inline double apply_calibration(const CalibrationModel& model, double nsam_db) {
  return model.slope * nsam_db + model.intercept;
}

}  // namespace dpi
