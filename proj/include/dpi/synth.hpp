#pragma once

// Synthetic data with known ground truth: analytic harmonic test signals,
// calibration sweeps, and whole monitoring cohorts with planted group
// differences and optional day-to-day drift.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/features.hpp"
#include "dpi/rng.hpp"
#include "dpi/signal.hpp"

namespace dpi {

// Sum of harmonics h * f0 with the given amplitudes, peak-normalized so the
// waveform stays inside [-1, 1]. Relative harmonic magnitudes are preserved,
// which is what the H1-H2 oracle cares about.
inline AccelRecording gen_harmonic_signal(double f0_hz,
                                          std::span<const double> amplitudes,
                                          int sample_rate_hz = 11025,
                                          double duration_s = 1.0) {
  if (amplitudes.empty() || !(f0_hz > 0.0))
    fail(ErrorCode::aliased_harmonic, "need a positive f0 and one harmonic");
  const double top = f0_hz * double(amplitudes.size());
  if (top >= sample_rate_hz / 2.0)
    fail(ErrorCode::aliased_harmonic,
         "highest harmonic reaches or exceeds Nyquist");
  AccelRecording rec;
  rec.sample_rate_hz = sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::lround(duration_s * sample_rate_hz));
  rec.samples.resize(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / double(sample_rate_hz);
    double v = 0.0;
    for (std::size_t h = 0; h < amplitudes.size(); ++h)
      v += amplitudes[h] *
           std::sin(2.0 * std::numbers::pi * f0_hz * double(h + 1) * t);
    rec.samples[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 1.0)
    for (double& s : rec.samples) s /= peak;
  return rec;
}

// Analytic skewness of a standard skew-normal with shape alpha; the oracle
// the cohort generator is tested against.
inline double skew_normal_skewness(double alpha) {
  const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
  const double m = delta * std::sqrt(2.0 / std::numbers::pi);
  return (4.0 - std::numbers::pi) / 2.0 * m * m * m /
         std::pow(1.0 - m * m, 1.5);
}

struct GroupParams {
  double h1h2_mean = 3.0;        // dB, per-frame H1-H2 center
  double h1h2_within_std = 2.5;  // dB, within-day spread
  double nsam_shape = -2.0;      // skew-normal shape of per-frame NSAM
};

struct CohortSpec {
  int n_pvh = 50;
  int n_control = 50;
  int days_per_subject = 7;
  double day_hours = 6.0;
  double voicing_rate = 0.3;  // fraction of frames that are voiced
  GroupParams pvh{2.0, 2.0, -5.0};
  GroupParams control{3.0, 3.0, -1.0};
  // Day-to-day drift. Each day perturbs the distribution parameters, not the
  // frame values: the within-day H1-H2 spread is scaled by exp(N(0, s)) and
  // the NSAM shape is shifted by N(0, s). A plain additive offset on the
  // frame values would leave the day's spread and skewness untouched, which
  // is exactly the invariance the day features are built around.
  double h1h2_drift_std = 0.0;
  double nsam_drift_std = 0.0;
  double nsam_loc = -20.0;    // dB, location of the voiced NSAM distribution
  double nsam_scale = 6.0;    // dB, scale of the voiced NSAM distribution
  double unvoiced_nsam = -60.0;
  // short in-lab session generated per subject; by default both groups share
  // the same lab parameters so the lab features carry no class signal
  int lab_frames = 1200;
  double lab_voicing_rate = 0.5;
  GroupParams lab_pvh{3.0, 2.5, -2.0};
  GroupParams lab_control{3.0, 2.5, -2.0};
  std::uint64_t seed = 0;
  double frame_seconds = 0.05;
};

struct SubjectMeta {
  std::string id;
  Group group = Group::control;
  std::optional<std::string> pair_id;
};

// Frame rows are produced lazily per (subject, day) from seeds derived off
// the spec seed, so a full cohort never has to sit in memory at once and
// any single day can be regenerated bit-identically.
class CohortGenerator {
 public:
  explicit CohortGenerator(CohortSpec spec) : spec_(std::move(spec)) {
    if (spec_.n_pvh < 0 || spec_.n_control < 0)
      fail(ErrorCode::degenerate_input, "negative cohort size");
    char buf[32];
    for (int i = 0; i < spec_.n_pvh; ++i) {
      std::snprintf(buf, sizeof buf, "P%03d", i);
      SubjectMeta m{buf, Group::pvh, std::nullopt};
      if (i < spec_.n_control) {
        std::snprintf(buf, sizeof buf, "pair%03d", i);
        m.pair_id = buf;
      }
      metas_.push_back(std::move(m));
    }
    for (int i = 0; i < spec_.n_control; ++i) {
      std::snprintf(buf, sizeof buf, "C%03d", i);
      SubjectMeta m{buf, Group::control, std::nullopt};
      if (i < spec_.n_pvh) {
        std::snprintf(buf, sizeof buf, "pair%03d", i);
        m.pair_id = buf;
      }
      metas_.push_back(std::move(m));
    }
  }

  const CohortSpec& spec() const { return spec_; }
  std::size_t subject_count() const { return metas_.size(); }
  const SubjectMeta& subject(std::size_t i) const { return metas_.at(i); }

  std::size_t frames_per_day() const {
    return static_cast<std::size_t>(
        std::llround(spec_.day_hours * 3600.0 / spec_.frame_seconds));
  }

  // One field day of frame rows for one subject.
  std::vector<FrameFeatureRow> day_rows(std::size_t subject_index,
                                        int day_index) const {
    const SubjectMeta& meta = metas_.at(subject_index);
    const GroupParams& gp =
        meta.group == Group::pvh ? spec_.pvh : spec_.control;
    Rng rng(derive_seed(spec_.seed, subject_index, std::uint64_t(day_index)));
    // day-level distribution parameters first, then the frames
    const double day_h1h2_std =
        gp.h1h2_within_std * std::exp(rng.normal() * spec_.h1h2_drift_std);
    const double day_nsam_shape =
        gp.nsam_shape + rng.normal() * spec_.nsam_drift_std;
    return make_rows(rng, frames_per_day(), spec_.voicing_rate, gp.h1h2_mean,
                     day_h1h2_std, day_nsam_shape);
  }

  // One in-lab session of frame rows for one subject.
  std::vector<FrameFeatureRow> lab_rows(std::size_t subject_index) const {
    const SubjectMeta& meta = metas_.at(subject_index);
    const GroupParams& gp =
        meta.group == Group::pvh ? spec_.lab_pvh : spec_.lab_control;
    Rng rng(derive_seed(spec_.seed, subject_index, 0x1abULL << 32));
    return make_rows(rng, std::size_t(spec_.lab_frames),
                     spec_.lab_voicing_rate, gp.h1h2_mean, gp.h1h2_within_std,
                     gp.nsam_shape);
  }

 private:
  std::vector<FrameFeatureRow> make_rows(Rng& rng, std::size_t n_frames,
                                         double voicing_rate, double h1h2_mean,
                                         double h1h2_std,
                                         double nsam_shape) const {
    std::vector<FrameFeatureRow> rows(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
      FrameFeatureRow& row = rows[i];
      row.frame_index = i;
      if (rng.uniform() < voicing_rate) {
        row.voiced = true;
        row.f0_hz = 200.0;  // placeholder pitch; day features never read it
        row.h1h2_db = h1h2_mean + h1h2_std * rng.normal();
        row.nsam_db =
            spec_.nsam_loc + spec_.nsam_scale * rng.skew_normal(nsam_shape);
      } else {
        row.nsam_db = spec_.unvoiced_nsam;
      }
    }
    return rows;
  }

  CohortSpec spec_;
  std::vector<SubjectMeta> metas_;
};

inline CohortGenerator gen_cohort(const CohortSpec& spec) {
  return CohortGenerator(spec);
}

// (nsam, spl) pairs along a loud-to-soft sweep with Gaussian noise on the
// SPL side; used to exercise the calibration fit against known truth.
inline std::vector<std::pair<double, double>> gen_calibration_pairs(
    double true_slope, double true_intercept, double noise_std, std::size_t n,
    std::uint64_t seed) {
  if (n < 2)
    fail(ErrorCode::too_few_samples, "calibration sweep needs n >= 2");
  Rng rng(seed);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nsam =
        -10.0 - 40.0 * double(i) / double(n - 1);  // -10 dB down to -50 dB
    const double spl =
        true_slope * nsam + true_intercept + noise_std * rng.normal();
    pairs.emplace_back(nsam, spl);
  }
  return pairs;
}

}  // namespace dpi
