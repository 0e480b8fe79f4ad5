#pragma once

// Day-level distribution features over voiced frames, the six-hour day
// validity rule, multi-day averaging, and fixed-duration window sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/rng.hpp"
#include "dpi/signal.hpp"

namespace dpi {

enum class Group { pvh, control };

inline const char* to_string(Group g) {
  return g == Group::pvh ? "pvh" : "control";
}

inline std::optional<Group> group_from_string(std::string_view s) {
  if (s == "pvh") return Group::pvh;
  if (s == "control") return Group::control;
  return std::nullopt;
}

using FeatureVec = std::array<double, 2>;  // {h1h2_std, nsam_skewness}

struct DayFeatures {
  std::string subject_id;
  int day_index = 0;
  double h1h2_std = 0.0;
  double nsam_skewness = 0.0;
  std::size_t voiced_frame_count = 0;
  std::size_t total_frame_count = 0;
};

struct SubjectFeatures {
  std::string subject_id;
  Group group = Group::control;
  std::optional<std::string> pair_id;
  FeatureVec feature_vector{0.0, 0.0};
  int days_used = 0;
};

struct WindowSpec {
  int day_index = 0;
  std::size_t start_frame = 0;
  std::size_t length_frames = 0;
  std::size_t voiced_frame_count = 0;
};

inline double mean_of(std::span<const double> xs) {
  double acc = 0.0;
  for (double v : xs) acc += v;
  return acc / double(xs.size());
}

// Unbiased (n-1) sample standard deviation.
inline double sample_std(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2)
    fail(ErrorCode::too_few_samples, "standard deviation needs n >= 2");
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double v : xs) ss += (v - m) * (v - m);
  return std::sqrt(ss / double(n - 1));
}

// Bias-adjusted Fisher-Pearson skewness:
//   G1 = sqrt(n(n-1))/(n-2) * m3 / m2^(3/2)
// with m2, m3 the central sample moments. Two-pass central moments keep the
// scale/shift invariance tight enough for the 1e-9 property bound.
inline double skewness(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 3) fail(ErrorCode::too_few_samples, "skewness needs n >= 3");
  const double m = mean_of(xs);
  double m2 = 0.0, m3 = 0.0;
  for (double v : xs) {
    const double d = v - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= double(n);
  m3 /= double(n);
  if (m2 <= 1e-24 * (m * m + 1.0))
    fail(ErrorCode::zero_variance, "skewness undefined for constant input");
  const double b1 = m3 / (m2 * std::sqrt(m2));
  return std::sqrt(double(n) * double(n - 1)) / double(n - 2) * b1;
}

// Distribution features over the voiced frames of one day (or one recording).
inline DayFeatures summarize_day(std::span<const FrameFeatureRow> rows,
                                 std::string subject_id, int day_index) {
  std::vector<double> h1h2s, nsams;
  for (const FrameFeatureRow& row : rows) {
    if (!row.voiced) continue;
    h1h2s.push_back(row.h1h2_db.value());
    nsams.push_back(row.nsam_db);
  }
  if (h1h2s.size() < 3)
    fail(ErrorCode::insufficient_voicing,
         "day has fewer than 3 voiced frames");
  DayFeatures day;
  day.subject_id = std::move(subject_id);
  day.day_index = day_index;
  day.h1h2_std = sample_std(h1h2s);
  day.nsam_skewness = skewness(nsams);
  day.voiced_frame_count = h1h2s.size();
  day.total_frame_count = rows.size();
  return day;
}

// A day counts only if it carries at least min_hours of recording. The
// comparison is done in whole frames so the boundary is exact: at 50 ms
// frames and 6 h, exactly 432000 frames qualifies.
inline std::vector<DayFeatures> filter_valid_days(
    std::span<const DayFeatures> days, double min_hours = 6.0,
    double frame_seconds = 0.05) {
  const auto required = static_cast<std::size_t>(
      std::llround(min_hours * 3600.0 / frame_seconds));
  std::vector<DayFeatures> kept;
  for (const DayFeatures& d : days)
    if (d.total_frame_count >= required) kept.push_back(d);
  return kept;
}

// Average the day features of the first k valid days (monitoring order).
inline SubjectFeatures aggregate_days(std::span<const DayFeatures> days,
                                      std::size_t k, Group group,
                                      std::optional<std::string> pair_id = {}) {
  if (k == 0) fail(ErrorCode::not_enough_days, "k must be at least 1");
  if (days.size() < k)
    fail(ErrorCode::not_enough_days, "subject has fewer valid days than k");
  SubjectFeatures subj;
  subj.subject_id = days[0].subject_id;
  subj.group = group;
  subj.pair_id = std::move(pair_id);
  subj.days_used = int(k);
  double acc_std = 0.0, acc_skew = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc_std += days[i].h1h2_std;
    acc_skew += days[i].nsam_skewness;
  }
  subj.feature_vector = {acc_std / double(k), acc_skew / double(k)};
  return subj;
}

// What the window sampler needs to know about one day: its length and where
// the voiced frames sit (ascending indices), without holding frame rows.
struct DayVoicingIndex {
  int day_index = 0;
  std::size_t total_frames = 0;
  std::span<const std::uint32_t> voiced_frames;
};

struct WindowSamplerConfig {
  std::size_t min_voiced_frames = 6000;
  int max_retries = 100;     // total draws across the whole call
  int per_day_retries = 10;  // draws on one day before swapping it out
  double frame_seconds = 0.05;
};

struct WindowSampleStats {
  int draws = 0;
  int redraws = 0;  // draws rejected by the voiced-frame rule
};

// Splits a total_hours budget into k equal windows on k distinct days.
// Window placement is uniform within each day; a window with too few voiced
// frames is redrawn, and a day that keeps failing is swapped for an unused
// one. Draw order is fixed, so one seed yields one set of windows.
inline std::vector<WindowSpec> sample_fixed_duration_windows(
    std::span<const DayVoicingIndex> days, std::size_t k, double total_hours,
    std::uint64_t seed, const WindowSamplerConfig& cfg = {},
    WindowSampleStats* stats = nullptr) {
  if (k == 0) fail(ErrorCode::not_enough_days, "k must be at least 1");
  if (days.size() < k)
    fail(ErrorCode::not_enough_days, "fewer candidate days than k");
  const auto total_frames = static_cast<std::size_t>(
      std::llround(total_hours * 3600.0 / cfg.frame_seconds));
  const std::size_t window_len = total_frames / k;
  if (window_len == 0)
    fail(ErrorCode::not_enough_days, "window quantizes to zero frames");

  Rng rng(seed);
  std::vector<std::size_t> order = rng.sample_indices(days.size(), k);
  std::size_t next_replacement = k;

  const auto count_voiced = [](const DayVoicingIndex& day, std::size_t start,
                               std::size_t len) {
    const auto lo = std::lower_bound(day.voiced_frames.begin(),
                                     day.voiced_frames.end(),
                                     std::uint32_t(start));
    const auto hi = std::lower_bound(day.voiced_frames.begin(),
                                     day.voiced_frames.end(),
                                     std::uint32_t(start + len));
    return std::size_t(hi - lo);
  };

  std::vector<WindowSpec> windows;
  windows.reserve(k);
  int attempts = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    int day_attempts = 0;
    for (;;) {
      if (attempts >= cfg.max_retries)
        fail(ErrorCode::window_search_exhausted,
             "no window met the voiced-frame rule within the retry budget");
      const DayVoicingIndex& day = days[order[slot]];
      bool ok = false;
      WindowSpec w;
      if (day.total_frames >= window_len) {
        w.day_index = day.day_index;
        w.length_frames = window_len;
        w.start_frame = rng.below(day.total_frames - window_len + 1);
        w.voiced_frame_count = count_voiced(day, w.start_frame, window_len);
        ok = w.voiced_frame_count >= cfg.min_voiced_frames;
      }
      ++attempts;
      ++day_attempts;
      if (stats) {
        ++stats->draws;
        if (!ok) ++stats->redraws;
      }
      if (ok) {
        windows.push_back(w);
        break;
      }
      if (day_attempts >= cfg.per_day_retries &&
          next_replacement < days.size()) {
        order[slot] = order[next_replacement++];
        day_attempts = 0;
      }
    }
  }
  return windows;
}

}  // namespace dpi
