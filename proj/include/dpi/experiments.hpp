#pragma once

// Experiment drivers: in-lab vs field comparison, day-count learning curves,
// fixed-duration window curves, and the random-feature null baseline.
// Repetitions can run on a small worker pool; results are keyed by
// repetition index, so worker count never changes the output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/eval.hpp"
#include "dpi/features.hpp"
#include "dpi/model.hpp"
#include "dpi/rng.hpp"
#include "dpi/stats.hpp"
#include "dpi/synth.hpp"

namespace dpi {

namespace detail {

// Runs fn(0..n-1) across `workers` threads. Each index writes only its own
// result slot, so the schedule cannot affect results.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  std::mutex error_mutex;
  for (int t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!failed.exchange(true)) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// Voiced-frame payload of one day, compact enough to keep whole cohorts in
// memory for window resampling: indices plus the two feature values.
struct SubjectDayFrames {
  int day_index = 0;
  std::size_t total_frames = 0;
  std::vector<std::uint32_t> voiced_frames;  // ascending frame indices
  std::vector<float> h1h2_db;                // parallel to voiced_frames
  std::vector<float> nsam_db;
};

struct SubjectData {
  SubjectMeta meta;
  std::optional<FeatureVec> lab_features;
  std::vector<DayFeatures> day_features;     // valid days, monitoring order
  std::vector<SubjectDayFrames> day_frames;  // same days; filled on request
};

struct CohortData {
  std::vector<SubjectData> subjects;
};

struct CohortBuildOptions {
  double min_hours = 6.0;
  double frame_seconds = 0.05;
  bool keep_frames = false;  // retain per-frame voiced payloads (window path)
  bool build_lab = false;
};

namespace detail {

inline SubjectDayFrames compact_day(std::span<const FrameFeatureRow> rows,
                                    int day_index) {
  SubjectDayFrames day;
  day.day_index = day_index;
  day.total_frames = rows.size();
  for (const FrameFeatureRow& row : rows) {
    if (!row.voiced) continue;
    day.voiced_frames.push_back(std::uint32_t(row.frame_index));
    day.h1h2_db.push_back(float(row.h1h2_db.value()));
    day.nsam_db.push_back(float(row.nsam_db));
  }
  return day;
}

}  // namespace detail

// Materialize a synthetic cohort into day features (and optionally compact
// frame payloads and lab features). Days failing the minimum-hours rule or
// with too little voicing are dropped.
inline CohortData build_cohort(const CohortGenerator& gen,
                               const CohortBuildOptions& opts = {}) {
  CohortData data;
  const auto required = static_cast<std::size_t>(
      std::llround(opts.min_hours * 3600.0 / opts.frame_seconds));
  for (std::size_t s = 0; s < gen.subject_count(); ++s) {
    SubjectData subj;
    subj.meta = gen.subject(s);
    for (int d = 0; d < gen.spec().days_per_subject; ++d) {
      const std::vector<FrameFeatureRow> rows = gen.day_rows(s, d);
      if (rows.size() < required) continue;
      try {
        subj.day_features.push_back(
            summarize_day(rows, subj.meta.id, d));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::insufficient_voicing ||
            e.code() == ErrorCode::zero_variance ||
            e.code() == ErrorCode::too_few_samples)
          continue;
        throw;
      }
      if (opts.keep_frames)
        subj.day_frames.push_back(detail::compact_day(rows, d));
    }
    if (opts.build_lab) {
      try {
        const std::vector<FrameFeatureRow> rows = gen.lab_rows(s);
        const DayFeatures lab = summarize_day(rows, subj.meta.id, -1);
        subj.lab_features = FeatureVec{lab.h1h2_std, lab.nsam_skewness};
      } catch (const Error&) {
        subj.lab_features.reset();
      }
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

struct ComparisonStats {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double cohens_d = 0.0;
};

struct ExperimentConfig {
  CrossValConfig cv{};
  int repetitions = 10;
  int workers = 1;
};

struct Experiment1Report {
  std::string lab_condition;  // "lab_rainbow" or "lab_spontaneous"
  EvalReport lab;
  EvalReport field;
  ComparisonStats field_vs_lab;  // positive t means field beats lab
  std::size_t subjects_used = 0;
  std::vector<std::string> excluded;  // missing lab features or no valid day
  std::uint64_t seed = 0;
};

// Matched-cohort comparison: the same subjects classified once from the
// in-lab feature vectors and once from feature vectors averaged over all
// their valid field days. Fold accuracies across repetitions feed a Welch
// test and Cohen's d.
inline Experiment1Report run_experiment1(const CohortData& cohort,
                                         Condition lab_condition,
                                         const ExperimentConfig& cfg,
                                         std::uint64_t seed) {
  Experiment1Report report;
  report.lab_condition = to_string(lab_condition);
  report.seed = seed;
  std::vector<SubjectFeatures> lab_feats, field_feats;
  for (const SubjectData& subj : cohort.subjects) {
    if (!subj.lab_features || subj.day_features.empty()) {
      report.excluded.push_back(subj.meta.id);
      continue;
    }
    SubjectFeatures lab;
    lab.subject_id = subj.meta.id;
    lab.group = subj.meta.group;
    lab.pair_id = subj.meta.pair_id;
    lab.feature_vector = *subj.lab_features;
    lab.days_used = 0;
    lab_feats.push_back(std::move(lab));
    field_feats.push_back(aggregate_days(subj.day_features,
                                         subj.day_features.size(),
                                         subj.meta.group, subj.meta.pair_id));
  }
  report.subjects_used = lab_feats.size();

  report.lab = repeat_cross_validation(lab_feats, cfg.cv, cfg.repetitions,
                                       derive_seed(seed, 0));
  report.field = repeat_cross_validation(field_feats, cfg.cv, cfg.repetitions,
                                         derive_seed(seed, 1));

  std::vector<double> lab_accs, field_accs;
  for (const FoldResult& fr : report.lab.fold_results)
    if (!fr.failed) lab_accs.push_back(fr.metrics.accuracy);
  for (const FoldResult& fr : report.field.fold_results)
    if (!fr.failed) field_accs.push_back(fr.metrics.accuracy);
  const TTestResult t = welch_t_test(field_accs, lab_accs);
  report.field_vs_lab = {t.t, t.df, t.p, cohens_d(field_accs, lab_accs)};
  return report;
}

struct CurvePoint {
  int days = 0;
  double mean_accuracy = 0.0;  // over repetitions
  double std_accuracy = 0.0;
  double d_h1h2_std = 0.0;  // control minus pvh, averaged over repetitions
  double d_nsam_skew = 0.0;
};

struct Experiment2Report {
  std::string mode;  // "day_count" or "fixed_duration"
  std::vector<CurvePoint> curve;
  std::vector<std::vector<double>> rep_accuracies;  // [point][repetition]
  PowerFit accuracy_fit;  // on mean accuracy in percent vs day count
  Correlation days_vs_accuracy;  // per-repetition accuracies vs day count
  std::optional<int> threshold_day_1pp;
  std::optional<int> threshold_day_05pp;
  std::size_t subjects_used = 0;
  std::vector<std::string> excluded;
  int repetitions = 0;
  std::uint64_t seed = 0;
  double total_hours = 0.0;        // fixed-duration mode only
  std::size_t min_window_voiced = 0;  // audit: smallest voiced count sampled
  long window_redraws = 0;
};

namespace detail {

// Undersample to balance, cross-validate, return mean fold accuracy plus
// per-feature effect sizes on the balanced set.
struct RepOutcome {
  double accuracy = 0.0;
  double d_h1h2 = 0.0;
  double d_skew = 0.0;
};

inline RepOutcome evaluate_rep(std::span<const SubjectFeatures> feats,
                               const CrossValConfig& cv, std::uint64_t rep_seed) {
  const std::vector<SubjectFeatures> balanced =
      undersample_balance(feats, derive_seed(rep_seed, 1));
  const EvalReport report =
      run_cross_validation(balanced, cv, derive_seed(rep_seed, 2));
  RepOutcome out;
  out.accuracy = report.accuracy.mean;
  std::vector<double> pvh_h, ctl_h, pvh_s, ctl_s;
  for (const SubjectFeatures& sf : balanced) {
    if (sf.group == Group::pvh) {
      pvh_h.push_back(sf.feature_vector[0]);
      pvh_s.push_back(sf.feature_vector[1]);
    } else {
      ctl_h.push_back(sf.feature_vector[0]);
      ctl_s.push_back(sf.feature_vector[1]);
    }
  }
  out.d_h1h2 = cohens_d(ctl_h, pvh_h);
  out.d_skew = cohens_d(ctl_s, pvh_s);
  return out;
}

inline void finalize_curve(Experiment2Report& report,
                           const std::vector<int>& day_counts,
                           const std::vector<std::vector<RepOutcome>>& reps) {
  std::vector<std::pair<double, double>> fit_pts;
  std::vector<double> sp_days, sp_accs;
  for (std::size_t p = 0; p < day_counts.size(); ++p) {
    std::vector<double> accs, dh, ds;
    for (const RepOutcome& r : reps[p]) {
      accs.push_back(r.accuracy);
      dh.push_back(r.d_h1h2);
      ds.push_back(r.d_skew);
      sp_days.push_back(double(day_counts[p]));
      sp_accs.push_back(r.accuracy);
    }
    const SummaryStat acc = summarize_values(accs);
    CurvePoint pt;
    pt.days = day_counts[p];
    pt.mean_accuracy = acc.mean;
    pt.std_accuracy = acc.stddev;
    pt.d_h1h2_std = mean_of(dh);
    pt.d_nsam_skew = mean_of(ds);
    report.curve.push_back(pt);
    report.rep_accuracies.push_back(std::move(accs));
    fit_pts.emplace_back(double(day_counts[p]), 100.0 * acc.mean);
  }
  if (fit_pts.size() >= 3) {
    report.accuracy_fit = fit_power_law(fit_pts);
    try {
      report.threshold_day_1pp = threshold_day(report.accuracy_fit, 1.0);
    } catch (const Error&) {
    }
    try {
      report.threshold_day_05pp = threshold_day(report.accuracy_fit, 0.5);
    } catch (const Error&) {
    }
  }
  if (day_counts.size() >= 2) {
    try {
      report.days_vs_accuracy = spearman_rho(sp_days, sp_accs);
    } catch (const Error& e) {
      // a saturated curve (every repetition at the same accuracy) has no
      // rank order; report the null correlation instead of failing the run
      if (e.code() != ErrorCode::constant_input) throw;
      report.days_vs_accuracy = {0.0, 1.0};
    }
  }
}

}  // namespace detail

// Learning curve over the number of monitoring days: for k = 1..max_days the
// subject features average the first k valid days; every (k, repetition)
// cell rebalances by undersampling and runs a fresh stratified CV.
inline Experiment2Report run_experiment2_day_count(const CohortData& cohort,
                                                   int max_days,
                                                   const ExperimentConfig& cfg,
                                                   std::uint64_t seed) {
  Experiment2Report report;
  report.mode = "day_count";
  report.repetitions = cfg.repetitions;
  report.seed = seed;

  std::vector<const SubjectData*> usable;
  for (const SubjectData& subj : cohort.subjects) {
    if (int(subj.day_features.size()) < max_days)
      report.excluded.push_back(subj.meta.id);
    else
      usable.push_back(&subj);
  }
  report.subjects_used = usable.size();
  if (usable.empty())
    fail(ErrorCode::not_enough_days, "no subject covers the requested days");

  std::vector<int> day_counts;
  for (int k = 1; k <= max_days; ++k) day_counts.push_back(k);

  std::vector<std::vector<detail::RepOutcome>> outcomes(
      day_counts.size(),
      std::vector<detail::RepOutcome>(std::size_t(cfg.repetitions)));
  for (std::size_t p = 0; p < day_counts.size(); ++p) {
    std::vector<SubjectFeatures> feats;
    feats.reserve(usable.size());
    for (const SubjectData* subj : usable)
      feats.push_back(aggregate_days(subj->day_features,
                                     std::size_t(day_counts[p]),
                                     subj->meta.group, subj->meta.pair_id));
    detail::parallel_for(cfg.repetitions, cfg.workers, [&](int r) {
      outcomes[p][std::size_t(r)] =
          detail::evaluate_rep(feats, cfg.cv, seed ^ std::uint64_t(r));
    });
  }
  detail::finalize_curve(report, day_counts, outcomes);
  return report;
}

struct FixedDurationConfig {
  double total_hours = 6.0;
  std::vector<int> day_counts{1, 2, 3, 4};
  WindowSamplerConfig window{};
};

namespace detail {

// Subject features from a set of sampled windows: H1-H2 std and NSAM
// skewness over the union of voiced frames inside the windows, using the
// same bias-adjusted estimators as the day-level path.
inline FeatureVec window_features(const SubjectData& subj,
                                  std::span<const WindowSpec> windows) {
  double s1h = 0.0, s2h = 0.0;
  double s1n = 0.0, s2n = 0.0, s3n = 0.0;
  std::size_t n = 0;
  for (const WindowSpec& w : windows) {
    const SubjectDayFrames* day = nullptr;
    for (const SubjectDayFrames& d : subj.day_frames)
      if (d.day_index == w.day_index) {
        day = &d;
        break;
      }
    if (!day) fail(ErrorCode::not_enough_days, "window on an unknown day");
    const auto lo = std::lower_bound(day->voiced_frames.begin(),
                                     day->voiced_frames.end(),
                                     std::uint32_t(w.start_frame));
    const auto hi = std::lower_bound(
        day->voiced_frames.begin(), day->voiced_frames.end(),
        std::uint32_t(w.start_frame + w.length_frames));
    for (auto it = lo; it != hi; ++it) {
      const std::size_t i = std::size_t(it - day->voiced_frames.begin());
      const double h = day->h1h2_db[i];
      const double v = day->nsam_db[i];
      s1h += h;
      s2h += h * h;
      s1n += v;
      s2n += v * v;
      s3n += v * v * v;
      ++n;
    }
  }
  if (n < 3)
    fail(ErrorCode::insufficient_voicing, "windows hold fewer than 3 voiced frames");
  const double dn = double(n);
  const double mh = s1h / dn;
  const double var_h = (s2h - dn * mh * mh) / (dn - 1.0);
  const double h_std = std::sqrt(std::max(var_h, 0.0));
  const double mn = s1n / dn;
  const double m2 = s2n / dn - mn * mn;
  const double m3 = s3n / dn - 3.0 * mn * (s2n / dn) + 2.0 * mn * mn * mn;
  if (m2 <= 1e-24 * (mn * mn + 1.0))
    fail(ErrorCode::zero_variance, "window NSAM is constant");
  const double g1 = std::sqrt(dn * (dn - 1.0)) / (dn - 2.0) * m3 /
                    (m2 * std::sqrt(m2));
  return {h_std, g1};
}

}  // namespace detail

// Learning curve at a fixed total duration: the same total_hours of audio is
// always analyzed, split into k equal windows drawn from k distinct days.
// Windows below the voiced-frame floor are redrawn inside the sampler.
inline Experiment2Report run_experiment2_fixed_duration(
    const CohortData& cohort, const FixedDurationConfig& fd,
    const ExperimentConfig& cfg, std::uint64_t seed) {
  Experiment2Report report;
  report.mode = "fixed_duration";
  report.repetitions = cfg.repetitions;
  report.seed = seed;
  report.total_hours = fd.total_hours;
  const int max_days =
      *std::max_element(fd.day_counts.begin(), fd.day_counts.end());

  std::vector<const SubjectData*> usable;
  for (const SubjectData& subj : cohort.subjects) {
    if (int(subj.day_frames.size()) < max_days)
      report.excluded.push_back(subj.meta.id);
    else
      usable.push_back(&subj);
  }
  report.subjects_used = usable.size();
  if (usable.empty())
    fail(ErrorCode::not_enough_days, "no subject covers the requested days");

  std::vector<std::vector<detail::RepOutcome>> outcomes(
      fd.day_counts.size(),
      std::vector<detail::RepOutcome>(std::size_t(cfg.repetitions)));
  std::vector<std::size_t> min_voiced(
      fd.day_counts.size() * std::size_t(cfg.repetitions), SIZE_MAX);
  std::vector<long> redraws(
      fd.day_counts.size() * std::size_t(cfg.repetitions), 0);

  for (std::size_t p = 0; p < fd.day_counts.size(); ++p) {
    const int k = fd.day_counts[p];
    detail::parallel_for(cfg.repetitions, cfg.workers, [&](int r) {
      const std::uint64_t rep_seed = seed ^ std::uint64_t(r);
      const std::size_t cell = p * std::size_t(cfg.repetitions) + std::size_t(r);
      std::vector<SubjectFeatures> feats;
      feats.reserve(usable.size());
      for (std::size_t s = 0; s < usable.size(); ++s) {
        const SubjectData& subj = *usable[s];
        std::vector<DayVoicingIndex> days;
        days.reserve(subj.day_frames.size());
        for (const SubjectDayFrames& d : subj.day_frames)
          days.push_back({d.day_index, d.total_frames, d.voiced_frames});
        WindowSampleStats stats;
        const std::vector<WindowSpec> windows = sample_fixed_duration_windows(
            days, std::size_t(k), fd.total_hours,
            derive_seed(rep_seed, 3, s), fd.window, &stats);
        redraws[cell] += stats.redraws;
        for (const WindowSpec& w : windows)
          min_voiced[cell] = std::min(min_voiced[cell], w.voiced_frame_count);
        SubjectFeatures sf;
        sf.subject_id = subj.meta.id;
        sf.group = subj.meta.group;
        sf.pair_id = subj.meta.pair_id;
        sf.feature_vector = detail::window_features(subj, windows);
        sf.days_used = k;
        feats.push_back(std::move(sf));
      }
      outcomes[p][std::size_t(r)] =
          detail::evaluate_rep(feats, cfg.cv, rep_seed);
    });
  }

  report.min_window_voiced = SIZE_MAX;
  for (std::size_t v : min_voiced)
    report.min_window_voiced = std::min(report.min_window_voiced, v);
  if (report.min_window_voiced == SIZE_MAX) report.min_window_voiced = 0;
  for (long r : redraws) report.window_redraws += r;

  detail::finalize_curve(report, fd.day_counts, outcomes);
  return report;
}

struct NullBaselineReport {
  int n_pairs = 0;
  int repetitions = 0;
  int folds = 10;
  std::uint64_t seed = 0;
  double mean_accuracy = 0.0;
  double upper95 = 0.0;  // nearest-rank 95th percentile of rep accuracies
  std::vector<double> rep_accuracies;
};

// Chance floor for the whole evaluation protocol: random two-feature
// vectors with no class signal, rerun end to end. The 95th percentile of
// the repetition accuracies is the bound a real result must clear.
inline NullBaselineReport run_null_baseline(int n_pairs, int repetitions,
                                            const CrossValConfig& cv,
                                            std::uint64_t seed,
                                            int workers = 1) {
  if (n_pairs < cv.folds)
    fail(ErrorCode::class_too_small, "need at least one pair per fold");
  if (repetitions < 1)
    fail(ErrorCode::degenerate_input, "need at least one repetition");
  NullBaselineReport report;
  report.n_pairs = n_pairs;
  report.repetitions = repetitions;
  report.folds = cv.folds;
  report.seed = seed;
  report.rep_accuracies.assign(std::size_t(repetitions), 0.0);

  detail::parallel_for(repetitions, workers, [&](int r) {
    const std::uint64_t rep_seed = seed ^ std::uint64_t(r);
    Rng rng(derive_seed(rep_seed, 1));
    std::vector<SubjectFeatures> feats;
    feats.reserve(std::size_t(n_pairs) * 2);
    char buf[32];
    for (int i = 0; i < 2 * n_pairs; ++i) {
      SubjectFeatures sf;
      std::snprintf(buf, sizeof buf, "N%04d", i);
      sf.subject_id = buf;
      sf.group = i < n_pairs ? Group::pvh : Group::control;
      sf.feature_vector = {rng.normal(), rng.normal()};
      feats.push_back(std::move(sf));
    }
    const EvalReport rep = run_cross_validation(feats, cv, derive_seed(rep_seed, 2));
    report.rep_accuracies[std::size_t(r)] = rep.accuracy.mean;
  });

  report.mean_accuracy = mean_of(report.rep_accuracies);
  std::vector<double> sorted = report.rep_accuracies;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(0.95 * double(sorted.size())));
  report.upper95 = sorted[rank > 0 ? rank - 1 : 0];
  return report;
}

}  // namespace dpi
