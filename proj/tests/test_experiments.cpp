#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dpi/experiments.hpp"
#include "helpers.hpp"

using Catch::Matchers::WithinAbs;

namespace {

// small but separable cohort: fast to generate, easy to classify
dpi::CohortSpec small_spec(std::uint64_t seed) {
  dpi::CohortSpec spec;
  spec.n_pvh = 15;
  spec.n_control = 15;
  spec.days_per_subject = 7;
  spec.day_hours = 0.05;  // 3600 frames
  spec.voicing_rate = 0.4;
  spec.h1h2_drift_std = 0.15;
  spec.nsam_drift_std = 0.75;
  spec.seed = seed;
  return spec;
}

dpi::CohortBuildOptions tiny_days() {
  dpi::CohortBuildOptions opts;
  opts.min_hours = 0.05;  // accept the shortened synthetic days
  return opts;
}

}  // namespace

TEST_CASE("parallel results do not depend on the worker count", "[experiments]") {
  std::vector<double> one(40, 0.0), four(40, 0.0);
  dpi::detail::parallel_for(40, 1, [&](int i) {
    one[std::size_t(i)] = std::sqrt(double(i)) + double(i % 7);
  });
  dpi::detail::parallel_for(40, 4, [&](int i) {
    four[std::size_t(i)] = std::sqrt(double(i)) + double(i % 7);
  });
  REQUIRE(one == four);

  // exceptions from workers surface to the caller
  REQUIRE_THROWS_AS(dpi::detail::parallel_for(
                        10, 3,
                        [&](int i) {
                          if (i == 5)
                            dpi::fail(dpi::ErrorCode::degenerate_input, "boom");
                        }),
                    dpi::Error);
}

TEST_CASE("cohort build drops short and silent days", "[experiments]") {
  dpi::CohortSpec spec = small_spec(77);
  spec.n_pvh = 2;
  spec.n_control = 2;
  const dpi::CohortGenerator gen = dpi::gen_cohort(spec);

  dpi::CohortBuildOptions opts = tiny_days();
  opts.keep_frames = true;
  opts.build_lab = true;
  const dpi::CohortData data = dpi::build_cohort(gen, opts);
  REQUIRE(data.subjects.size() == 4);
  for (const dpi::SubjectData& subj : data.subjects) {
    REQUIRE(subj.day_features.size() == 7);
    REQUIRE(subj.day_frames.size() == 7);
    REQUIRE(subj.lab_features.has_value());
    for (std::size_t d = 0; d < subj.day_features.size(); ++d) {
      REQUIRE(subj.day_features[d].total_frame_count == 3600);
      // compact payload holds exactly the voiced frames of the day
      REQUIRE(subj.day_frames[d].voiced_frames.size() ==
              subj.day_features[d].voiced_frame_count);
      REQUIRE(subj.day_frames[d].total_frames == 3600);
    }
  }

  // a six-hour floor rejects every 0.05-hour day
  const dpi::CohortData strict = dpi::build_cohort(gen, {});
  for (const dpi::SubjectData& subj : strict.subjects)
    REQUIRE(subj.day_features.empty());
}

TEST_CASE("field monitoring beats a signal-free lab session", "[experiments]") {
  // lab parameters are identical across groups, so only the field distribution
  // carries the class signal
  const dpi::CohortGenerator gen = dpi::gen_cohort(small_spec(11));
  dpi::CohortBuildOptions opts = tiny_days();
  opts.build_lab = true;
  const dpi::CohortData data = dpi::build_cohort(gen, opts);

  dpi::ExperimentConfig cfg;
  cfg.cv.folds = 5;
  cfg.repetitions = 10;
  const dpi::Experiment1Report report =
      dpi::run_experiment1(data, dpi::Condition::lab_rainbow, cfg, 400);
  REQUIRE(report.subjects_used == 30);
  REQUIRE(report.excluded.empty());
  REQUIRE(report.lab_condition == "lab_rainbow");
  REQUIRE(report.lab.fold_results.size() == 50);
  REQUIRE(report.field.fold_results.size() == 50);

  REQUIRE(report.field.accuracy.mean > 0.8);
  REQUIRE(report.lab.accuracy.mean < 0.7);  // nothing to learn in the lab
  REQUIRE(report.field_vs_lab.t > 0.0);
  REQUIRE(report.field_vs_lab.p < 0.01);
  REQUIRE(report.field_vs_lab.cohens_d > 0.8);

  // same seed reproduces the same numbers
  const dpi::Experiment1Report again =
      dpi::run_experiment1(data, dpi::Condition::lab_rainbow, cfg, 400);
  REQUIRE(again.field.accuracy.mean == report.field.accuracy.mean);
  REQUIRE(again.field_vs_lab.t == report.field_vs_lab.t);
}

TEST_CASE("experiment1 excludes subjects without lab features", "[experiments]") {
  const dpi::CohortGenerator gen = dpi::gen_cohort(small_spec(12));
  dpi::CohortBuildOptions opts = tiny_days();
  opts.build_lab = true;
  dpi::CohortData data = dpi::build_cohort(gen, opts);
  data.subjects[0].lab_features.reset();
  data.subjects[20].day_features.clear();

  dpi::ExperimentConfig cfg;
  cfg.cv.folds = 5;
  cfg.repetitions = 4;
  const dpi::Experiment1Report report =
      dpi::run_experiment1(data, dpi::Condition::lab_spontaneous, cfg, 9);
  REQUIRE(report.subjects_used == 28);
  REQUIRE(report.excluded.size() == 2);
  REQUIRE(report.excluded[0] == data.subjects[0].meta.id);
  REQUIRE(report.excluded[1] == data.subjects[20].meta.id);
}

TEST_CASE("day-count curve rises on drifting data", "[experiments]") {
  // strong day-to-day drift makes single days noisy; averaging more days
  // recovers the subject's underlying parameters
  dpi::CohortSpec spec = small_spec(21);
  spec.pvh = {2.0, 2.3, -3.5};
  spec.control = {3.0, 3.0, -1.0};
  spec.h1h2_drift_std = 0.5;
  spec.nsam_drift_std = 2.5;
  const dpi::CohortData data =
      dpi::build_cohort(dpi::gen_cohort(spec), tiny_days());

  dpi::ExperimentConfig cfg;
  cfg.cv.folds = 5;
  cfg.repetitions = 12;
  const dpi::Experiment2Report report =
      dpi::run_experiment2_day_count(data, 7, cfg, 1000);
  REQUIRE(report.mode == "day_count");
  REQUIRE(report.curve.size() == 7);
  REQUIRE(report.rep_accuracies.size() == 7);
  for (const auto& reps : report.rep_accuracies)
    REQUIRE(reps.size() == 12);
  for (std::size_t p = 0; p < report.curve.size(); ++p)
    REQUIRE(report.curve[p].days == int(p) + 1);

  // more days help: the last point beats the first and the trend is positive
  REQUIRE(report.curve.back().mean_accuracy >
          report.curve.front().mean_accuracy);
  REQUIRE(report.days_vs_accuracy.rho > 0.2);
  REQUIRE(report.accuracy_fit.a < 0.0);  // rising saturating curve
  REQUIRE(report.accuracy_fit.b < 0.0);

  // effect sizes are plumbed through with the planted sign (control > pvh
  // on H1-H2 std, control less left-skewed on NSAM)
  REQUIRE(report.curve.back().d_h1h2_std > 0.0);
  REQUIRE(report.curve.back().d_nsam_skew > 0.0);
}

TEST_CASE("day-count curve is flat when no signal is planted", "[experiments]") {
  dpi::CohortSpec spec = small_spec(31);
  spec.pvh = spec.control;  // identical groups
  const dpi::CohortData data =
      dpi::build_cohort(dpi::gen_cohort(spec), tiny_days());
  dpi::ExperimentConfig cfg;
  cfg.cv.folds = 5;
  cfg.repetitions = 10;
  const dpi::Experiment2Report report =
      dpi::run_experiment2_day_count(data, 5, cfg, 3);
  for (const dpi::CurvePoint& pt : report.curve) {
    REQUIRE(pt.mean_accuracy > 0.25);
    REQUIRE(pt.mean_accuracy < 0.75);
  }
  REQUIRE(std::abs(report.days_vs_accuracy.rho) < 0.5);
}

TEST_CASE("day-count runs are deterministic and honor exclusions",
          "[experiments]") {
  const dpi::CohortData data =
      dpi::build_cohort(dpi::gen_cohort(small_spec(55)), tiny_days());
  dpi::ExperimentConfig cfg;
  cfg.cv.folds = 5;
  cfg.repetitions = 6;
  const dpi::Experiment2Report a =
      dpi::run_experiment2_day_count(data, 4, cfg, 77);
  dpi::ExperimentConfig wide = cfg;
  wide.workers = 4;
  const dpi::Experiment2Report b =
      dpi::run_experiment2_day_count(data, 4, wide, 77);
  REQUIRE(a.rep_accuracies == b.rep_accuracies);
  REQUIRE(a.accuracy_fit.b == b.accuracy_fit.b);

  // asking for more days than any subject has is an error
  REQUIRE(error_code_of([&] {
            dpi::run_experiment2_day_count(data, 9, cfg, 1);
          }) == dpi::ErrorCode::not_enough_days);

  // a subject short on valid days is excluded, not fatal
  dpi::CohortData tail = data;
  tail.subjects[0].day_features.resize(2);
  const dpi::Experiment2Report c =
      dpi::run_experiment2_day_count(tail, 4, cfg, 77);
  REQUIRE(c.subjects_used == data.subjects.size() - 1);
  REQUIRE(c.excluded == std::vector<std::string>{tail.subjects[0].meta.id});
}

TEST_CASE("fixed-duration windows respect the voicing floor", "[experiments]") {
  dpi::CohortSpec spec = small_spec(61);
  spec.n_pvh = 10;
  spec.n_control = 10;
  spec.days_per_subject = 4;
  spec.day_hours = 0.3;  // 21600 frames per day
  spec.voicing_rate = 0.5;
  const dpi::CohortGenerator gen = dpi::gen_cohort(spec);
  dpi::CohortBuildOptions opts;
  opts.min_hours = 0.3;
  opts.keep_frames = true;
  const dpi::CohortData data = dpi::build_cohort(gen, opts);

  dpi::FixedDurationConfig fd;
  fd.total_hours = 0.2;  // 14400 frames split across k windows
  fd.day_counts = {1, 2, 3, 4};
  fd.window.min_voiced_frames = 1500;
  dpi::ExperimentConfig cfg;
  cfg.cv.folds = 5;
  cfg.repetitions = 5;
  const dpi::Experiment2Report report =
      dpi::run_experiment2_fixed_duration(data, fd, cfg, 8000);
  REQUIRE(report.mode == "fixed_duration");
  REQUIRE(report.total_hours == 0.2);
  REQUIRE(report.curve.size() == 4);
  REQUIRE(report.subjects_used == 20);
  // every sampled window cleared the audit floor
  REQUIRE(report.min_window_voiced >= 1500);

  // same seed and a different worker count give identical curves
  dpi::ExperimentConfig wide = cfg;
  wide.workers = 3;
  const dpi::Experiment2Report again =
      dpi::run_experiment2_fixed_duration(data, fd, wide, 8000);
  REQUIRE(again.rep_accuracies == report.rep_accuracies);
  REQUIRE(again.min_window_voiced == report.min_window_voiced);
  REQUIRE(again.window_redraws == report.window_redraws);
}

TEST_CASE("window features match a direct computation", "[experiments]") {
  dpi::SubjectData subj;
  subj.meta = {"S1", dpi::Group::pvh, std::nullopt};
  dpi::SubjectDayFrames day;
  day.day_index = 0;
  day.total_frames = 100;
  dpi::Rng rng(5);
  std::vector<double> h_all, n_all;
  for (std::uint32_t i = 0; i < 100; i += 2) {
    day.voiced_frames.push_back(i);
    day.h1h2_db.push_back(float(rng.normal() * 2.0 + 3.0));
    day.nsam_db.push_back(float(rng.skew_normal(-2.0) * 6.0 - 20.0));
  }
  subj.day_frames.push_back(day);

  dpi::WindowSpec w;
  w.day_index = 0;
  w.start_frame = 10;
  w.length_frames = 60;  // frames 10..69: voiced indices 10,12,...,68
  w.voiced_frame_count = 30;
  const dpi::FeatureVec fv =
      dpi::detail::window_features(subj, std::vector<dpi::WindowSpec>{w});

  for (std::size_t i = 0; i < day.voiced_frames.size(); ++i) {
    if (day.voiced_frames[i] >= 10 && day.voiced_frames[i] < 70) {
      h_all.push_back(double(day.h1h2_db[i]));
      n_all.push_back(double(day.nsam_db[i]));
    }
  }
  REQUIRE(h_all.size() == 30);
  REQUIRE_THAT(fv[0], WithinAbs(dpi::sample_std(h_all), 1e-9));
  REQUIRE_THAT(fv[1], WithinAbs(dpi::skewness(n_all), 1e-9));
}

TEST_CASE("null baseline stays at chance and is reproducible", "[experiments]") {
  dpi::CrossValConfig cv;
  cv.folds = 10;
  const dpi::NullBaselineReport report =
      dpi::run_null_baseline(20, 60, cv, 12345);
  REQUIRE(report.rep_accuracies.size() == 60);
  REQUIRE_THAT(report.mean_accuracy, WithinAbs(0.5, 0.03));
  REQUIRE(report.upper95 >= report.mean_accuracy);
  REQUIRE(report.upper95 < 0.75);
  // the 95th percentile is one of the observed values (nearest rank)
  bool found = false;
  for (double acc : report.rep_accuracies)
    if (acc == report.upper95) found = true;
  REQUIRE(found);

  const dpi::NullBaselineReport again =
      dpi::run_null_baseline(20, 60, cv, 12345, 4);
  REQUIRE(again.rep_accuracies == report.rep_accuracies);

  const dpi::NullBaselineReport other =
      dpi::run_null_baseline(20, 60, cv, 54321);
  REQUIRE(other.rep_accuracies != report.rep_accuracies);

  REQUIRE(error_code_of([&] { dpi::run_null_baseline(5, 10, cv, 1); }) ==
          dpi::ErrorCode::class_too_small);
  REQUIRE(error_code_of([&] { dpi::run_null_baseline(20, 0, cv, 1); }) ==
          dpi::ErrorCode::degenerate_input);
}
