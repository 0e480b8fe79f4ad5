#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "dpi/features.hpp"
#include "dpi/rng.hpp"
#include "dpi/synth.hpp"
#include "helpers.hpp"

using Catch::Matchers::WithinAbs;

namespace {

dpi::FrameFeatureRow voiced_row(std::size_t idx, double h1h2, double nsam) {
  dpi::FrameFeatureRow row;
  row.frame_index = idx;
  row.voiced = true;
  row.f0_hz = 200.0;
  row.h1h2_db = h1h2;
  row.nsam_db = nsam;
  return row;
}

dpi::FrameFeatureRow unvoiced_row(std::size_t idx) {
  dpi::FrameFeatureRow row;
  row.frame_index = idx;
  row.nsam_db = -300.0;
  return row;
}

}  // namespace

TEST_CASE("sample std and skewness match hand-computed values", "[features]") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  REQUIRE_THAT(dpi::sample_std(a), WithinAbs(std::sqrt(5.0 / 3.0), 1e-12));

  // m2 = 2/9, m3 = 2/27 over {0,0,1}; G1 = sqrt(6)/1 * (2/27)/(2/9)^1.5
  const std::vector<double> b{0.0, 0.0, 1.0};
  REQUIRE_THAT(dpi::skewness(b), WithinAbs(std::sqrt(3.0), 1e-9));

  const std::vector<double> sym{-2.0, -1.0, 0.0, 1.0, 2.0};
  REQUIRE_THAT(dpi::skewness(sym), WithinAbs(0.0, 1e-12));

  REQUIRE(error_code_of([&] { dpi::sample_std({{1.0}}); }) ==
          dpi::ErrorCode::too_few_samples);
  REQUIRE(error_code_of([&] { dpi::skewness({{1.0, 2.0}}); }) ==
          dpi::ErrorCode::too_few_samples);
  const std::vector<double> flat(10, 3.25);
  REQUIRE(error_code_of([&] { dpi::skewness(flat); }) ==
          dpi::ErrorCode::zero_variance);
}

TEST_CASE("estimators converge on known distributions", "[features]") {
  dpi::Rng rng(2024);
  std::vector<double> normals(20000);
  for (double& v : normals) v = rng.normal();
  REQUIRE_THAT(dpi::sample_std(normals), WithinAbs(1.0, 0.03));
  REQUIRE_THAT(dpi::skewness(normals), WithinAbs(0.0, 0.05));

  // skew-normal sample against the analytic skewness of its shape
  const double alpha = -5.0;
  std::vector<double> skewed(50000);
  for (double& v : skewed) v = rng.skew_normal(alpha);
  REQUIRE_THAT(dpi::skewness(skewed),
               WithinAbs(dpi::skew_normal_skewness(alpha), 0.05));
}

TEST_CASE("skewness is invariant to positive affine maps", "[features]") {
  dpi::Rng rng(909);
  std::vector<double> base(400);
  for (double& v : base) v = rng.skew_normal(-3.0);
  const double reference = dpi::skewness(base);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = std::exp(rng.uniform(-2.3, 2.3));  // 0.1 .. 10
    const double b = rng.uniform(-100.0, 100.0);
    std::vector<double> mapped(base);
    for (double& v : mapped) v = a * v + b;
    REQUIRE_THAT(dpi::skewness(mapped), WithinAbs(reference, 1e-9));
  }
}

TEST_CASE("day summaries use voiced frames only", "[features]") {
  std::vector<dpi::FrameFeatureRow> rows;
  rows.push_back(voiced_row(0, 2.0, -20.0));
  rows.push_back(unvoiced_row(1));
  rows.push_back(voiced_row(2, 4.0, -22.0));
  rows.push_back(voiced_row(3, 6.0, -18.0));
  rows.push_back(unvoiced_row(4));

  const dpi::DayFeatures day = dpi::summarize_day(rows, "S1", 3);
  REQUIRE(day.subject_id == "S1");
  REQUIRE(day.day_index == 3);
  REQUIRE(day.voiced_frame_count == 3);
  REQUIRE(day.total_frame_count == 5);
  REQUIRE_THAT(day.h1h2_std, WithinAbs(2.0, 1e-12));  // std of {2,4,6}
  // {-20,-22,-18} is symmetric
  REQUIRE_THAT(day.nsam_skewness, WithinAbs(0.0, 1e-12));

  std::vector<dpi::FrameFeatureRow> quiet(10);
  for (std::size_t i = 0; i < quiet.size(); ++i) quiet[i] = unvoiced_row(i);
  REQUIRE(error_code_of([&] { dpi::summarize_day(quiet, "S1", 0); }) ==
          dpi::ErrorCode::insufficient_voicing);
}

TEST_CASE("day validity needs six hours of frames", "[features]") {
  const auto day_with = [](std::size_t total) {
    dpi::DayFeatures d;
    d.subject_id = "S1";
    d.total_frame_count = total;
    return d;
  };
  const std::vector<dpi::DayFeatures> days{
      day_with(431999), day_with(432000), day_with(500000)};
  const auto kept = dpi::filter_valid_days(days);
  REQUIRE(kept.size() == 2);
  REQUIRE(kept[0].total_frame_count == 432000);  // boundary is inclusive
  REQUIRE(dpi::filter_valid_days({}).empty());
}

TEST_CASE("day aggregation averages the first k days", "[features]") {
  std::vector<dpi::DayFeatures> days(3);
  for (int i = 0; i < 3; ++i) {
    days[i].subject_id = "S1";
    days[i].day_index = i;
  }
  days[0].h1h2_std = 2.0;
  days[1].h1h2_std = 4.0;
  days[2].h1h2_std = 9.0;
  days[0].nsam_skewness = -1.0;
  days[1].nsam_skewness = -0.5;
  days[2].nsam_skewness = 0.3;

  const auto one = dpi::aggregate_days(days, 1, dpi::Group::pvh);
  REQUIRE(one.feature_vector[0] == 2.0);
  REQUIRE(one.feature_vector[1] == -1.0);
  REQUIRE(one.days_used == 1);

  const auto two = dpi::aggregate_days(days, 2, dpi::Group::pvh, "pair7");
  REQUIRE_THAT(two.feature_vector[0], WithinAbs(3.0, 1e-12));
  REQUIRE_THAT(two.feature_vector[1], WithinAbs(-0.75, 1e-12));
  REQUIRE(two.pair_id.value() == "pair7");

  REQUIRE(error_code_of([&] { dpi::aggregate_days(days, 4, dpi::Group::pvh); }) ==
          dpi::ErrorCode::not_enough_days);
  REQUIRE(error_code_of([&] { dpi::aggregate_days(days, 0, dpi::Group::pvh); }) ==
          dpi::ErrorCode::not_enough_days);

  // identical days make the average exactly that day
  std::vector<dpi::DayFeatures> same(5, days[0]);
  const auto all = dpi::aggregate_days(same, 5, dpi::Group::control);
  REQUIRE(all.feature_vector[0] == days[0].h1h2_std);
  REQUIRE(all.feature_vector[1] == days[0].nsam_skewness);
}

namespace {

// a synthetic day with voiced frames sprinkled uniformly at a given rate
std::vector<std::uint32_t> uniform_voiced(std::size_t total, double rate,
                                          std::uint64_t seed) {
  dpi::Rng rng(seed);
  std::vector<std::uint32_t> idx;
  for (std::size_t i = 0; i < total; ++i)
    if (rng.uniform() < rate) idx.push_back(std::uint32_t(i));
  return idx;
}

}  // namespace

TEST_CASE("window sampling quantizes the budget over k days", "[features]") {
  const std::size_t total = 435600;  // a bit over six hours
  std::vector<std::vector<std::uint32_t>> voiced;
  std::vector<dpi::DayVoicingIndex> days;
  for (int d = 0; d < 7; ++d) {
    voiced.push_back(uniform_voiced(total, 0.4, 100 + std::uint64_t(d)));
    days.push_back({d, total, voiced.back()});
  }

  dpi::WindowSamplerConfig cfg;
  const auto two = dpi::sample_fixed_duration_windows(days, 2, 6.0, 5, cfg);
  REQUIRE(two.size() == 2);
  REQUIRE(two[0].length_frames == 216000);
  REQUIRE(two[1].length_frames == 216000);
  REQUIRE(two[0].day_index != two[1].day_index);

  const auto seven = dpi::sample_fixed_duration_windows(days, 7, 6.0, 5, cfg);
  REQUIRE(seven.size() == 7);
  std::vector<bool> used(7, false);
  for (const dpi::WindowSpec& w : seven) {
    REQUIRE(w.length_frames == 61714);  // floor(432000 / 7)
    REQUIRE(w.start_frame + w.length_frames <= total);
    REQUIRE(w.voiced_frame_count >= cfg.min_voiced_frames);
    REQUIRE_FALSE(used[std::size_t(w.day_index)]);  // distinct days
    used[std::size_t(w.day_index)] = true;
  }

  // same seed, same windows
  const auto again = dpi::sample_fixed_duration_windows(days, 7, 6.0, 5, cfg);
  for (std::size_t i = 0; i < seven.size(); ++i) {
    REQUIRE(seven[i].day_index == again[i].day_index);
    REQUIRE(seven[i].start_frame == again[i].start_frame);
  }
}

TEST_CASE("window sampling redraws until the voicing rule holds", "[features]") {
  const std::size_t total = 435600;
  // voiced frames only in the back half of each day; early draws must fail
  std::vector<std::uint32_t> back_half;
  for (std::size_t i = total / 2; i < total; ++i)
    back_half.push_back(std::uint32_t(i));
  std::vector<dpi::DayVoicingIndex> days;
  for (int d = 0; d < 4; ++d) days.push_back({d, total, back_half});

  dpi::WindowSamplerConfig cfg;
  cfg.max_retries = 1000;
  dpi::WindowSampleStats stats;
  const auto windows =
      dpi::sample_fixed_duration_windows(days, 2, 6.0, 11, cfg, &stats);
  for (const dpi::WindowSpec& w : windows)
    REQUIRE(w.voiced_frame_count >= cfg.min_voiced_frames);
  REQUIRE(stats.draws == stats.redraws + int(windows.size()));

  // nearly voiceless days exhaust the retry budget
  std::vector<std::uint32_t> sparse{10, 20, 30};
  std::vector<dpi::DayVoicingIndex> bad;
  for (int d = 0; d < 4; ++d) bad.push_back({d, total, sparse});
  dpi::WindowSamplerConfig tight;
  tight.max_retries = 50;
  REQUIRE(error_code_of([&] {
            dpi::sample_fixed_duration_windows(bad, 2, 6.0, 11, tight);
          }) == dpi::ErrorCode::window_search_exhausted);

  REQUIRE(error_code_of([&] {
            dpi::sample_fixed_duration_windows(days, 5, 6.0, 11, cfg);
          }) == dpi::ErrorCode::not_enough_days);
}

TEST_CASE("window lengths differ from the exact split by under a frame",
          "[features]") {
  const std::size_t total = 435600;
  const auto voiced = uniform_voiced(total, 0.5, 77);
  std::vector<dpi::DayVoicingIndex> days;
  for (int d = 0; d < 9; ++d) days.push_back({d, total, voiced});
  for (std::size_t k : {1, 3, 5, 9}) {
    const auto windows =
        dpi::sample_fixed_duration_windows(days, k, 6.0, 3, {});
    const double exact = 432000.0 / double(k);
    for (const dpi::WindowSpec& w : windows) {
      REQUIRE(double(w.length_frames) <= exact);
      REQUIRE(double(w.length_frames) > exact - 1.0);
    }
  }
}
