// Command-line front end for the daily phonotrauma index pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure (bad input data,
// unmet analysis precondition, I/O trouble).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpi/config.hpp"
#include "dpi/error.hpp"
#include "dpi/eval.hpp"
#include "dpi/experiments.hpp"
#include "dpi/io.hpp"
#include "dpi/signal.hpp"
#include "dpi/stats.hpp"
#include "dpi/synth.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  bool quiet = false;
  std::optional<int> reps;
  std::optional<int> folds;
  std::optional<int> workers;
};

dpi::ToolkitConfig effective_config(const GlobalOpts& g) {
  dpi::ToolkitConfig cfg;
  if (!g.config_path.empty()) cfg = dpi::load_toolkit_config(g.config_path);
  if (g.reps) cfg.repetitions = *g.reps;
  if (g.folds) cfg.cv.folds = *g.folds;
  if (g.workers) cfg.workers = *g.workers;
  return cfg;
}

// Config echo for results files. The worker count steers execution, not the
// numbers, and results must stay byte-identical across worker counts, so it
// is dropped from the echo.
nlohmann::json results_config(const dpi::ToolkitConfig& cfg) {
  nlohmann::json j = dpi::to_json(cfg);
  j.erase("workers");
  return j;
}

std::uint64_t effective_seed(const GlobalOpts& g) {
  if (g.seed_set) return g.seed;
  if (const char* env = std::getenv("DPI_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0') return std::uint64_t(v);
  }
  return 0;
}

void info(const GlobalOpts& g, const std::string& line) {
  if (!g.quiet) std::printf("%s\n", line.c_str());
}

std::filesystem::path out_path(const GlobalOpts& g, const std::string& name) {
  std::filesystem::create_directories(g.out_dir);
  return std::filesystem::path(g.out_dir) / name;
}

// Frame rows for every recording in the manifest, tagged for the CSV.
std::vector<dpi::FrameCsvRow> extract_all(const dpi::Manifest& manifest,
                                          const dpi::ToolkitConfig& cfg,
                                          const GlobalOpts& g) {
  dpi::FeatureExtractionConfig fec;
  fec.frame_ms = cfg.frame_ms;
  fec.voicing = cfg.voicing;
  fec.h1h2 = cfg.h1h2;
  std::vector<dpi::FrameCsvRow> all;
  for (const dpi::ManifestSubject& subj : manifest.subjects) {
    for (const dpi::ManifestRecording& mr : subj.recordings) {
      const std::filesystem::path wav =
          dpi::resolve_recording_path(manifest, mr);
      dpi::AccelRecording rec = dpi::read_wav(wav);
      rec.subject_id = subj.id;
      rec.condition = mr.condition;
      rec.day_index = mr.day;
      if (rec.sample_rate_hz != 11025 && !g.quiet)
        std::fprintf(stderr, "note: %s has sample rate %d Hz\n",
                     wav.string().c_str(), rec.sample_rate_hz);
      const dpi::ExtractionResult res = dpi::extract_frame_features(rec, fec);
      for (const dpi::FrameFeatureRow& row : res.rows)
        all.push_back({subj.id, mr.condition, mr.day, row});
    }
  }
  return all;
}

void run_synth(const GlobalOpts& g, const dpi::CohortSpec& spec_in) {
  dpi::CohortSpec spec = spec_in;
  spec.seed = effective_seed(g);
  const dpi::CohortGenerator gen = dpi::gen_cohort(spec);

  dpi::Manifest manifest;
  std::vector<dpi::FrameCsvRow> rows;
  for (std::size_t s = 0; s < gen.subject_count(); ++s) {
    const dpi::SubjectMeta& meta = gen.subject(s);
    dpi::ManifestSubject ms;
    ms.id = meta.id;
    ms.group = meta.group;
    ms.pair_id = meta.pair_id;
    for (int d = 0; d < spec.days_per_subject; ++d) {
      for (const dpi::FrameFeatureRow& row : gen.day_rows(s, d))
        rows.push_back({meta.id, dpi::Condition::field, d, row});
      ms.recordings.push_back({"", dpi::Condition::field, d});
    }
    if (spec.lab_frames > 0) {
      for (const dpi::FrameFeatureRow& row : gen.lab_rows(s))
        rows.push_back({meta.id, dpi::Condition::lab_rainbow, std::nullopt, row});
      ms.recordings.push_back({"", dpi::Condition::lab_rainbow, std::nullopt});
    }
    manifest.subjects.push_back(std::move(ms));
  }
  dpi::save_manifest(manifest, out_path(g, "manifest.json"));
  dpi::write_frame_csv(rows, out_path(g, "frame_features.csv"));
  info(g, "wrote manifest.json and frame_features.csv (" +
              std::to_string(rows.size()) + " rows)");
}

void run_features(const GlobalOpts& g, const std::string& frames_path,
                  const std::string& manifest_path) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const dpi::Manifest manifest = dpi::load_manifest(manifest_path);
  const std::vector<dpi::FrameCsvRow> rows = dpi::read_frame_csv(frames_path);
  dpi::AssembleOptions opts;
  opts.min_hours = cfg.min_hours;
  opts.frame_seconds = cfg.frame_ms / 1000.0;
  const dpi::CohortData cohort = dpi::assemble_cohort(manifest, rows, opts);

  std::vector<dpi::DayFeatures> days;
  std::vector<dpi::SubjectFeatures> subjects;
  for (const dpi::SubjectData& subj : cohort.subjects) {
    days.insert(days.end(), subj.day_features.begin(),
                subj.day_features.end());
    if (!subj.day_features.empty())
      subjects.push_back(dpi::aggregate_days(subj.day_features,
                                             subj.day_features.size(),
                                             subj.meta.group,
                                             subj.meta.pair_id));
  }
  dpi::write_day_features_csv(days, out_path(g, "day_features.csv"));
  dpi::write_subject_features_csv(subjects,
                                  out_path(g, "subject_features.csv"));
  info(g, "wrote features for " + std::to_string(subjects.size()) +
              " subjects over " + std::to_string(days.size()) + " valid days");
}

void run_calibrate(const GlobalOpts& g, const std::string& pairs_path) {
  std::ifstream in(pairs_path);
  if (!in) dpi::fail(dpi::ErrorCode::io_error, "cannot open " + pairs_path);
  std::string line;
  if (!std::getline(in, line) ||
      (line != "nsam_db,spl_db" && line != "nsam_db,spl_db\r"))
    dpi::fail(dpi::ErrorCode::schema_mismatch,
              "expected header 'nsam_db,spl_db'");
  std::vector<std::pair<double, double>> pairs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = dpi::detail::split_csv_line(line);
    if (fields.size() != 2)
      dpi::fail(dpi::ErrorCode::parse_error,
                "expected 2 fields on line " + std::to_string(line_no));
    pairs.emplace_back(dpi::detail::parse_double(fields[0], "nsam_db", line_no),
                       dpi::detail::parse_double(fields[1], "spl_db", line_no));
  }
  const dpi::CalibrationModel model = dpi::fit_calibration(pairs);
  dpi::write_results("calibration", nlohmann::json::object(),
                     dpi::to_json(model), out_path(g, "calibration.json"));
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "spl = %.4f * nsam + %.4f  (residual rms %.4f dB, n = %zu)",
                model.slope, model.intercept, model.residual_rms,
                pairs.size());
  info(g, buf);
}

void run_crossval(const GlobalOpts& g, const std::string& features_path) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const std::vector<dpi::SubjectFeatures> subjects =
      dpi::read_subject_features_csv(features_path);
  const dpi::EvalReport report = dpi::repeat_cross_validation(
      subjects, cfg.cv, cfg.repetitions, effective_seed(g));
  dpi::write_results("crossval", results_config(cfg), dpi::to_json(report),
                     out_path(g, "results_crossval.json"));
  dpi::emit_plot_data(report, g.out_dir);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "accuracy %.1f%% +/- %.1f (folds), auc %.3f, %d x %d folds",
                100.0 * report.accuracy.mean, 100.0 * report.accuracy.stddev,
                report.pooled_auc, report.repetitions, report.folds);
  info(g, buf);
}

dpi::CohortData load_cohort(const GlobalOpts& g, const std::string& frames_path,
                            const std::string& manifest_path,
                            bool keep_frames,
                            std::optional<dpi::Condition> lab) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const dpi::Manifest manifest = dpi::load_manifest(manifest_path);
  const std::vector<dpi::FrameCsvRow> rows = dpi::read_frame_csv(frames_path);
  dpi::AssembleOptions opts;
  opts.min_hours = cfg.min_hours;
  opts.frame_seconds = cfg.frame_ms / 1000.0;
  opts.keep_frames = keep_frames;
  opts.lab_condition = lab;
  return dpi::assemble_cohort(manifest, rows, opts);
}

void run_exp1(const GlobalOpts& g, const std::string& frames_path,
              const std::string& manifest_path, const std::string& lab_name) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const auto lab = dpi::condition_from_string(
      lab_name == "rainbow" ? "lab_rainbow"
                            : lab_name == "spontaneous" ? "lab_spontaneous"
                                                        : lab_name);
  if (!lab || *lab == dpi::Condition::field)
    dpi::fail(dpi::ErrorCode::missing_condition,
              "lab condition must be rainbow or spontaneous");
  const dpi::CohortData cohort =
      load_cohort(g, frames_path, manifest_path, false, lab);
  dpi::ExperimentConfig ec{cfg.cv, cfg.repetitions, cfg.workers};
  const dpi::Experiment1Report report =
      dpi::run_experiment1(cohort, *lab, ec, effective_seed(g));
  dpi::write_results("experiment1", results_config(cfg), dpi::to_json(report),
                     out_path(g, "results_exp1.json"));
  dpi::emit_plot_data(report.field, g.out_dir, "roc");
  dpi::emit_plot_data(report.lab, g.out_dir, "roc_lab");
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "lab %.1f%% vs field %.1f%%  (t=%.2f, p=%.2g, d=%.2f, n=%zu)",
                100.0 * report.lab.accuracy.mean,
                100.0 * report.field.accuracy.mean, report.field_vs_lab.t,
                report.field_vs_lab.p, report.field_vs_lab.cohens_d,
                report.subjects_used);
  info(g, buf);
}

void print_curve(const GlobalOpts& g, const dpi::Experiment2Report& report) {
  for (const dpi::CurvePoint& p : report.curve) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %d day%s: %.1f%% +/- %.1f", p.days,
                  p.days == 1 ? " " : "s", 100.0 * p.mean_accuracy,
                  100.0 * p.std_accuracy);
    info(g, buf);
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "fit a=%.2f b=%.3f c=%.2f  rho=%.2f (p=%.2g)",
                report.accuracy_fit.a, report.accuracy_fit.b,
                report.accuracy_fit.c, report.days_vs_accuracy.rho,
                report.days_vs_accuracy.p);
  info(g, buf);
  if (report.threshold_day_1pp)
    info(g, "gain drops below 1.0 pp after day " +
                std::to_string(*report.threshold_day_1pp));
  if (report.threshold_day_05pp)
    info(g, "gain drops below 0.5 pp after day " +
                std::to_string(*report.threshold_day_05pp));
}

void run_exp2a(const GlobalOpts& g, const std::string& frames_path,
               const std::string& manifest_path, int max_days) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const dpi::CohortData cohort =
      load_cohort(g, frames_path, manifest_path, false, std::nullopt);
  dpi::ExperimentConfig ec{cfg.cv, cfg.repetitions, cfg.workers};
  const dpi::Experiment2Report report = dpi::run_experiment2_day_count(
      cohort, max_days, ec, effective_seed(g));
  dpi::write_results("experiment2_day_count", results_config(cfg),
                     dpi::to_json(report), out_path(g, "results_exp2a.json"));
  dpi::emit_plot_data(report, g.out_dir);
  print_curve(g, report);
}

void run_exp2b(const GlobalOpts& g, const std::string& frames_path,
               const std::string& manifest_path,
               const std::vector<int>& day_counts) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const dpi::CohortData cohort =
      load_cohort(g, frames_path, manifest_path, true, std::nullopt);
  dpi::ExperimentConfig ec{cfg.cv, cfg.repetitions, cfg.workers};
  dpi::FixedDurationConfig fd;
  fd.total_hours = cfg.total_hours;
  if (!day_counts.empty()) fd.day_counts = day_counts;
  fd.window = cfg.window;
  fd.window.frame_seconds = cfg.frame_ms / 1000.0;
  const dpi::Experiment2Report report = dpi::run_experiment2_fixed_duration(
      cohort, fd, ec, effective_seed(g));
  dpi::write_results("experiment2_fixed_duration", results_config(cfg),
                     dpi::to_json(report), out_path(g, "results_exp2b.json"));
  dpi::emit_plot_data(report, g.out_dir);
  print_curve(g, report);
  info(g, "smallest window voiced count " +
              std::to_string(report.min_window_voiced) + ", " +
              std::to_string(report.window_redraws) + " redraws");
}

void run_null(const GlobalOpts& g, int n_pairs) {
  const dpi::ToolkitConfig cfg = effective_config(g);
  const dpi::NullBaselineReport report = dpi::run_null_baseline(
      n_pairs, cfg.repetitions, cfg.cv, effective_seed(g), cfg.workers);
  dpi::write_results("null_baseline", results_config(cfg), dpi::to_json(report),
                     out_path(g, "results_null.json"));
  dpi::emit_plot_data(report, g.out_dir);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "mean accuracy %.2f%%, upper 95%% bound %.2f%% (%d pairs, %d reps)",
                100.0 * report.mean_accuracy, 100.0 * report.upper95,
                report.n_pairs, report.repetitions);
  info(g, buf);
}

void run_fit_curve(const GlobalOpts& g, const std::string& input_path) {
  std::ifstream in(input_path);
  if (!in) dpi::fail(dpi::ErrorCode::io_error, "cannot open " + input_path);
  std::string line;
  if (!std::getline(in, line) ||
      (line != "days,accuracy" && line != "days,accuracy\r"))
    dpi::fail(dpi::ErrorCode::schema_mismatch,
              "expected header 'days,accuracy'");
  std::vector<std::pair<double, double>> pts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = dpi::detail::split_csv_line(line);
    if (fields.size() != 2)
      dpi::fail(dpi::ErrorCode::parse_error,
                "expected 2 fields on line " + std::to_string(line_no));
    pts.emplace_back(dpi::detail::parse_double(fields[0], "days", line_no),
                     dpi::detail::parse_double(fields[1], "accuracy", line_no));
  }
  const dpi::PowerFit fit = dpi::fit_power_law(pts);
  nlohmann::json payload = dpi::to_json(fit);
  try {
    payload["threshold_day_1pp"] = dpi::threshold_day(fit, 1.0);
  } catch (const dpi::Error&) {
    payload["threshold_day_1pp"] = nullptr;
  }
  try {
    payload["threshold_day_05pp"] = dpi::threshold_day(fit, 0.5);
  } catch (const dpi::Error&) {
    payload["threshold_day_05pp"] = nullptr;
  }
  dpi::write_results("power_fit", nlohmann::json::object(), payload,
                     out_path(g, "power_fit.json"));
  char buf[160];
  std::snprintf(buf, sizeof buf, "y = %.4f * x^%.4f + %.4f  (sse %.3g)",
                fit.a, fit.b, fit.c, fit.sse);
  info(g, buf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Daily phonotrauma index pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  CLI::Option* seed_opt =
      app.add_option("--seed", g.seed, "base RNG seed (env DPI_SEED otherwise)");
  app.add_option("--out", g.out_dir, "output directory (created if missing)");
  app.add_flag("--quiet", g.quiet, "suppress progress output");
  app.add_option("--reps", g.reps, "repetition count override");
  app.add_option("--folds", g.folds, "fold count override");
  app.add_option("--workers", g.workers, "worker thread count");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  dpi::CohortSpec spec;
  synth->add_option("--pvh", spec.n_pvh, "pvh subject count");
  synth->add_option("--control", spec.n_control, "control subject count");
  synth->add_option("--days", spec.days_per_subject, "days per subject");
  synth->add_option("--day-hours", spec.day_hours, "recording hours per day");
  synth->add_option("--voicing", spec.voicing_rate, "voiced frame fraction");
  synth->add_option("--drift-h1h2", spec.h1h2_drift_std,
                    "day-to-day log-scale drift of H1-H2 spread");
  synth->add_option("--drift-nsam", spec.nsam_drift_std,
                    "day-to-day drift of NSAM shape");
  synth->add_option("--pvh-h1h2-std", spec.pvh.h1h2_within_std,
                    "pvh within-day H1-H2 spread");
  synth->add_option("--ctl-h1h2-std", spec.control.h1h2_within_std,
                    "control within-day H1-H2 spread");
  synth->add_option("--pvh-nsam-shape", spec.pvh.nsam_shape,
                    "pvh NSAM skew-normal shape");
  synth->add_option("--ctl-nsam-shape", spec.control.nsam_shape,
                    "control NSAM skew-normal shape");
  synth->add_option("--lab-frames", spec.lab_frames,
                    "in-lab frames per subject (0 disables)");

  // extract
  auto* extract = app.add_subcommand("extract",
                                     "frame features from WAV recordings");
  std::string manifest_path, frames_path;
  extract->add_option("--manifest", manifest_path, "manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);

  // features
  auto* features = app.add_subcommand("features",
                                      "day and subject features from frames");
  features->add_option("--frames", frames_path, "frame features CSV")
      ->required()
      ->check(CLI::ExistingFile);
  std::string features_manifest;
  features->add_option("--manifest", features_manifest, "manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate",
                                       "fit the NSAM to SPL line");
  std::string pairs_path;
  calibrate->add_option("--pairs", pairs_path, "CSV with nsam_db,spl_db")
      ->required()
      ->check(CLI::ExistingFile);

  // crossval
  auto* crossval = app.add_subcommand("crossval",
                                      "repeated stratified cross-validation");
  std::string subject_features_path;
  crossval->add_option("--features", subject_features_path,
                       "subject features CSV")
      ->required()
      ->check(CLI::ExistingFile);

  // exp1
  auto* exp1 = app.add_subcommand("exp1", "in-lab vs field comparison");
  std::string exp1_frames, exp1_manifest, exp1_lab = "rainbow";
  exp1->add_option("--frames", exp1_frames, "frame features CSV")
      ->required()
      ->check(CLI::ExistingFile);
  exp1->add_option("--manifest", exp1_manifest, "manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  exp1->add_option("--lab", exp1_lab, "lab condition: rainbow | spontaneous");

  // exp2a
  auto* exp2a = app.add_subcommand("exp2a", "accuracy vs number of days");
  std::string exp2a_frames, exp2a_manifest;
  int max_days = 7;
  exp2a->add_option("--frames", exp2a_frames, "frame features CSV")
      ->required()
      ->check(CLI::ExistingFile);
  exp2a->add_option("--manifest", exp2a_manifest, "manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  exp2a->add_option("--max-days", max_days, "largest day count");

  // exp2b
  auto* exp2b = app.add_subcommand(
      "exp2b", "accuracy vs days at fixed total duration");
  std::string exp2b_frames, exp2b_manifest;
  std::vector<int> day_counts;
  exp2b->add_option("--frames", exp2b_frames, "frame features CSV")
      ->required()
      ->check(CLI::ExistingFile);
  exp2b->add_option("--manifest", exp2b_manifest, "manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  exp2b->add_option("--day-counts", day_counts,
                    "day counts to evaluate (default 1 2 3 4)");

  // null
  auto* null_cmd = app.add_subcommand("null", "random-feature null baseline");
  int n_pairs = 134;
  null_cmd->add_option("--pairs", n_pairs, "matched pair count");

  // fit-curve
  auto* fit_curve = app.add_subcommand("fit-curve",
                                       "power-law fit of a learning curve");
  std::string curve_path;
  fit_curve->add_option("--input", curve_path, "CSV with days,accuracy")
      ->required()
      ->check(CLI::ExistingFile);

  // let global options (--seed, --out, ...) appear after the subcommand too
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (synth->parsed()) {
      run_synth(g, spec);
    } else if (extract->parsed()) {
      const dpi::ToolkitConfig cfg = effective_config(g);
      const dpi::Manifest manifest = dpi::load_manifest(manifest_path);
      const std::vector<dpi::FrameCsvRow> rows = extract_all(manifest, cfg, g);
      dpi::write_frame_csv(rows, out_path(g, "frame_features.csv"));
      info(g, "wrote frame_features.csv (" + std::to_string(rows.size()) +
                  " rows)");
    } else if (features->parsed()) {
      run_features(g, frames_path, features_manifest);
    } else if (calibrate->parsed()) {
      run_calibrate(g, pairs_path);
    } else if (crossval->parsed()) {
      run_crossval(g, subject_features_path);
    } else if (exp1->parsed()) {
      run_exp1(g, exp1_frames, exp1_manifest, exp1_lab);
    } else if (exp2a->parsed()) {
      run_exp2a(g, exp2a_frames, exp2a_manifest, max_days);
    } else if (exp2b->parsed()) {
      run_exp2b(g, exp2b_frames, exp2b_manifest, day_counts);
    } else if (null_cmd->parsed()) {
      run_null(g, n_pairs);
    } else if (fit_curve->parsed()) {
      run_fit_curve(g, curve_path);
    }
  } catch (const dpi::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
