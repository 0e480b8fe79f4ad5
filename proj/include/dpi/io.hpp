#pragma once

// File formats: recording manifest, 16-bit mono WAV, frame/day/subject
// feature CSVs, versioned results JSON, and plot-ready CSV/SVG emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpi/error.hpp"
#include "dpi/eval.hpp"
#include "dpi/experiments.hpp"
#include "dpi/features.hpp"
#include "dpi/signal.hpp"
#include "dpi/stats.hpp"

namespace dpi {

// ---------------------------------------------------------------- manifest

struct ManifestRecording {
  std::string path;  // as written in the manifest; resolved lazily
  Condition condition = Condition::field;
  std::optional<int> day;
};

struct ManifestSubject {
  std::string id;
  Group group = Group::control;
  std::optional<std::string> pair_id;
  std::vector<ManifestRecording> recordings;
};

struct Manifest {
  std::vector<ManifestSubject> subjects;
  std::filesystem::path base_dir;  // directory the manifest was loaded from
};

// Resolve a recording path against the manifest location and require the
// file to exist.
inline std::filesystem::path resolve_recording_path(const Manifest& manifest,
                                                    const ManifestRecording& rec) {
  std::filesystem::path p(rec.path);
  if (p.is_relative()) p = manifest.base_dir / p;
  if (!std::filesystem::exists(p))
    fail(ErrorCode::unresolvable_path, "recording not found: " + p.string());
  return p;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error,
         "manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("subjects") || !j["subjects"].is_array())
    fail(ErrorCode::parse_error, "manifest needs a top-level subjects array");

  Manifest manifest;
  manifest.base_dir = path.has_parent_path() ? path.parent_path()
                                             : std::filesystem::path(".");
  std::vector<std::string> seen;
  for (const nlohmann::json& js : j["subjects"]) {
    ManifestSubject subj;
    try {
      subj.id = js.at("id").get<std::string>();
      const auto group = group_from_string(js.at("group").get<std::string>());
      if (!group)
        fail(ErrorCode::parse_error, "unknown group for subject " + subj.id);
      subj.group = *group;
      if (js.contains("pair_id"))
        subj.pair_id = js["pair_id"].get<std::string>();
      for (const nlohmann::json& jr : js.value("recordings",
                                               nlohmann::json::array())) {
        ManifestRecording rec;
        rec.path = jr.at("path").get<std::string>();
        if (!jr.contains("condition"))
          fail(ErrorCode::missing_condition,
               "recording without condition for subject " + subj.id);
        const auto cond =
            condition_from_string(jr.at("condition").get<std::string>());
        if (!cond)
          fail(ErrorCode::missing_condition,
               "unknown condition for subject " + subj.id);
        rec.condition = *cond;
        if (jr.contains("day")) rec.day = jr["day"].get<int>();
        if (rec.condition == Condition::field && !rec.day)
          fail(ErrorCode::missing_day_index,
               "field recording without day index for subject " + subj.id);
        subj.recordings.push_back(std::move(rec));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse_error,
           "bad manifest entry: " + std::string(e.what()));
    }
    for (const std::string& s : seen)
      if (s == subj.id)
        fail(ErrorCode::duplicate_subject, "duplicate subject id " + subj.id);
    seen.push_back(subj.id);
    manifest.subjects.push_back(std::move(subj));
  }
  return manifest;
}

inline void save_manifest(const Manifest& manifest,
                          const std::filesystem::path& path) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const ManifestSubject& subj : manifest.subjects) {
    nlohmann::json js{{"id", subj.id}, {"group", to_string(subj.group)}};
    if (subj.pair_id) js["pair_id"] = *subj.pair_id;
    nlohmann::json recs = nlohmann::json::array();
    for (const ManifestRecording& rec : subj.recordings) {
      nlohmann::json jr{{"path", rec.path},
                        {"condition", to_string(rec.condition)}};
      if (rec.day) jr["day"] = *rec.day;
      recs.push_back(std::move(jr));
    }
    js["recordings"] = std::move(recs);
    subjects.push_back(std::move(js));
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << nlohmann::json{{"subjects", std::move(subjects)}}.dump(2) << "\n";
}

// -------------------------------------------------------------------- wav

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

}  // namespace detail

// Reads a PCM16 mono WAV. Sample values map to [-1, 1) by dividing by 32768.
inline AccelRecording read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorCode::corrupt_header, "not a RIFF/WAVE file: " + path.string());

  AccelRecording rec;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = detail::read_u32le(&bytes[pos + 4]);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + chunk_len > bytes.size())
      fail(ErrorCode::corrupt_header, "truncated chunk in " + path.string());
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (chunk_len < 16)
        fail(ErrorCode::corrupt_header, "short fmt chunk in " + path.string());
      const std::uint16_t format = detail::read_u16le(body);
      const std::uint16_t channels = detail::read_u16le(body + 2);
      const std::uint32_t rate = detail::read_u32le(body + 4);
      const std::uint16_t bits = detail::read_u16le(body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        fail(ErrorCode::unsupported_format,
             "expected 16-bit mono PCM: " + path.string());
      rec.sample_rate_hz = int(rate);
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      if (!have_fmt)
        fail(ErrorCode::corrupt_header,
             "data chunk before fmt chunk: " + path.string());
      const std::size_t n = chunk_len / 2;
      rec.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t v =
            std::int16_t(detail::read_u16le(body + 2 * i));
        rec.samples[i] = double(v) / 32768.0;
      }
      have_data = true;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data)
    fail(ErrorCode::corrupt_header, "missing fmt or data chunk: " + path.string());
  return rec;
}

inline void write_wav(const std::filesystem::path& path,
                      std::span<const double> samples, int sample_rate_hz) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  const std::uint32_t data_len = std::uint32_t(samples.size() * 2);
  const auto put_u32 = [&](std::uint32_t v) {
    const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff),
                       char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    out.write(b, 4);
  };
  const auto put_u16 = [&](std::uint16_t v) {
    const char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    out.write(b, 2);
  };
  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(std::uint32_t(sample_rate_hz));
  put_u32(std::uint32_t(sample_rate_hz) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (double s : samples) {
    long v = std::lround(s * 32768.0);
    v = std::clamp(v, -32768L, 32767L);
    put_u16(std::uint16_t(std::int16_t(v)));
  }
}

// -------------------------------------------------------------- frame csv

struct FrameCsvRow {
  std::string subject_id;
  Condition condition = Condition::field;
  std::optional<int> day;
  FrameFeatureRow row;
};

inline constexpr const char* frame_csv_header =
    "subject_id,condition,day,frame_index,voiced,f0_hz,h1h2_db,nsam_db";

// Floats are written with %.9g: compact, and enough digits that day-level
// features recomputed from the file match in-memory values to float noise.
inline void write_frame_csv(std::span<const FrameCsvRow> rows,
                            const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs(frame_csv_header, f);
  std::fputc('\n', f);
  char day_buf[16];
  for (const FrameCsvRow& r : rows) {
    if (r.day)
      std::snprintf(day_buf, sizeof day_buf, "%d", *r.day);
    else
      day_buf[0] = '\0';
    if (r.row.voiced)
      std::fprintf(f, "%s,%s,%s,%zu,1,%.9g,%.9g,%.9g\n", r.subject_id.c_str(),
                   to_string(r.condition), day_buf, r.row.frame_index,
                   r.row.f0_hz.value(), r.row.h1h2_db.value(), r.row.nsam_db);
    else
      std::fprintf(f, "%s,%s,%s,%zu,0,,,%.9g\n", r.subject_id.c_str(),
                   to_string(r.condition), day_buf, r.row.frame_index,
                   r.row.nsam_db);
  }
  std::fclose(f);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(const std::string& s, const char* what,
                           std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    fail(ErrorCode::parse_error, std::string("bad ") + what + " on line " +
                                     std::to_string(line_no));
  return v;
}

inline long parse_long(const std::string& s, const char* what,
                       std::size_t line_no) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    fail(ErrorCode::parse_error, std::string("bad ") + what + " on line " +
                                     std::to_string(line_no));
  return v;
}

}  // namespace detail

inline std::vector<FrameCsvRow> read_frame_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::schema_mismatch, "empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != frame_csv_header)
    fail(ErrorCode::schema_mismatch,
         "expected header '" + std::string(frame_csv_header) + "', got '" +
             line + "'");
  std::vector<FrameCsvRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 8)
      fail(ErrorCode::parse_error,
           "expected 8 fields on line " + std::to_string(line_no));
    FrameCsvRow r;
    r.subject_id = f[0];
    const auto cond = condition_from_string(f[1]);
    if (!cond)
      fail(ErrorCode::parse_error,
           "unknown condition on line " + std::to_string(line_no));
    r.condition = *cond;
    if (!f[2].empty())
      r.day = int(detail::parse_long(f[2], "day", line_no));
    r.row.frame_index =
        std::size_t(detail::parse_long(f[3], "frame_index", line_no));
    const long voiced = detail::parse_long(f[4], "voiced flag", line_no);
    if (voiced != 0 && voiced != 1)
      fail(ErrorCode::parse_error,
           "voiced flag must be 0 or 1 on line " + std::to_string(line_no));
    r.row.voiced = voiced == 1;
    if (r.row.voiced) {
      r.row.f0_hz = detail::parse_double(f[5], "f0_hz", line_no);
      r.row.h1h2_db = detail::parse_double(f[6], "h1h2_db", line_no);
    } else if (!f[5].empty() || !f[6].empty()) {
      fail(ErrorCode::parse_error,
           "unvoiced row carries voiced-only fields on line " +
               std::to_string(line_no));
    }
    r.row.nsam_db = detail::parse_double(f[7], "nsam_db", line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ------------------------------------------------- day/subject feature csv

inline constexpr const char* day_csv_header =
    "subject_id,day,h1h2_std,nsam_skewness,voiced_frames,total_frames";

inline void write_day_features_csv(std::span<const DayFeatures> days,
                                   const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs(day_csv_header, f);
  std::fputc('\n', f);
  for (const DayFeatures& d : days)
    std::fprintf(f, "%s,%d,%.9g,%.9g,%zu,%zu\n", d.subject_id.c_str(),
                 d.day_index, d.h1h2_std, d.nsam_skewness,
                 d.voiced_frame_count, d.total_frame_count);
  std::fclose(f);
}

inline constexpr const char* subject_csv_header =
    "subject_id,group,pair_id,h1h2_std_mean,nsam_skewness_mean,days_used";

inline void write_subject_features_csv(std::span<const SubjectFeatures> subjects,
                                       const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs(subject_csv_header, f);
  std::fputc('\n', f);
  for (const SubjectFeatures& s : subjects)
    std::fprintf(f, "%s,%s,%s,%.9g,%.9g,%d\n", s.subject_id.c_str(),
                 to_string(s.group), s.pair_id ? s.pair_id->c_str() : "",
                 s.feature_vector[0], s.feature_vector[1], s.days_used);
  std::fclose(f);
}

inline std::vector<SubjectFeatures> read_subject_features_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::schema_mismatch, "empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != subject_csv_header)
    fail(ErrorCode::schema_mismatch,
         "expected header '" + std::string(subject_csv_header) + "'");
  std::vector<SubjectFeatures> subjects;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 6)
      fail(ErrorCode::parse_error,
           "expected 6 fields on line " + std::to_string(line_no));
    SubjectFeatures s;
    s.subject_id = f[0];
    const auto group = group_from_string(f[1]);
    if (!group)
      fail(ErrorCode::parse_error,
           "unknown group on line " + std::to_string(line_no));
    s.group = *group;
    if (!f[2].empty()) s.pair_id = f[2];
    s.feature_vector = {detail::parse_double(f[3], "h1h2_std_mean", line_no),
                        detail::parse_double(f[4], "nsam_skewness_mean",
                                             line_no)};
    s.days_used = int(detail::parse_long(f[5], "days_used", line_no));
    subjects.push_back(std::move(s));
  }
  return subjects;
}

// -------------------------------------------------------- cohort assembly

struct AssembleOptions {
  double min_hours = 6.0;
  double frame_seconds = 0.05;
  bool keep_frames = false;
  std::optional<Condition> lab_condition;  // which lab rows become features
};

// Build a cohort from a manifest plus a frame-feature table. Field rows are
// grouped per (subject, day) and summarized; days failing the minimum-hours
// rule or with too little voicing are dropped. Lab rows, when requested,
// are summarized into the subject's lab feature vector.
inline CohortData assemble_cohort(const Manifest& manifest,
                                  std::span<const FrameCsvRow> rows,
                                  const AssembleOptions& opts = {}) {
  std::map<std::string, std::map<int, std::vector<FrameFeatureRow>>> field;
  std::map<std::string, std::vector<FrameFeatureRow>> lab;
  for (const FrameCsvRow& r : rows) {
    if (r.condition == Condition::field) {
      if (!r.day)
        fail(ErrorCode::missing_day_index,
             "field row without day for subject " + r.subject_id);
      field[r.subject_id][*r.day].push_back(r.row);
    } else if (opts.lab_condition && r.condition == *opts.lab_condition) {
      lab[r.subject_id].push_back(r.row);
    }
  }

  const auto required = static_cast<std::size_t>(
      std::llround(opts.min_hours * 3600.0 / opts.frame_seconds));
  CohortData data;
  for (const ManifestSubject& ms : manifest.subjects) {
    SubjectData subj;
    subj.meta = {ms.id, ms.group, ms.pair_id};
    const auto fit = field.find(ms.id);
    if (fit != field.end()) {
      for (auto& [day_index, day_rows] : fit->second) {
        if (day_rows.size() < required) continue;
        std::sort(day_rows.begin(), day_rows.end(),
                  [](const FrameFeatureRow& a, const FrameFeatureRow& b) {
                    return a.frame_index < b.frame_index;
                  });
        try {
          subj.day_features.push_back(summarize_day(day_rows, ms.id, day_index));
        } catch (const Error& e) {
          if (e.code() == ErrorCode::insufficient_voicing ||
              e.code() == ErrorCode::zero_variance ||
              e.code() == ErrorCode::too_few_samples)
            continue;
          throw;
        }
        if (opts.keep_frames)
          subj.day_frames.push_back(detail::compact_day(day_rows, day_index));
      }
    }
    const auto lit = lab.find(ms.id);
    if (lit != lab.end()) {
      try {
        const DayFeatures d = summarize_day(lit->second, ms.id, -1);
        subj.lab_features = FeatureVec{d.h1h2_std, d.nsam_skewness};
      } catch (const Error&) {
        subj.lab_features.reset();
      }
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

// ----------------------------------------------------------- results json

inline constexpr int results_schema_version = 1;

inline nlohmann::json to_json(const ZScoreNormalizer& n) {
  return {{"means", n.means},
          {"stds", n.stds},
          {"zero_spread", n.zero_spread}};
}

inline nlohmann::json to_json(const DpiModel& m) {
  return {{"weights", m.weights},
          {"bias", m.bias},
          {"normalizer", to_json(m.normalizer)},
          {"iterations", m.meta.iterations},
          {"final_gradient_norm", m.meta.final_gradient_norm},
          {"l2_lambda", m.meta.l2_lambda},
          {"converged", m.meta.converged}};
}

inline nlohmann::json to_json(const EvalMetrics& m) {
  return {{"accuracy", m.accuracy}, {"sensitivity", m.sensitivity},
          {"specificity", m.specificity}, {"tp", m.tp},
          {"fp", m.fp},               {"tn", m.tn},
          {"fn", m.fn}};
}

inline nlohmann::json to_json(const SummaryStat& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldResult& fr : r.fold_results) {
    nlohmann::json jf{{"repetition", fr.repetition},
                      {"fold", fr.fold},
                      {"failed", fr.failed}};
    if (fr.failed)
      jf["error"] = fr.error;
    else {
      jf["metrics"] = to_json(fr.metrics);
      jf["model"] = to_json(fr.model);
    }
    folds.push_back(std::move(jf));
  }
  nlohmann::json roc = nlohmann::json::array();
  for (const RocPoint& p : r.roc) roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
  nlohmann::json pooled = nlohmann::json::array();
  for (const ScoredLabel& s : r.pooled)
    pooled.push_back({{"score", s.score}, {"label", s.label}});
  return {{"folds", r.folds},
          {"repetitions", r.repetitions},
          {"base_seed", r.base_seed},
          {"accuracy", to_json(r.accuracy)},
          {"sensitivity", to_json(r.sensitivity)},
          {"specificity", to_json(r.specificity)},
          {"auc", r.pooled_auc},
          {"failed_folds", r.failed_folds},
          {"fold_results", std::move(folds)},
          {"roc", std::move(roc)},
          {"pooled_scores", std::move(pooled)}};
}

inline nlohmann::json to_json(const CalibrationModel& m) {
  return {{"slope", m.slope},
          {"intercept", m.intercept},
          {"residual_rms", m.residual_rms}};
}

inline nlohmann::json to_json(const PowerFit& f) {
  return {{"a", f.a}, {"b", f.b}, {"c", f.c}, {"sse", f.sse}};
}

inline nlohmann::json to_json(const Experiment1Report& r) {
  return {{"lab_condition", r.lab_condition},
          {"lab", to_json(r.lab)},
          {"field", to_json(r.field)},
          {"field_vs_lab",
           {{"t", r.field_vs_lab.t},
            {"df", r.field_vs_lab.df},
            {"p", r.field_vs_lab.p},
            {"cohens_d", r.field_vs_lab.cohens_d}}},
          {"subjects_used", r.subjects_used},
          {"excluded", r.excluded},
          {"seed", r.seed}};
}

inline nlohmann::json to_json(const Experiment2Report& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const CurvePoint& p : r.curve)
    curve.push_back({{"days", p.days},
                     {"mean_accuracy", p.mean_accuracy},
                     {"std_accuracy", p.std_accuracy},
                     {"d_h1h2_std", p.d_h1h2_std},
                     {"d_nsam_skew", p.d_nsam_skew}});
  nlohmann::json j{{"mode", r.mode},
                   {"curve", std::move(curve)},
                   {"rep_accuracies", r.rep_accuracies},
                   {"accuracy_fit", to_json(r.accuracy_fit)},
                   {"days_vs_accuracy",
                    {{"rho", r.days_vs_accuracy.rho},
                     {"p", r.days_vs_accuracy.p}}},
                   {"subjects_used", r.subjects_used},
                   {"excluded", r.excluded},
                   {"repetitions", r.repetitions},
                   {"seed", r.seed}};
  j["threshold_day_1pp"] = r.threshold_day_1pp
                               ? nlohmann::json(*r.threshold_day_1pp)
                               : nlohmann::json(nullptr);
  j["threshold_day_05pp"] = r.threshold_day_05pp
                                ? nlohmann::json(*r.threshold_day_05pp)
                                : nlohmann::json(nullptr);
  if (r.mode == "fixed_duration") {
    j["total_hours"] = r.total_hours;
    j["min_window_voiced"] = r.min_window_voiced;
    j["window_redraws"] = r.window_redraws;
  }
  return j;
}

inline nlohmann::json to_json(const NullBaselineReport& r) {
  return {{"n_pairs", r.n_pairs},
          {"repetitions", r.repetitions},
          {"folds", r.folds},
          {"seed", r.seed},
          {"mean_accuracy", r.mean_accuracy},
          {"upper95", r.upper95},
          {"rep_accuracies", r.rep_accuracies}};
}

// Results carry a schema version and a config snapshot. nlohmann objects
// keep keys sorted, and doubles print as shortest round-trip decimals, so
// the same report always serializes to the same bytes.
inline void write_results(const std::string& experiment,
                          const nlohmann::json& config,
                          const nlohmann::json& payload,
                          const std::filesystem::path& path) {
  const nlohmann::json doc{{"schema_version", results_schema_version},
                           {"experiment", experiment},
                           {"config", config},
                           {"results", payload}};
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

inline nlohmann::json read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error,
         "results file is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || !doc.contains("schema_version") ||
      !doc["schema_version"].is_number_integer())
    fail(ErrorCode::parse_error, "results file lacks a schema_version");
  const int found = doc["schema_version"].get<int>();
  if (found != results_schema_version)
    fail(ErrorCode::schema_version_mismatch,
         "results schema version " + std::to_string(found) +
             ", this build reads version " +
             std::to_string(results_schema_version));
  return doc;
}

// -------------------------------------------------------------- plot data

inline void write_roc_csv(std::span<const RocPoint> roc,
                          const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs("fpr,tpr\n", f);
  for (const RocPoint& p : roc) std::fprintf(f, "%.9g,%.9g\n", p.fpr, p.tpr);
  std::fclose(f);
}

inline void write_accuracy_vs_days_csv(std::span<const CurvePoint> curve,
                                       const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs("days,mean_accuracy,std_accuracy\n", f);
  for (const CurvePoint& p : curve)
    std::fprintf(f, "%d,%.9g,%.9g\n", p.days, p.mean_accuracy,
                 p.std_accuracy);
  std::fclose(f);
}

inline void write_effectsize_vs_days_csv(std::span<const CurvePoint> curve,
                                         const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs("days,d_h1h2_std,d_nsam_skew\n", f);
  for (const CurvePoint& p : curve)
    std::fprintf(f, "%d,%.9g,%.9g\n", p.days, p.d_h1h2_std, p.d_nsam_skew);
  std::fclose(f);
}

inline void write_null_hist_csv(std::span<const double> values,
                                const std::filesystem::path& path,
                                double bin_width = 0.005) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fputs("bin_low,count\n", f);
  if (!values.empty()) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const long first = std::lround(std::floor(lo / bin_width));
    const long last = std::lround(std::floor(hi / bin_width));
    std::vector<long> counts(std::size_t(last - first + 1), 0);
    for (double v : values) {
      long b = std::lround(std::floor(v / bin_width)) - first;
      b = std::clamp(b, 0L, long(counts.size()) - 1);
      ++counts[std::size_t(b)];
    }
    for (std::size_t i = 0; i < counts.size(); ++i)
      std::fprintf(f, "%.9g,%ld\n", double(first + long(i)) * bin_width,
                   counts[i]);
  }
  std::fclose(f);
}

// Minimal SVG polyline so a curve can be eyeballed without a plotting stack.
inline void write_line_svg(std::span<const double> xs,
                           std::span<const double> ys,
                           const std::string& title,
                           const std::filesystem::path& path) {
  if (xs.size() != ys.size() || xs.empty())
    fail(ErrorCode::degenerate_input, "SVG needs matching non-empty series");
  double x_lo = xs[0], x_hi = xs[0], y_lo = ys[0], y_hi = ys[0];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x_lo = std::min(x_lo, xs[i]);
    x_hi = std::max(x_hi, xs[i]);
    y_lo = std::min(y_lo, ys[i]);
    y_hi = std::max(y_hi, ys[i]);
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;
  const double w = 640.0, h = 400.0, margin = 50.0;
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io_error, "cannot write " + path.string());
  std::fprintf(f,
               "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" "
               "height=\"%g\" viewBox=\"0 0 %g %g\">\n",
               w, h, w, h);
  std::fprintf(f,
               "<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" "
               "font-size=\"14\">%s</text>\n",
               margin, title.c_str());
  std::fprintf(f,
               "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
               "stroke=\"black\"/>\n",
               margin, h - margin, w - margin, h - margin);
  std::fprintf(f,
               "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
               "stroke=\"black\"/>\n",
               margin, margin, margin, h - margin);
  std::fputs("<polyline fill=\"none\" stroke=\"steelblue\" "
             "stroke-width=\"2\" points=\"",
             f);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px =
        margin + (xs[i] - x_lo) / (x_hi - x_lo) * (w - 2.0 * margin);
    const double py =
        h - margin - (ys[i] - y_lo) / (y_hi - y_lo) * (h - 2.0 * margin);
    std::fprintf(f, "%s%.2f,%.2f", i ? " " : "", px, py);
  }
  std::fputs("\"/>\n</svg>\n", f);
  std::fclose(f);
}

inline void emit_plot_data(const EvalReport& report,
                           const std::filesystem::path& dir,
                           const std::string& stem = "roc") {
  write_roc_csv(report.roc, dir / (stem + ".csv"));
  std::vector<double> xs, ys;
  for (const RocPoint& p : report.roc) {
    xs.push_back(p.fpr);
    ys.push_back(p.tpr);
  }
  write_line_svg(xs, ys, "ROC (pooled held-out scores)",
                 dir / (stem + ".svg"));
}

inline void emit_plot_data(const Experiment2Report& report,
                           const std::filesystem::path& dir) {
  write_accuracy_vs_days_csv(report.curve, dir / "accuracy_vs_days.csv");
  write_effectsize_vs_days_csv(report.curve, dir / "effectsize_vs_days.csv");
  std::vector<double> xs, ys;
  for (const CurvePoint& p : report.curve) {
    xs.push_back(double(p.days));
    ys.push_back(100.0 * p.mean_accuracy);
  }
  write_line_svg(xs, ys, "Accuracy (%) vs days", dir / "accuracy_vs_days.svg");
}

inline void emit_plot_data(const NullBaselineReport& report,
                           const std::filesystem::path& dir) {
  write_null_hist_csv(report.rep_accuracies, dir / "null_hist.csv");
  std::vector<double> xs, ys;
  std::vector<double> sorted = report.rep_accuracies;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    xs.push_back(sorted[i]);
    ys.push_back(double(i + 1) / double(sorted.size()));
  }
  write_line_svg(xs, ys, "Null accuracy empirical CDF", dir / "null_cdf.svg");
}

}  // namespace dpi
