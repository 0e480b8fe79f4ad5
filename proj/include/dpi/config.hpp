#pragma once

// Runtime configuration for the CLI: analysis constants with their defaults,
// JSON load/save, and the snapshot embedded into result files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dpi/error.hpp"
#include "dpi/eval.hpp"
#include "dpi/features.hpp"
#include "dpi/signal.hpp"

namespace dpi {

struct ToolkitConfig {
  double frame_ms = 50.0;
  VoicingConfig voicing{};
  H1H2Config h1h2{};
  double min_hours = 6.0;            // day validity rule
  double total_hours = 6.0;          // fixed-duration analysis budget
  WindowSamplerConfig window{};
  CrossValConfig cv{};
  int repetitions = 10;
  int workers = 1;
};

inline nlohmann::json to_json(const ToolkitConfig& cfg) {
  return {
      {"frame_ms", cfg.frame_ms},
      {"voicing",
       {{"energy_floor_db", cfg.voicing.energy_floor_db},
        {"periodicity_threshold", cfg.voicing.periodicity_threshold},
        {"f0_min_hz", cfg.voicing.f0_min_hz},
        {"f0_max_hz", cfg.voicing.f0_max_hz},
        {"octave_peak_fraction", cfg.voicing.octave_peak_fraction}}},
      {"h1h2",
       {{"band_frac", cfg.h1h2.band_frac},
        {"min_zero_pad", cfg.h1h2.min_zero_pad},
        {"rel_floor_db", cfg.h1h2.rel_floor_db}}},
      {"min_hours", cfg.min_hours},
      {"total_hours", cfg.total_hours},
      {"window",
       {{"min_voiced_frames", cfg.window.min_voiced_frames},
        {"max_retries", cfg.window.max_retries},
        {"per_day_retries", cfg.window.per_day_retries},
        {"frame_seconds", cfg.window.frame_seconds}}},
      {"cv",
       {{"folds", cfg.cv.folds},
        {"l2_lambda", cfg.cv.l2_lambda},
        {"train_tol", cfg.cv.train_tol},
        {"train_max_iter", cfg.cv.train_max_iter}}},
      {"repetitions", cfg.repetitions},
      {"workers", cfg.workers},
  };
}

// Unknown keys are rejected so a typo in a config file cannot silently fall
// back to a default.
inline ToolkitConfig config_from_json(const nlohmann::json& j) {
  ToolkitConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "frame_ms") {
        cfg.frame_ms = value.get<double>();
      } else if (key == "voicing") {
        for (const auto& [k2, v2] : value.items()) {
          if (k2 == "energy_floor_db")
            cfg.voicing.energy_floor_db = v2.get<double>();
          else if (k2 == "periodicity_threshold")
            cfg.voicing.periodicity_threshold = v2.get<double>();
          else if (k2 == "f0_min_hz")
            cfg.voicing.f0_min_hz = v2.get<double>();
          else if (k2 == "f0_max_hz")
            cfg.voicing.f0_max_hz = v2.get<double>();
          else if (k2 == "octave_peak_fraction")
            cfg.voicing.octave_peak_fraction = v2.get<double>();
          else
            fail(ErrorCode::parse_error, "unknown voicing key: " + k2);
        }
      } else if (key == "h1h2") {
        for (const auto& [k2, v2] : value.items()) {
          if (k2 == "band_frac")
            cfg.h1h2.band_frac = v2.get<double>();
          else if (k2 == "min_zero_pad")
            cfg.h1h2.min_zero_pad = v2.get<std::size_t>();
          else if (k2 == "rel_floor_db")
            cfg.h1h2.rel_floor_db = v2.get<double>();
          else
            fail(ErrorCode::parse_error, "unknown h1h2 key: " + k2);
        }
      } else if (key == "min_hours") {
        cfg.min_hours = value.get<double>();
      } else if (key == "total_hours") {
        cfg.total_hours = value.get<double>();
      } else if (key == "window") {
        for (const auto& [k2, v2] : value.items()) {
          if (k2 == "min_voiced_frames")
            cfg.window.min_voiced_frames = v2.get<std::size_t>();
          else if (k2 == "max_retries")
            cfg.window.max_retries = v2.get<int>();
          else if (k2 == "per_day_retries")
            cfg.window.per_day_retries = v2.get<int>();
          else if (k2 == "frame_seconds")
            cfg.window.frame_seconds = v2.get<double>();
          else
            fail(ErrorCode::parse_error, "unknown window key: " + k2);
        }
      } else if (key == "cv") {
        for (const auto& [k2, v2] : value.items()) {
          if (k2 == "folds")
            cfg.cv.folds = v2.get<int>();
          else if (k2 == "l2_lambda")
            cfg.cv.l2_lambda = v2.get<double>();
          else if (k2 == "train_tol")
            cfg.cv.train_tol = v2.get<double>();
          else if (k2 == "train_max_iter")
            cfg.cv.train_max_iter = v2.get<int>();
          else
            fail(ErrorCode::parse_error, "unknown cv key: " + k2);
        }
      } else if (key == "repetitions") {
        cfg.repetitions = value.get<int>();
      } else if (key == "workers") {
        cfg.workers = value.get<int>();
      } else {
        fail(ErrorCode::parse_error, "unknown config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, std::string("bad config value: ") + e.what());
  }
  return cfg;
}

inline ToolkitConfig load_toolkit_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error,
         "config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object())
    fail(ErrorCode::parse_error, "config root must be a JSON object");
  return config_from_json(j);
}

}  // namespace dpi
