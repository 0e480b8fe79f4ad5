#pragma once

// Leakage-safe evaluation: stratified k-fold assignment, majority-class
// undersampling, cross-validated training/scoring, ROC and AUC.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/features.hpp"
#include "dpi/model.hpp"
#include "dpi/rng.hpp"

namespace dpi {

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;  // subject_id -> fold in [0, k)
};

// Per-class shuffle followed by a round-robin deal, so every fold gets the
// same class mix up to one subject. pvh subjects are dealt first, then
// controls; both use the one generator in that order.
inline FoldAssignment stratified_kfold_split(
    std::span<const SubjectFeatures> subjects, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::class_too_small, "need at least 2 folds");
  std::vector<std::size_t> pvh_idx, ctl_idx;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    (subjects[i].group == Group::pvh ? pvh_idx : ctl_idx).push_back(i);
  if (pvh_idx.size() < std::size_t(k) || ctl_idx.size() < std::size_t(k))
    fail(ErrorCode::class_too_small,
         "each class needs at least one subject per fold");

  Rng rng(seed);
  FoldAssignment assign;
  assign.k = k;
  for (std::vector<std::size_t>* cls : {&pvh_idx, &ctl_idx}) {
    rng.shuffle(*cls);
    for (std::size_t j = 0; j < cls->size(); ++j)
      assign.fold_of[subjects[(*cls)[j]].subject_id] = int(j % std::size_t(k));
  }
  return assign;
}

// Keep the whole minority class and a uniform subset of the majority class
// of the same size. Selected subjects keep their input order.
inline std::vector<SubjectFeatures> undersample_balance(
    std::span<const SubjectFeatures> subjects, std::uint64_t seed) {
  std::vector<std::size_t> pvh_idx, ctl_idx;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    (subjects[i].group == Group::pvh ? pvh_idx : ctl_idx).push_back(i);
  if (pvh_idx.empty() || ctl_idx.empty())
    fail(ErrorCode::single_class, "undersampling needs both classes");

  std::vector<std::size_t>& majority =
      pvh_idx.size() > ctl_idx.size() ? pvh_idx : ctl_idx;
  const std::size_t target = std::min(pvh_idx.size(), ctl_idx.size());
  Rng rng(seed);
  std::vector<std::size_t> chosen = rng.sample_indices(majority.size(), target);
  chosen.resize(target);
  std::vector<std::size_t> kept;
  for (std::size_t c : chosen) kept.push_back(majority[c]);
  majority = std::move(kept);

  std::vector<std::size_t> all;
  all.insert(all.end(), pvh_idx.begin(), pvh_idx.end());
  all.insert(all.end(), ctl_idx.begin(), ctl_idx.end());
  std::sort(all.begin(), all.end());
  std::vector<SubjectFeatures> out;
  out.reserve(all.size());
  for (std::size_t i : all) out.push_back(subjects[i]);
  return out;
}

struct EvalMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;  // pvh recall
  double specificity = 0.0;  // control recall
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ScoredLabel {
  double score = 0.0;
  int label = 0;  // 1 = pvh
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// ROC over thresholds midway between distinct scores, plus the two trivial
// endpoints. d distinct score values yield d + 1 points in total.
inline std::vector<RocPoint> roc_curve(std::span<const ScoredLabel> scored) {
  long pos = 0, neg = 0;
  for (const ScoredLabel& s : scored) (s.label == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0)
    fail(ErrorCode::single_class, "ROC needs both labels");

  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scored[a].score > scored[b].score;
  });

  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           scored[order[j]].score == scored[order[i]].score)
      ++j;
    for (std::size_t t = i; t < j; ++t)
      (scored[order[t]].label == 1 ? tp : fp) += 1;
    if (j < order.size())  // interior threshold between two distinct scores
      roc.push_back({double(fp) / double(neg), double(tp) / double(pos)});
    i = j;
  }
  roc.push_back({1.0, 1.0});
  return roc;
}

// Trapezoidal area under the ROC curve.
inline double auc(std::span<const ScoredLabel> scored) {
  const std::vector<RocPoint> roc = roc_curve(scored);
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += 0.5 * (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr);
  return area;
}

struct FoldResult {
  int repetition = 0;
  int fold = 0;
  EvalMetrics metrics;
  DpiModel model;
  bool failed = false;
  std::string error;
};

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // n-1; zero when fewer than two values
};

inline SummaryStat summarize_values(std::span<const double> xs) {
  SummaryStat s;
  if (xs.empty()) return s;
  s.mean = mean_of(xs);
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double v : xs) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / double(xs.size() - 1));
  }
  return s;
}

struct EvalReport {
  int folds = 10;
  int repetitions = 1;
  std::uint64_t base_seed = 0;
  std::vector<FoldResult> fold_results;
  std::vector<ScoredLabel> pooled;  // held-out scores across folds and reps
  SummaryStat accuracy, sensitivity, specificity;
  double pooled_auc = 0.0;
  std::vector<RocPoint> roc;
  int failed_folds = 0;
};

struct CrossValConfig {
  int folds = 10;
  double l2_lambda = 1e-4;
  double train_tol = 1e-8;
  int train_max_iter = 500;
};

namespace detail {

inline void finalize_report(EvalReport& report) {
  std::vector<double> accs, sens, spec;
  for (const FoldResult& fr : report.fold_results) {
    if (fr.failed) {
      ++report.failed_folds;
      continue;
    }
    accs.push_back(fr.metrics.accuracy);
    sens.push_back(fr.metrics.sensitivity);
    spec.push_back(fr.metrics.specificity);
  }
  report.accuracy = summarize_values(accs);
  report.sensitivity = summarize_values(sens);
  report.specificity = summarize_values(spec);
  if (!report.pooled.empty()) {
    report.roc = roc_curve(report.pooled);
    double area = 0.0;
    for (std::size_t i = 1; i < report.roc.size(); ++i)
      area += 0.5 * (report.roc[i].fpr - report.roc[i - 1].fpr) *
              (report.roc[i].tpr + report.roc[i - 1].tpr);
    report.pooled_auc = area;
  }
}

}  // namespace detail

// One pass of stratified k-fold cross-validation. For each fold the
// normalizer is fit on the training subjects only, and held-out subjects
// are scored with raw features through that normalizer inside the model.
// A fold whose training fails is flagged, not fatal.
inline EvalReport run_cross_validation(std::span<const SubjectFeatures> subjects,
                                       const CrossValConfig& cfg,
                                       std::uint64_t seed) {
  const FoldAssignment assign =
      stratified_kfold_split(subjects, cfg.folds, seed);
  EvalReport report;
  report.folds = cfg.folds;
  report.base_seed = seed;

  for (int fold = 0; fold < cfg.folds; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    std::vector<FeatureVec> train_raw;
    std::vector<int> train_labels;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (assign.fold_of.at(subjects[i].subject_id) == fold) {
        test_idx.push_back(i);
      } else {
        train_raw.push_back(subjects[i].feature_vector);
        train_labels.push_back(subjects[i].group == Group::pvh ? 1 : 0);
      }
    }
    try {
      const ZScoreNormalizer norm = fit_normalizer(train_raw);
      std::vector<LabeledVec> train(train_raw.size());
      for (std::size_t i = 0; i < train_raw.size(); ++i)
        train[i] = {apply_normalizer(norm, train_raw[i]), train_labels[i]};
      DpiModel model = train_logistic(train, cfg.l2_lambda, cfg.train_tol,
                                      cfg.train_max_iter);
      model.normalizer = norm;

      EvalMetrics m;
      for (std::size_t i : test_idx) {
        const double score = dpi_score(model, subjects[i].feature_vector);
        const bool truth_pvh = subjects[i].group == Group::pvh;
        const bool call_pvh =
            classify(model, subjects[i].feature_vector) == Group::pvh;
        if (truth_pvh && call_pvh) ++m.tp;
        if (truth_pvh && !call_pvh) ++m.fn;
        if (!truth_pvh && call_pvh) ++m.fp;
        if (!truth_pvh && !call_pvh) ++m.tn;
        report.pooled.push_back({score, truth_pvh ? 1 : 0});
      }
      const long n_test = m.tp + m.fp + m.tn + m.fn;
      m.accuracy = n_test > 0 ? double(m.tp + m.tn) / double(n_test) : 0.0;
      m.sensitivity =
          m.tp + m.fn > 0 ? double(m.tp) / double(m.tp + m.fn) : 0.0;
      m.specificity =
          m.tn + m.fp > 0 ? double(m.tn) / double(m.tn + m.fp) : 0.0;
      fr.metrics = m;
      fr.model = std::move(model);
    } catch (const Error& e) {
      fr.failed = true;
      fr.error = e.what();
    }
    report.fold_results.push_back(std::move(fr));
  }
  detail::finalize_report(report);
  return report;
}

// Repeats cross-validation with per-repetition seeds base_seed xor r and
// pools fold metrics and held-out scores across repetitions.
inline EvalReport repeat_cross_validation(
    std::span<const SubjectFeatures> subjects, const CrossValConfig& cfg,
    int repetitions, std::uint64_t base_seed) {
  EvalReport merged;
  merged.folds = cfg.folds;
  merged.repetitions = repetitions;
  merged.base_seed = base_seed;
  for (int r = 0; r < repetitions; ++r) {
    EvalReport rep =
        run_cross_validation(subjects, cfg, base_seed ^ std::uint64_t(r));
    for (FoldResult& fr : rep.fold_results) {
      fr.repetition = r;
      merged.fold_results.push_back(std::move(fr));
    }
    merged.pooled.insert(merged.pooled.end(), rep.pooled.begin(),
                         rep.pooled.end());
  }
  detail::finalize_report(merged);
  return merged;
}

}  // namespace dpi
