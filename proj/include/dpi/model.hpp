#pragma once

// DPI classifier: per-feature z-scoring and a two-feature logistic
// regression trained by damped Newton iterations.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/features.hpp"

namespace dpi {

struct ZScoreNormalizer {
  FeatureVec means{0.0, 0.0};
  FeatureVec stds{1.0, 1.0};
  // a feature with zero spread in the training folds keeps std 1 and is
  // flagged instead of dividing by zero
  std::array<bool, 2> zero_spread{false, false};
};

// Fit on training-fold vectors only; applying the same normalizer to
// held-out vectors is what keeps evaluation leakage-free.
inline ZScoreNormalizer fit_normalizer(std::span<const FeatureVec> xs) {
  if (xs.size() < 2)
    fail(ErrorCode::too_few_samples, "normalizer needs n >= 2");
  ZScoreNormalizer norm;
  for (int f = 0; f < 2; ++f) {
    double m = 0.0;
    for (const FeatureVec& x : xs) m += x[f];
    m /= double(xs.size());
    double ss = 0.0;
    for (const FeatureVec& x : xs) ss += (x[f] - m) * (x[f] - m);
    const double sd = std::sqrt(ss / double(xs.size() - 1));
    norm.means[f] = m;
    if (sd <= 1e-12 * (std::abs(m) + 1.0)) {
      norm.stds[f] = 1.0;
      norm.zero_spread[f] = true;
    } else {
      norm.stds[f] = sd;
    }
  }
  return norm;
}

inline FeatureVec apply_normalizer(const ZScoreNormalizer& norm,
                                   const FeatureVec& x) {
  return {(x[0] - norm.means[0]) / norm.stds[0],
          (x[1] - norm.means[1]) / norm.stds[1]};
}

struct LabeledVec {
  FeatureVec x{0.0, 0.0};
  int label = 0;  // 1 = pvh, 0 = control
};

struct TrainingMeta {
  int iterations = 0;
  double final_gradient_norm = 0.0;
  double l2_lambda = 0.0;
  bool converged = false;
  std::vector<double> objective_history;  // value after each iteration
};

struct DpiModel {
  FeatureVec weights{0.0, 0.0};
  double bias = 0.0;
  ZScoreNormalizer normalizer;  // identity unless fit on raw features
  TrainingMeta meta;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

// Mean log-likelihood minus (lambda/2)*||w||^2; the bias is not penalized.
inline double logistic_objective(std::span<const LabeledVec> data,
                                 const FeatureVec& w, double b,
                                 double lambda) {
  double ll = 0.0;
  for (const LabeledVec& s : data) {
    const double z = w[0] * s.x[0] + w[1] * s.x[1] + b;
    // log(sigmoid(z)) and log(1 - sigmoid(z)) without overflow
    const double log_p = z >= 0.0 ? -std::log1p(std::exp(-z))
                                  : z - std::log1p(std::exp(z));
    const double log_q = z >= 0.0 ? -z - std::log1p(std::exp(-z))
                                  : -std::log1p(std::exp(z));
    ll += s.label == 1 ? log_p : log_q;
  }
  ll /= double(data.size());
  return ll - 0.5 * lambda * (w[0] * w[0] + w[1] * w[1]);
}

// Gradient of the objective above with respect to (w0, w1, b).
inline std::array<double, 3> logistic_gradient(std::span<const LabeledVec> data,
                                               const FeatureVec& w, double b,
                                               double lambda) {
  std::array<double, 3> g{0.0, 0.0, 0.0};
  for (const LabeledVec& s : data) {
    const double z = w[0] * s.x[0] + w[1] * s.x[1] + b;
    const double r = double(s.label) - sigmoid(z);
    g[0] += r * s.x[0];
    g[1] += r * s.x[1];
    g[2] += r;
  }
  const double n = double(data.size());
  g[0] = g[0] / n - lambda * w[0];
  g[1] = g[1] / n - lambda * w[1];
  g[2] = g[2] / n;
  return g;
}

// Solve the 3x3 system A*x = rhs by Gaussian elimination with partial
// pivoting. Returns false if the matrix is numerically singular.
inline bool solve3(std::array<std::array<double, 3>, 3> a,
                   std::array<double, 3> rhs, std::array<double, 3>& x) {
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
    if (std::abs(a[pivot][col]) < 1e-14) return false;
    std::swap(a[col], a[pivot]);
    std::swap(rhs[col], rhs[pivot]);
    for (int row = col + 1; row < 3; ++row) {
      const double f = a[row][col] / a[col][col];
      for (int c = col; c < 3; ++c) a[row][c] -= f * a[col][c];
      rhs[row] -= f * rhs[col];
    }
  }
  for (int row = 2; row >= 0; --row) {
    double acc = rhs[row];
    for (int c = row + 1; c < 3; ++c) acc -= a[row][c] * x[c];
    x[row] = acc / a[row][row];
  }
  return true;
}

}  // namespace detail

// Damped Newton ascent from w = 0, b = 0. Steps are halved until the
// objective does not decrease, so the objective history is non-decreasing.
// Hitting max_iter sets converged = false on the returned model rather than
// throwing; the best iterate is still usable.
inline DpiModel train_logistic(std::span<const LabeledVec> train,
                               double l2_lambda = 1e-4, double tol = 1e-8,
                               int max_iter = 500) {
  std::size_t n_pos = 0;
  for (const LabeledVec& s : train)
    if (s.label == 1) ++n_pos;
  if (n_pos == 0 || n_pos == train.size())
    fail(ErrorCode::single_class, "training data holds a single class");

  DpiModel model;
  model.meta.l2_lambda = l2_lambda;
  FeatureVec w{0.0, 0.0};
  double b = 0.0;
  double obj = detail::logistic_objective(train, w, b, l2_lambda);
  model.meta.objective_history.push_back(obj);

  const double n = double(train.size());
  for (int iter = 0; iter < max_iter; ++iter) {
    const auto g = detail::logistic_gradient(train, w, b, l2_lambda);
    const double gnorm =
        std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    model.meta.final_gradient_norm = gnorm;
    if (gnorm <= tol) {
      model.meta.converged = true;
      break;
    }

    // negative Hessian of the objective (positive definite)
    std::array<std::array<double, 3>, 3> h{};
    for (const LabeledVec& s : train) {
      const double z = w[0] * s.x[0] + w[1] * s.x[1] + b;
      const double p = sigmoid(z);
      const double v = p * (1.0 - p);
      const std::array<double, 3> phi{s.x[0], s.x[1], 1.0};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) h[i][j] += v * phi[i] * phi[j];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) h[i][j] /= n;
    h[0][0] += l2_lambda;
    h[1][1] += l2_lambda;

    std::array<double, 3> dir{};
    if (!detail::solve3(h, {g[0], g[1], g[2]}, dir)) {
      // fall back to a plain gradient step if the Hessian degenerates
      dir = {g[0], g[1], g[2]};
    }

    double step = 1.0;
    double new_obj = obj;
    FeatureVec w_new = w;
    double b_new = b;
    while (step > 1e-12) {
      w_new = {w[0] + step * dir[0], w[1] + step * dir[1]};
      b_new = b + step * dir[2];
      new_obj = detail::logistic_objective(train, w_new, b_new, l2_lambda);
      if (new_obj >= obj) break;
      step *= 0.5;
    }
    if (new_obj < obj) {
      // no ascent direction left at the smallest step; treat as stalled
      model.meta.iterations = iter;
      break;
    }
    w = w_new;
    b = b_new;
    obj = new_obj;
    model.meta.iterations = iter + 1;
    model.meta.objective_history.push_back(obj);
  }

  if (!model.meta.converged) {
    const auto g = detail::logistic_gradient(train, w, b, l2_lambda);
    model.meta.final_gradient_norm =
        std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    model.meta.converged = model.meta.final_gradient_norm <= tol;
  }
  model.weights = w;
  model.bias = b;
  return model;
}

// Raw features in, probability of the pvh class out.
inline double dpi_score(const DpiModel& model, const FeatureVec& raw) {
  const FeatureVec z = apply_normalizer(model.normalizer, raw);
  return sigmoid(model.weights[0] * z[0] + model.weights[1] * z[1] +
                 model.bias);
}

// Decision boundary at probability 0.5, i.e. at linear score 0; the boundary
// itself classifies as pvh.
inline Group classify(const DpiModel& model, const FeatureVec& raw) {
  const FeatureVec z = apply_normalizer(model.normalizer, raw);
  const double lin =
      model.weights[0] * z[0] + model.weights[1] * z[1] + model.bias;
  return lin >= 0.0 ? Group::pvh : Group::control;
}

}  // namespace dpi
