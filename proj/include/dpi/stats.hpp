#pragma once

// Group-comparison statistics and the diminishing-returns curve fit:
// Cohen's d, Welch's t-test, Spearman rank correlation, and a three-
// parameter power-law fit a*x^b + c with its marginal-gain helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "dpi/error.hpp"
#include "dpi/features.hpp"

namespace dpi {

// Pooled-standard-deviation Cohen's d, positive when x sits above y.
inline double cohens_d(std::span<const double> x, std::span<const double> y) {
  const std::size_t n1 = x.size(), n2 = y.size();
  if (n1 < 2 || n2 < 2)
    fail(ErrorCode::too_few_samples, "Cohen's d needs n >= 2 per group");
  const double m1 = mean_of(x), m2 = mean_of(y);
  double ss1 = 0.0, ss2 = 0.0;
  for (double v : x) ss1 += (v - m1) * (v - m1);
  for (double v : y) ss2 += (v - m2) * (v - m2);
  const double pooled_var = (ss1 + ss2) / double(n1 + n2 - 2);
  const double scale = m1 * m1 + m2 * m2 + 1.0;
  if (pooled_var <= 1e-24 * scale)
    fail(ErrorCode::zero_pooled_std, "both groups are constant");
  return (m1 - m2) / std::sqrt(pooled_var);
}

namespace detail {

// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
inline double incomplete_beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a Student-t statistic with df degrees of freedom:
// p = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
  const double x = df / (df + t * t);
  double p = incomplete_beta(0.5 * df, 0.5, x);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace detail

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
// freedom. For a one-sided test of mean(x) > mean(y), halve p when t > 0.
inline TTestResult welch_t_test(std::span<const double> x,
                                std::span<const double> y) {
  const std::size_t n1 = x.size(), n2 = y.size();
  if (n1 < 2 || n2 < 2)
    fail(ErrorCode::too_few_samples, "Welch's t needs n >= 2 per group");
  const double m1 = mean_of(x), m2 = mean_of(y);
  double ss1 = 0.0, ss2 = 0.0;
  for (double v : x) ss1 += (v - m1) * (v - m1);
  for (double v : y) ss2 += (v - m2) * (v - m2);
  const double v1 = ss1 / double(n1 - 1) / double(n1);
  const double v2 = ss2 / double(n2 - 1) / double(n2);
  const double scale = m1 * m1 + m2 * m2 + 1.0;
  if (v1 + v2 <= 1e-24 * scale)
    fail(ErrorCode::degenerate_variance, "both groups are constant");
  TTestResult r;
  r.t = (m1 - m2) / std::sqrt(v1 + v2);
  r.df = (v1 + v2) * (v1 + v2) /
         (v1 * v1 / double(n1 - 1) + v2 * v2 / double(n2 - 1));
  r.p = detail::student_t_two_sided_p(r.t, r.df);
  return r;
}

// Ranks with ties replaced by the average of the ranks they span (1-based).
inline std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && xs[order[j]] == xs[order[i]]) ++j;
    const double avg = 0.5 * double(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

struct Correlation {
  double rho = 0.0;
  double p = 1.0;  // two-sided, t approximation with n-2 df
};

// Spearman rank correlation: Pearson correlation of average ranks.
inline Correlation spearman_rho(std::span<const double> x,
                                std::span<const double> y) {
  if (x.size() != y.size())
    fail(ErrorCode::too_few_samples, "inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) fail(ErrorCode::too_few_samples, "Spearman needs n >= 3");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
    sxy += (rx[i] - mx) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    fail(ErrorCode::constant_input, "a constant input has no rank order");
  Correlation c;
  c.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double one_minus = 1.0 - c.rho * c.rho;
  if (one_minus <= 1e-15) {
    c.p = 0.0;
  } else {
    const double t = c.rho * std::sqrt(double(n - 2) / one_minus);
    c.p = detail::student_t_two_sided_p(t, double(n - 2));
  }
  return c;
}

struct PowerFit {
  double a = 0.0;
  double b = -1.0;
  double c = 0.0;
  double sse = 0.0;
};

struct PowerFitConfig {
  double b_min = -6.0;
  double b_max = -0.01;
  int coarse_steps = 121;
  double b_tol = 1e-8;
};

namespace detail {

// For fixed exponent b, (a, c) solve a two-parameter linear least squares
// on the basis {x^b, 1}. Returns SSE, writing the coefficients out.
inline double power_sse_at(std::span<const std::pair<double, double>> pts,
                           double b, double& a_out, double& c_out) {
  const double n = double(pts.size());
  double su = 0.0, suu = 0.0, sy = 0.0, suy = 0.0;
  for (const auto& [x, y] : pts) {
    const double u = std::pow(x, b);
    su += u;
    suu += u * u;
    sy += y;
    suy += u * y;
  }
  const double det = n * suu - su * su;
  if (std::abs(det) <= 1e-14 * (n * suu + su * su + 1.0)) {
    // basis collapsed to a constant; fall back to the flat fit
    a_out = 0.0;
    c_out = sy / n;
  } else {
    a_out = (n * suy - su * sy) / det;
    c_out = (sy - a_out * su) / n;
  }
  double sse = 0.0;
  for (const auto& [x, y] : pts) {
    const double r = y - (a_out * std::pow(x, b) + c_out);
    sse += r * r;
  }
  return sse;
}

}  // namespace detail

inline double power_eval(const PowerFit& fit, double x) {
  return fit.a * std::pow(x, fit.b) + fit.c;
}

// Fit y = a*x^b + c with b < 0 by profiling the exponent: a coarse scan over
// [b_min, b_max] followed by golden-section refinement, solving (a, c)
// linearly at each candidate b. Constant y short-circuits to a = 0.
inline PowerFit fit_power_law(std::span<const std::pair<double, double>> pts,
                              const PowerFitConfig& cfg = {}) {
  if (pts.size() < 3)
    fail(ErrorCode::degenerate_input, "power fit needs at least 3 points");
  std::vector<double> xs;
  for (const auto& [x, y] : pts) {
    if (!(x >= 1.0))
      fail(ErrorCode::degenerate_input, "power fit expects x >= 1");
    xs.push_back(x);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  if (xs.size() < 3)
    fail(ErrorCode::degenerate_input, "power fit needs 3 distinct x values");

  double sy = 0.0;
  for (const auto& [x, y] : pts) sy += y;
  const double y_mean = sy / double(pts.size());
  double sse_const = 0.0;
  for (const auto& [x, y] : pts) sse_const += (y - y_mean) * (y - y_mean);
  if (sse_const == 0.0) return {0.0, -1.0, y_mean, 0.0};

  double best_b = cfg.b_min, best_sse = std::numeric_limits<double>::max();
  double a = 0.0, c = 0.0;
  for (int i = 0; i < cfg.coarse_steps; ++i) {
    const double b = cfg.b_min + (cfg.b_max - cfg.b_min) * double(i) /
                                     double(cfg.coarse_steps - 1);
    const double sse = detail::power_sse_at(pts, b, a, c);
    if (sse < best_sse) {
      best_sse = sse;
      best_b = b;
    }
  }

  const double span = (cfg.b_max - cfg.b_min) / double(cfg.coarse_steps - 1);
  double lo = std::max(cfg.b_min, best_b - span);
  double hi = std::min(cfg.b_max, best_b + span);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = detail::power_sse_at(pts, x1, a, c);
  double f2 = detail::power_sse_at(pts, x2, a, c);
  while (hi - lo > cfg.b_tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = detail::power_sse_at(pts, x1, a, c);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = detail::power_sse_at(pts, x2, a, c);
    }
  }
  PowerFit fit;
  fit.b = 0.5 * (lo + hi);
  fit.sse = detail::power_sse_at(pts, fit.b, fit.a, fit.c);
  if (best_sse < fit.sse) {
    fit.b = best_b;
    fit.sse = detail::power_sse_at(pts, fit.b, fit.a, fit.c);
  }
  // never report a fit worse than the flat line
  if (sse_const < fit.sse) return {0.0, -1.0, y_mean, sse_const};
  return fit;
}

// Predicted improvement from adding one more day at x.
inline double marginal_gain(const PowerFit& fit, double x) {
  return power_eval(fit, x + 1.0) - power_eval(fit, x);
}

// Smallest day count whose predicted next-day gain drops below the
// threshold. Scans day by day so it needs no inversion of the curve.
inline int threshold_day(const PowerFit& fit, double threshold,
                         int horizon = 365) {
  for (int d = 1; d <= horizon; ++d)
    if (marginal_gain(fit, double(d)) < threshold) return d;
  fail(ErrorCode::not_reached,
       "marginal gain stays at or above the threshold inside the horizon");
}

}  // namespace dpi
