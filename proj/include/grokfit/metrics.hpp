#pragma once

// Grokking measures derived from a (train, validation) pair of Erf fits, plus
// trend statistics used when comparing runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "grokfit/curvefit.hpp"
#include "grokfit/error.hpp"
#include "grokfit/numerics.hpp"

namespace grokfit {

struct GrokkingMetrics {
  double m = 0.0;
  double r_rel = 0.0;
  double r_abs = 0.0;
  ErfFit fit_train;
  ErfFit fit_gen;
};

struct TrendFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n_points = 0;
};

/// m = t*_gen / t*_train - 1. Negative when validation jumps first.
inline double relative_gap(const ErfFit& fit_train, const ErfFit& fit_gen) {
  if (!(fit_train.t_star > 0.0) || !(fit_gen.t_star > 0.0))
    throw DomainError("relative_gap: jump times must be positive");
  return fit_gen.t_star / fit_train.t_star - 1.0;
}

/// R_rel = s_gen / s_train, which is also the ratio of peak accuracy gradients.
inline double relative_sharpness(const ErfFit& fit_train, const ErfFit& fit_gen) {
  if (!(fit_train.s > 0.0) || !(fit_gen.s > 0.0))
    throw DomainError("relative_sharpness: sharpness must be positive");
  return fit_gen.s / fit_train.s;
}

/// Peak gradient of the fitted validation curve, 2 a s / sqrt(pi).
inline double absolute_sharpness(const ErfFit& fit_gen) {
  if (!(fit_gen.s >= 0.0)) throw DomainError("absolute_sharpness: sharpness must be non-negative");
  return 2.0 * fit_gen.a * fit_gen.s / kSqrtPi;
}

/// Accuracy at the jump time, a Erf(theta) + b.
inline double threshold_accuracy(const FitSpec& spec) {
  spec.validate();
  return spec.amplitude() * erf(spec.theta) + spec.offset();
}

inline GrokkingMetrics grokking_metrics(const ErfFit& fit_train, const ErfFit& fit_gen) {
  return {relative_gap(fit_train, fit_gen), relative_sharpness(fit_train, fit_gen),
          absolute_sharpness(fit_gen), fit_train, fit_gen};
}

/// Ordinary least squares of ln y on ln x.
inline TrendFit loglog_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw DomainError("loglog_fit: need at least two points");
  std::vector<double> lx, ly;
  lx.reserve(points.size());
  ly.reserve(points.size());
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) throw DomainError("loglog_fit: coordinates must be positive");
    lx.push_back(std::log(x));
    ly.push_back(std::log(y));
  }
  const double n = static_cast<double>(points.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("loglog_fit: x values are all equal");
  TrendFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.n_points = points.size();
  if (syy == 0.0) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
      ss_res += r * r;
    }
    fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return fit;
}

namespace detail {

// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman: length mismatch");
  if (x.size() < 2) throw DomainError("spearman: need at least two points");
  const auto rx = detail::ranks(x);
  const auto ry = detail::ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
    sxy += (rx[i] - mx) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace grokfit
