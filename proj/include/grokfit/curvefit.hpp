#pragma once

// Accuracy curves and the error-function fit A(t) = a Erf(s (t - t*)) + b.
// Only s and t* are fitted; a and b are fixed by the accuracy range [c, d].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grokfit/error.hpp"
#include "grokfit/matrix.hpp"
#include "grokfit/numerics.hpp"

namespace grokfit {

enum class CurveKind { train, validation };

inline std::string_view to_string(CurveKind k) {
  return k == CurveKind::train ? "train" : "validation";
}

class AccuracyCurve {
 public:
  AccuracyCurve(std::vector<double> epochs, std::vector<double> values, CurveKind kind)
      : epochs_(std::move(epochs)), values_(std::move(values)), kind_(kind) {
    if (epochs_.size() != values_.size())
      throw DomainError("AccuracyCurve: epochs and values differ in length");
    if (epochs_.size() < 2) throw DomainError("AccuracyCurve: need at least two samples");
    for (std::size_t i = 0; i < epochs_.size(); ++i) {
      if (!std::isfinite(epochs_[i]) || epochs_[i] < 0.0)
        throw DomainError("AccuracyCurve: epochs must be finite and non-negative");
      if (i > 0 && !(epochs_[i] > epochs_[i - 1]))
        throw DomainError("AccuracyCurve: epochs must be strictly increasing");
      if (!(values_[i] >= 0.0 && values_[i] <= 1.0))
        throw DomainError("AccuracyCurve: accuracy values must lie in [0, 1]");
    }
  }

  const std::vector<double>& epochs() const noexcept { return epochs_; }
  const std::vector<double>& values() const noexcept { return values_; }
  CurveKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return epochs_.size(); }

 private:
  std::vector<double> epochs_;
  std::vector<double> values_;
  CurveKind kind_;
};

struct FitSpec {
  double baseline_accuracy = 0.0;  // c
  double max_accuracy = 1.0;       // d
  double theta = 0.0;
  double transition_margin = 0.05;
  double clamp_delta = 1e-4;

  double amplitude() const noexcept { return 0.5 * (max_accuracy - baseline_accuracy); }
  double offset() const noexcept { return 0.5 * (max_accuracy + baseline_accuracy); }

  void validate() const {
    if (!(baseline_accuracy >= 0.0 && baseline_accuracy < 1.0))
      throw DomainError("FitSpec: baseline accuracy must lie in [0, 1)");
    if (!(max_accuracy > baseline_accuracy && max_accuracy <= 1.0))
      throw DomainError("FitSpec: max accuracy must lie in (c, 1]");
    if (!(transition_margin > 0.0 && transition_margin < 0.5))
      throw DomainError("FitSpec: transition margin must lie in (0, 0.5)");
    if (!(clamp_delta > 0.0 && clamp_delta < 1.0))
      throw DomainError("FitSpec: clamp delta must lie in (0, 1)");
    if (!std::isfinite(theta)) throw DomainError("FitSpec: theta must be finite");
  }
};

struct ErfFit {
  double s = 0.0;
  double t_star = 0.0;
  double a = 0.0;
  double b = 0.0;
  double rmse_window = 0.0;
  std::size_t n_window_points = 0;
};

/// Half-open index range [first, last).
struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const noexcept { return last - first; }
  bool empty() const noexcept { return last <= first; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

inline double erf_model(const ErfFit& fit, double t) {
  return fit.a * erf(fit.s * (t - fit.t_star)) + fit.b;
}

/// Samples of the curve strictly inside the band (c + margin(d-c), d - margin(d-c)),
/// as the maximal contiguous run holding the last crossing of the midpoint b,
/// widened by one sample on each side.
inline IndexRange transition_window(const AccuracyCurve& curve, const FitSpec& spec) {
  spec.validate();
  const auto& v = curve.values();
  const std::size_t n = v.size();
  const double span = spec.max_accuracy - spec.baseline_accuracy;
  const double lo = spec.baseline_accuracy + spec.transition_margin * span;
  const double hi = spec.max_accuracy - spec.transition_margin * span;
  const double mid = spec.offset();

  std::vector<IndexRange> runs;
  for (std::size_t i = 0; i < n;) {
    if (v[i] > lo && v[i] < hi) {
      std::size_t j = i;
      while (j + 1 < n && v[j + 1] > lo && v[j + 1] < hi) ++j;
      runs.push_back({i, j + 1});
      i = j + 1;
    } else {
      ++i;
    }
  }
  if (runs.empty())
    throw InsufficientTransitionError("transition_window: no samples inside the transition band");

  std::optional<std::size_t> last_cross;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const bool below_i = v[i] < mid;
    const bool below_next = v[i + 1] < mid;
    if (below_i != below_next) last_cross = i;
  }

  const IndexRange* chosen = nullptr;
  if (last_cross) {
    // The crossing sits between samples i and i+1; a run holds it if it touches either one.
    const std::size_t i = *last_cross;
    for (const auto& r : runs)
      if ((i >= r.first && i < r.last) || (i + 1 >= r.first && i + 1 < r.last)) chosen = &r;
  }
  if (chosen == nullptr) {
    chosen = &runs.front();
    for (const auto& r : runs)
      if (r.size() > chosen->size()) chosen = &r;
  }
  if (chosen->size() < 5)
    throw InsufficientTransitionError("transition_window: only " + std::to_string(chosen->size()) +
                                      " samples inside the transition band (need 5)");
  return {chosen->first > 0 ? chosen->first - 1 : 0, std::min(chosen->last + 1, n)};
}

/// Root-mean-square of value - model over the window.
inline double fit_rmse(const ErfFit& fit, const AccuracyCurve& curve, IndexRange window) {
  if (window.empty()) throw DomainError("fit_rmse: empty window");
  if (window.last > curve.size()) throw DomainError("fit_rmse: window exceeds curve");
  double ss = 0.0;
  for (std::size_t i = window.first; i < window.last; ++i) {
    const double r = curve.values()[i] - erf_model(fit, curve.epochs()[i]);
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(window.size()));
}

/// Least-squares fit of (s, t*) over the transition window.
///
/// Initial values come from a straight-line fit of erfinv((value - b)/a)
/// against t (the transformed ratio is clamped away from +-1). The estimate is
/// then refined by damped Gauss-Newton on the untransformed residuals.
inline ErfFit fit_erf(const AccuracyCurve& curve, const FitSpec& spec) {
  const IndexRange window = transition_window(curve, spec);
  const double a = spec.amplitude();
  const double b = spec.offset();
  const std::size_t m = window.size();
  std::vector<double> t(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    t[i] = curve.epochs()[window.first + i];
    y[i] = curve.values()[window.first + i];
  }

  // Centre and scale time so that the linearisation is well conditioned.
  double tmean = 0.0;
  for (double ti : t) tmean += ti;
  tmean /= static_cast<double>(m);
  double zmean = 0.0;
  std::vector<double> z(m);
  const double bound = 1.0 - spec.clamp_delta;
  for (std::size_t i = 0; i < m; ++i) {
    const double ratio = std::clamp((y[i] - b) / a, -bound, bound);
    z[i] = erfinv(ratio);
    zmean += z[i];
  }
  zmean /= static_cast<double>(m);
  double sxx = 0.0, sxz = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (t[i] - tmean) * (t[i] - tmean);
    sxz += (t[i] - tmean) * (z[i] - zmean);
  }
  const double s0 = sxz / sxx;
  if (!(s0 > 0.0) || !std::isfinite(s0))
    throw FitDegenerateError("fit_erf: curve does not rise across its transition window");
  const double t0 = tmean - zmean / s0;

  auto residuals = [&](const std::vector<double>& p) {
    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = a * erf(p[0] * (t[i] - p[1])) + b - y[i];
    return r;
  };
  auto jacobian = [&](const std::vector<double>& p) {
    Matrix j(m, 2);
    for (std::size_t i = 0; i < m; ++i) {
      const double u = p[0] * (t[i] - p[1]);
      const double g = a * 2.0 / kSqrtPi * std::exp(-u * u);
      j(i, 0) = g * (t[i] - p[1]);
      j(i, 1) = -g * p[0];
    }
    return j;
  };
  const auto gn = gauss_newton(residuals, jacobian, {s0, t0}, 200, 1e-14);

  ErfFit fit;
  fit.s = gn.params[0];
  fit.t_star = gn.params[1];
  fit.a = a;
  fit.b = b;
  if (!(fit.s > 0.0) || !std::isfinite(fit.s))
    throw FitDegenerateError("fit_erf: fitted sharpness is not positive");
  if (!(fit.t_star > 0.0) || !std::isfinite(fit.t_star))
    throw FitDegenerateError("fit_erf: fitted jump time is not positive");
  fit.n_window_points = m;
  fit.rmse_window = fit_rmse(fit, curve, window);
  return fit;
}

}  // namespace grokfit
