#pragma once

// Linear student-teacher model trained by gradient flow on N Gaussian samples
// in d_in dimensions, with load ratio lambda = d_in / N.
//
// An example counts as correct when its squared error is below epsilon, which
// gives accuracy Erf(sqrt(epsilon / (2 L))) for mean loss L. Losses are
// available two ways:
//  * exact finite-size dynamics from the spectrum of the sample covariance, and
//  * the long-time approximation of the expected training loss, with the
//    validation loss obtained from dL_gen/dt = -4 eta0 L_train integrated
//    from infinity (L_gen(inf) = 0).

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "grokfit/curvefit.hpp"
#include "grokfit/error.hpp"
#include "grokfit/matrix.hpp"
#include "grokfit/metrics.hpp"
#include "grokfit/numerics.hpp"
#include "grokfit/parallel.hpp"

namespace grokfit::linear {

struct LinearConfig {
  double lambda = 1.05;
  double eta0 = 0.01;
  double epsilon = 1e-10;
  std::size_t grid_points = 2000;

  /// Rate of the slowest exponential mode, 4 eta0 (1 - sqrt(lambda))^2.
  double decay_rate() const noexcept {
    const double gap = 1.0 - std::sqrt(lambda);
    return 4.0 * eta0 * gap * gap;
  }

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("LinearConfig: lambda must be positive");
    if (lambda == 1.0) throw DomainError("LinearConfig: lambda = 1 has no exponential decay");
    if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw DomainError("LinearConfig: eta0 must be positive");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw DomainError("LinearConfig: epsilon must be positive");
    if (grid_points < 2) throw DomainError("LinearConfig: grid_points must be at least 2");
  }

  /// Non-fatal observations about the configuration (epsilon outside the small-threshold regime).
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (epsilon > 1e-4) w.push_back("epsilon > 1e-4 is outside the small-threshold regime");
    return w;
  }
};

struct FiniteSizeInstance {
  std::size_t d_in = 0;
  std::size_t n_samples = 0;
  Matrix sigma_tr;
  std::vector<double> d0;
  std::uint64_t seed = 0;
};

struct LossCurve {
  std::vector<double> times;
  std::vector<double> l_train;
  std::vector<double> l_gen;
  // l_gen split into its decaying part and the constant null-space mass; the
  // decaying part keeps full relative precision long after it drops below
  // the rounding level of the plateau.
  std::vector<double> l_gen_decaying;
  double l_gen_plateau = 0.0;
};

inline double accuracy_of_loss(double loss, double epsilon) {
  if (!(loss > 0.0)) throw DomainError("accuracy_of_loss: loss must be positive");
  if (!(epsilon > 0.0)) throw DomainError("accuracy_of_loss: epsilon must be positive");
  return erf(std::sqrt(epsilon / (2.0 * loss)));
}

/// Loss at which accuracy_of_loss equals `accuracy`.
inline double loss_at_accuracy(double accuracy, double epsilon) {
  const double x = erfinv(accuracy);
  return epsilon / (2.0 * x * x);
}

/// Smallest eta0 t at which the long-time approximation may be evaluated.
inline double validity_floor(const LinearConfig& cfg) { return 5.0 * std::sqrt(cfg.lambda) / cfg.eta0; }

/// True when eta0 t >= 10 sqrt(lambda), the comfortable part of the validity regime.
inline bool well_inside_validity(double t, const LinearConfig& cfg) {
  return cfg.eta0 * t >= 10.0 * std::sqrt(cfg.lambda);
}

/// Long-time expected training loss
///   exp(-4 eta0 (1 - sqrt(lambda))^2 t) / (16 sqrt(pi) lambda^(3/4) (eta0 t)^(3/2)).
inline double ltr_approx(double t, const LinearConfig& cfg) {
  if (!(t > 0.0)) throw DomainError("ltr_approx: t must be positive");
  if (t < validity_floor(cfg))
    throw DomainError("ltr_approx: eta0 t below 5 sqrt(lambda), outside the long-time regime");
  const double et = cfg.eta0 * t;
  return std::exp(-cfg.decay_rate() * t) /
         (16.0 * kSqrtPi * std::pow(cfg.lambda, 0.75) * et * std::sqrt(et));
}

/// 4 eta0 times the integral of ltr_approx over [t, inf).
inline double lgen_approx(double t, const LinearConfig& cfg, double rel_tol = 1e-10) {
  if (!(t > 0.0)) throw DomainError("lgen_approx: t must be positive");
  if (t < validity_floor(cfg))
    throw DomainError("lgen_approx: eta0 t below 5 sqrt(lambda), outside the long-time regime");
  const auto q = integrate_tail([&](double u) { return ltr_approx(u, cfg); }, t, cfg.decay_rate(), rel_tol);
  return 4.0 * cfg.eta0 * q.value;
}

inline double train_accuracy_approx(double t, const LinearConfig& cfg) {
  return accuracy_of_loss(ltr_approx(t, cfg), cfg.epsilon);
}

inline double gen_accuracy_approx(double t, const LinearConfig& cfg) {
  return accuracy_of_loss(lgen_approx(t, cfg), cfg.epsilon);
}

/// Time at which an increasing accuracy function crosses 0.5, found by doubling
/// an upper bracket from 10 sqrt(lambda) / eta0 and then bisecting.
inline double midpoint_crossing(const std::function<double(double)>& accuracy, const LinearConfig& cfg) {
  constexpr double kLimit = 1e12;
  const double start = 10.0 * std::sqrt(cfg.lambda) / cfg.eta0;
  double lo = start;
  if (accuracy(lo) >= 0.5)
    throw BracketError("auto_time_grid: accuracy already above 0.5 at the start of the validity regime");
  double hi = 2.0 * lo;
  while (accuracy(hi) < 0.5) {
    lo = hi;
    hi *= 2.0;
    if (hi > kLimit) throw BracketError("auto_time_grid: midpoint crossing beyond 1e12 time units");
  }
  return bisect(accuracy, 0.5, lo, hi, 1e-13);
}

struct MidpointTimes {
  double train = 0.0;
  double gen = 0.0;
};

inline MidpointTimes midpoint_times(const LinearConfig& cfg) {
  cfg.validate();
  return {midpoint_crossing([&](double t) { return train_accuracy_approx(t, cfg); }, cfg),
          midpoint_crossing([&](double t) { return gen_accuracy_approx(t, cfg); }, cfg)};
}

/// grid_points log-spaced times over [t_mid_train / 5, 5 t_mid_gen].
inline std::vector<double> auto_time_grid(const LinearConfig& cfg) {
  const auto mids = midpoint_times(cfg);
  const double lo = std::max(mids.train / 5.0, validity_floor(cfg));
  const double hi = 5.0 * mids.gen;
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  std::vector<double> grid(cfg.grid_points);
  const double step = (lhi - llo) / static_cast<double>(cfg.grid_points - 1);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = std::exp(llo + step * static_cast<double>(i));
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

struct AnalyticCurves {
  AccuracyCurve train;
  AccuracyCurve validation;
  std::vector<std::string> warnings;
};

inline AnalyticCurves analytic_curves(const LinearConfig& cfg) {
  cfg.validate();
  const auto grid = auto_time_grid(cfg);
  std::vector<double> tr(grid.size()), gen(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    tr[i] = train_accuracy_approx(grid[i], cfg);
    gen[i] = gen_accuracy_approx(grid[i], cfg);
  }
  auto warnings = cfg.warnings();
  if (!well_inside_validity(grid.front(), cfg))
    warnings.push_back("time grid starts below eta0 t = 10 sqrt(lambda)");
  return {AccuracyCurve(grid, std::move(tr), CurveKind::train),
          AccuracyCurve(grid, std::move(gen), CurveKind::validation), std::move(warnings)};
}

// ---------------------------------------------------------------------------
// Finite-size exact dynamics

/// Draws X (N x d_in, standard normal) and forms Sigma = X^T X / N with
/// N = round(d_in / lambda); D0 has i.i.d. N(0, 1/d_in) entries.
inline FiniteSizeInstance sample_instance(std::size_t d_in, double lambda, std::uint64_t seed) {
  if (d_in < 1) throw DomainError("sample_instance: d_in must be positive");
  if (!(lambda > 0.0)) throw DomainError("sample_instance: lambda must be positive");
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(d_in) / lambda));
  if (n < 1) throw DomainError("sample_instance: round(d_in / lambda) must be at least 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FiniteSizeInstance inst;
  inst.d_in = d_in;
  inst.n_samples = n;
  inst.seed = seed;
  inst.sigma_tr = Matrix(d_in, d_in);
  std::vector<double> x(d_in);
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& xi : x) xi = normal(rng);
    for (std::size_t i = 0; i < d_in; ++i) {
      const double xi = x[i];
      auto row = inst.sigma_tr.row(i);
      for (std::size_t j = i; j < d_in; ++j) row[j] += xi * x[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < d_in; ++i)
    for (std::size_t j = i; j < d_in; ++j) {
      const double v = inst.sigma_tr(i, j) * inv_n;
      inst.sigma_tr(i, j) = v;
      inst.sigma_tr(j, i) = v;
    }
  const double sd = 1.0 / std::sqrt(static_cast<double>(d_in));
  inst.d0.resize(d_in);
  for (auto& v : inst.d0) v = sd * normal(rng);
  return inst;
}

/// Eigenvalues of Sigma and the squared coordinates of D0 in its eigenbasis;
/// eigenvalues below 1e-12 are set to zero.
struct SpectralMeasure {
  std::vector<double> eigenvalues;
  std::vector<double> weights;
};

inline SpectralMeasure spectral_measure(const FiniteSizeInstance& inst) {
  auto proj = sym_eigen_project(inst.sigma_tr, inst.d0);
  SpectralMeasure sm{std::move(proj.eigenvalues), {}};
  sm.weights.resize(proj.coefficients.size());
  for (std::size_t i = 0; i < sm.weights.size(); ++i) {
    sm.weights[i] = proj.coefficients[i] * proj.coefficients[i];
    if (sm.eigenvalues[i] < 1e-12) sm.eigenvalues[i] = 0.0;
  }
  return sm;
}

/// L_train(t) = sum_i c_i^2 l_i exp(-4 eta0 l_i t), L_gen(t) = sum_i c_i^2 exp(-4 eta0 l_i t).
inline LossCurve exact_losses(const SpectralMeasure& sm, double eta0, const std::vector<double>& times) {
  if (!(eta0 > 0.0)) throw DomainError("exact_losses: eta0 must be positive");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0)) throw DomainError("exact_losses: times must be non-negative");
    if (i > 0 && !(times[i] > times[i - 1])) throw DomainError("exact_losses: times must increase");
  }
  LossCurve out{times, std::vector<double>(times.size()), std::vector<double>(times.size()),
                std::vector<double>(times.size()), 0.0};
  for (std::size_t i = 0; i < sm.eigenvalues.size(); ++i)
    if (sm.eigenvalues[i] == 0.0) out.l_gen_plateau += sm.weights[i];
  for (std::size_t k = 0; k < times.size(); ++k) {
    double ltr = 0.0, decaying = 0.0;
    for (std::size_t i = 0; i < sm.eigenvalues.size(); ++i) {
      if (sm.eigenvalues[i] == 0.0) continue;
      const double e = sm.weights[i] * std::exp(-4.0 * eta0 * sm.eigenvalues[i] * times[k]);
      ltr += e * sm.eigenvalues[i];
      decaying += e;
    }
    out.l_train[k] = ltr;
    out.l_gen_decaying[k] = decaying;
    out.l_gen[k] = decaying + out.l_gen_plateau;
  }
  return out;
}

inline LossCurve exact_losses(const FiniteSizeInstance& inst, double eta0, const std::vector<double>& times) {
  return exact_losses(spectral_measure(inst), eta0, times);
}

/// Finite-size check of the long-time approximation: exact training loss
/// averaged over instances, next to ltr_approx, on a log grid spanning
/// eta0 t = 10 sqrt(lambda) up to the training midpoint crossing.
struct OracleComparison {
  std::vector<double> times;
  std::vector<double> ltr_approx;
  std::vector<double> ltr_exact_mean;
};

inline OracleComparison finite_size_oracle(const LinearConfig& cfg, std::size_t d_in,
                                           const std::vector<std::uint64_t>& seeds,
                                           std::size_t n_times = 40, std::size_t workers = 1) {
  cfg.validate();
  if (seeds.empty()) throw DomainError("finite_size_oracle: need at least one seed");
  if (n_times < 2) throw DomainError("finite_size_oracle: need at least two times");
  const double t_lo = 10.0 * std::sqrt(cfg.lambda) / cfg.eta0;
  const double t_hi = midpoint_times(cfg).train;
  OracleComparison out;
  out.times.resize(n_times);
  for (std::size_t i = 0; i < n_times; ++i)
    out.times[i] = t_lo * std::pow(t_hi / t_lo, static_cast<double>(i) / static_cast<double>(n_times - 1));
  out.times.back() = t_hi;
  out.ltr_approx.resize(n_times);
  for (std::size_t i = 0; i < n_times; ++i) out.ltr_approx[i] = ltr_approx(out.times[i], cfg);

  std::vector<LossCurve> per_seed(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t k) {
    per_seed[k] = exact_losses(sample_instance(d_in, cfg.lambda, seeds[k]), cfg.eta0, out.times);
  });
  out.ltr_exact_mean.assign(n_times, 0.0);
  for (const auto& lc : per_seed)
    for (std::size_t i = 0; i < n_times; ++i) out.ltr_exact_mean[i] += lc.l_train[i];
  for (auto& v : out.ltr_exact_mean) v /= static_cast<double>(seeds.size());
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepEntry {
  double lambda = 0.0;
  std::optional<GrokkingMetrics> metrics;
  std::optional<AnalyticCurves> curves;
  std::string error;  // non-empty when this lambda failed
};

/// Analytic curves and fits for one lambda; failures are captured, not thrown.
inline SweepEntry sweep_point(double lambda, const LinearConfig& tmpl, const FitSpec& spec) {
  SweepEntry entry;
  entry.lambda = lambda;
  try {
    LinearConfig cfg = tmpl;
    cfg.lambda = lambda;
    entry.curves = analytic_curves(cfg);
    const auto ft = fit_erf(entry.curves->train, spec);
    const auto fg = fit_erf(entry.curves->validation, spec);
    entry.metrics = grokking_metrics(ft, fg);
  } catch (const Error& e) {
    entry.error = e.what();
  }
  return entry;
}

/// Rejects lambda = 1 and lists that straddle it.
inline void check_lambda_list(const std::vector<double>& lambdas) {
  bool above = false, below = false;
  for (double l : lambdas) {
    if (l == 1.0) throw DomainError("lambda_sweep: lambda = 1 is not supported");
    (l > 1.0 ? above : below) = true;
  }
  if (above && below) throw DomainError("lambda_sweep: lambdas must all lie on one side of 1");
}

/// One entry per lambda, in input order.
inline std::vector<SweepEntry> lambda_sweep(const std::vector<double>& lambdas, const LinearConfig& tmpl,
                                            const FitSpec& spec) {
  check_lambda_list(lambdas);
  std::vector<SweepEntry> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) out.push_back(sweep_point(l, tmpl, spec));
  return out;
}

}  // namespace grokfit::linear
