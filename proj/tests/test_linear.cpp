#include <gtest/gtest.h>

#include <cmath>

#include "grokfit/linear_dynamics.hpp"
#include "oracles.hpp"

using namespace grokfit;
using namespace grokfit::linear;

namespace {

LinearConfig config(double lambda) {
  LinearConfig c;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST(AccuracyOfLoss, Values) {
  EXPECT_NEAR(accuracy_of_loss(0.5e-10, 1e-10), oracle::erf_series(1.0), 1e-12);
  EXPECT_NEAR(accuracy_of_loss(0.5e-10, 1e-10), 0.842700793, 1e-9);
  EXPECT_LT(accuracy_of_loss(1e30, 1e-10), 1e-15);
  EXPECT_EQ(accuracy_of_loss(1e-300, 1e-10), 1.0);
  EXPECT_THROW(accuracy_of_loss(0.0, 1e-10), DomainError);
  EXPECT_THROW(accuracy_of_loss(1.0, 0.0), DomainError);
  double prev = 2.0;
  for (double l = 3e-12; l < 1e-6; l *= 1.1) {
    const double a = accuracy_of_loss(l, 1e-10);
    EXPECT_LT(a, prev);
    prev = a;
  }
  EXPECT_NEAR(accuracy_of_loss(loss_at_accuracy(0.5, 1e-10), 1e-10), 0.5, 1e-12);
}

TEST(LtrApprox, Values) {
  const auto c = config(1.1);
  EXPECT_NEAR(ltr_approx(1e4, c), 1.27e-5, 0.01e-5);
  EXPECT_NEAR(ltr_approx(1e4, c) / oracle::ltr(1e4, 1.1, 0.01), 1.0, 1e-13);
  for (double t : {1e4, 3e4, 1e5}) {
    const double ratio = ltr_approx(2 * t, c) / ltr_approx(t, c);
    EXPECT_NEAR(ratio, std::exp(-c.decay_rate() * t) * std::pow(2.0, -1.5), 1e-13);
  }
  EXPECT_THROW(ltr_approx(0.0, c), DomainError);
  EXPECT_THROW(ltr_approx(100.0, c), DomainError);  // eta0 t = 1 < 5 sqrt(lambda)
}

TEST(LgenApprox, MatchesClosedFormTail) {
  for (double lambda : {1.003, 1.05, 1.1, 0.9}) {
    const auto c = config(lambda);
    for (double t : {1e4, 1e5, 1e6}) {
      if (lambda == 1.1 && t == 1e6) continue;  // below double range of the oracle's erfc
      EXPECT_NEAR(lgen_approx(t, c) / oracle::lgen(t, lambda, 0.01), 1.0, 1e-9) << lambda << ' ' << t;
    }
  }
}

TEST(LgenApprox, PositiveDecreasingAndLagsTraining) {
  const auto c = config(1.05);
  const auto grid = auto_time_grid(c);
  double prev = INFINITY;
  for (std::size_t i = 0; i < grid.size(); i += 20) {
    const double g = lgen_approx(grid[i], c);
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, prev);
    EXPECT_GT(g / ltr_approx(grid[i], c), 1.0);
    prev = g;
  }
  EXPECT_LT(lgen_approx(1e8, c), 1e-300 + 1e-100);
}

TEST(LgenApprox, DerivativeRelation) {
  const auto c = config(1.05);
  for (double t : {6e4, 2e5, 1e6}) {
    const double h = 1e-3 * t;
    const double fd = (lgen_approx(t + h, c) - lgen_approx(t - h, c)) / (2 * h);
    EXPECT_NEAR(fd / (-4 * c.eta0 * ltr_approx(t, c)), 1.0, 1e-3);
  }
}

TEST(AutoGrid, Construction) {
  const auto c = config(1.05);
  const auto mids = midpoint_times(c);
  EXPECT_NEAR(train_accuracy_approx(mids.train, c), 0.5, 1e-6);
  EXPECT_NEAR(gen_accuracy_approx(mids.gen, c), 0.5, 1e-6);
  EXPECT_LT(mids.train, mids.gen);
  const auto grid = auto_time_grid(c);
  ASSERT_EQ(grid.size(), c.grid_points);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GT(grid[i], grid[i - 1]);
  EXPECT_LT(grid.front(), mids.train);
  EXPECT_GT(grid.back(), mids.gen);
  EXPECT_NEAR(grid.front(), mids.train / 5, 1e-9 * mids.train);
  EXPECT_NEAR(grid.back(), 5 * mids.gen, 1e-9 * mids.gen);
}

TEST(AutoGrid, SlowerDecayNearOne) {
  const auto near = midpoint_times(config(1.003));
  const auto mid = midpoint_times(config(1.05));
  const auto far = midpoint_times(config(1.1));
  EXPECT_GT(near.train, mid.train);
  EXPECT_GT(mid.train, far.train);
  EXPECT_GT(near.gen, mid.gen);
  EXPECT_GE(auto_time_grid(config(1.003)).back(), 10 * auto_time_grid(config(1.1)).back());
}

TEST(AutoGrid, LargeEpsilonFailsToBracket) {
  auto c = config(1.05);
  c.epsilon = 1.0;
  EXPECT_THROW(auto_time_grid(c), BracketError);
  EXPECT_FALSE(c.warnings().empty());
}

TEST(AnalyticCurves, Shape) {
  const auto c = config(1.05);
  const auto curves = analytic_curves(c);
  EXPECT_LE(curves.train.values().front(), 0.05);
  EXPECT_LE(curves.validation.values().front(), 0.05);
  EXPECT_GE(curves.train.values().back(), 0.95);
  EXPECT_GE(curves.validation.values().back(), 0.95);
  const FitSpec spec;
  const auto ft = fit_erf(curves.train, spec);
  const auto fg = fit_erf(curves.validation, spec);
  EXPECT_LT(ft.t_star, fg.t_star);
  EXPECT_LE(ft.rmse_window, 0.05);
  EXPECT_LE(fg.rmse_window, 0.05);
}

TEST(LinearConfig, Validation) {
  EXPECT_THROW(config(1.0).validate(), DomainError);
  EXPECT_THROW(config(-1.0).validate(), DomainError);
  auto c = config(1.05);
  c.eta0 = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_TRUE(config(1.05).warnings().empty());
}

TEST(SampleInstance, OneDimensional) {
  const auto inst = sample_instance(1, 1.0, 17);
  ASSERT_EQ(inst.n_samples, 1u);
  const double x2 = inst.sigma_tr(0, 0);
  const double d0 = inst.d0[0];
  const std::vector<double> times{0.0, 1.0, 10.0, 100.0};
  const auto l = exact_losses(inst, 0.01, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double e = std::exp(-4 * 0.01 * x2 * times[k]);
    EXPECT_NEAR(l.l_train[k], d0 * d0 * x2 * e, 1e-12 * d0 * d0 * x2);
    EXPECT_NEAR(l.l_gen[k], d0 * d0 * e, 1e-12 * d0 * d0);
  }
}

TEST(SampleInstance, DeterministicSymmetricAndLowRank) {
  const auto a = sample_instance(40, 1.25, 9);
  const auto b = sample_instance(40, 1.25, 9);
  EXPECT_EQ(a.sigma_tr, b.sigma_tr);
  EXPECT_EQ(a.d0, b.d0);
  EXPECT_EQ(a.n_samples, 32u);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 40; ++j) EXPECT_EQ(a.sigma_tr(i, j), a.sigma_tr(j, i));
  const auto e = sym_eigen(a.sigma_tr);
  std::size_t rank = 0;
  for (double v : e.eigenvalues) {
    EXPECT_GE(v, -1e-10);
    if (v > 1e-10) ++rank;
  }
  EXPECT_LE(rank, 32u);
}

TEST(SampleInstance, WishartTraceMean) {
  double mean = 0.0, norm = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = sample_instance(30, 1.2, seed);
    for (std::size_t i = 0; i < 30; ++i) mean += inst.sigma_tr(i, i);
    for (double v : inst.d0) norm += v * v;
  }
  EXPECT_NEAR(mean / 50 / 30, 1.0, 0.05);
  EXPECT_NEAR(norm / 50, 1.0, 0.1);
}

TEST(ExactLosses, InitialQuadraticForms) {
  const auto inst = sample_instance(60, 1.05, 4);
  const auto l = exact_losses(inst, 0.01, {0.0});
  double qtr = 0.0, qgen = 0.0;
  for (std::size_t i = 0; i < 60; ++i) {
    qgen += inst.d0[i] * inst.d0[i];
    for (std::size_t j = 0; j < 60; ++j) qtr += inst.d0[i] * inst.sigma_tr(i, j) * inst.d0[j];
  }
  EXPECT_NEAR(l.l_train[0], qtr, 1e-10);
  EXPECT_NEAR(l.l_gen[0], qgen, 1e-10);
}

TEST(ExactLosses, MonotoneAndDerivativeRelation) {
  const double eta0 = 0.01;
  const auto sm = spectral_measure(sample_instance(200, 1.05, 2));
  std::vector<double> times;
  for (double t = 10.0; t < 3e6; t *= 1.2) times.push_back(t);
  const auto l = exact_losses(sm, eta0, times);
  for (std::size_t k = 1; k < times.size(); ++k) {
    EXPECT_LE(l.l_train[k], l.l_train[k - 1]);
    EXPECT_LE(l.l_gen[k], l.l_gen[k - 1]);
  }
  EXPECT_GT(l.l_gen_plateau, 0.0);  // lambda > 1 leaves a null space
  for (double t : times) {
    const double h = 1e-4 * t;
    const auto p = exact_losses(sm, eta0, {t - h, t, t + h});
    const double fd = (p.l_gen_decaying[2] - p.l_gen_decaying[0]) / (2 * h);
    EXPECT_NEAR(fd / (-4 * eta0 * p.l_train[1]), 1.0, 1e-4) << t;
  }
}

TEST(ExactLosses, RejectsBadTimes) {
  const auto sm = spectral_measure(sample_instance(5, 0.5, 1));
  EXPECT_THROW(exact_losses(sm, 0.01, {2.0, 1.0}), DomainError);
  EXPECT_THROW(exact_losses(sm, 0.0, {1.0}), DomainError);
}

TEST(LambdaSweep, TrendsAndErrors) {
  const auto entries = lambda_sweep({1.01, 1.05, 1.1}, LinearConfig{}, FitSpec{});
  ASSERT_EQ(entries.size(), 3u);
  for (const auto& e : entries) ASSERT_TRUE(e.metrics) << e.error;
  EXPECT_GT(entries[0].metrics->m, entries[1].metrics->m);
  EXPECT_GT(entries[1].metrics->m, entries[2].metrics->m);
  EXPECT_GT(entries[2].metrics->m, 0.0);
  EXPECT_THROW(lambda_sweep({0.9, 1.1}, LinearConfig{}, FitSpec{}), DomainError);
  EXPECT_THROW(lambda_sweep({1.0}, LinearConfig{}, FitSpec{}), DomainError);
  LinearConfig bad;
  bad.epsilon = 1.0;
  const auto failed = lambda_sweep({1.05}, bad, FitSpec{});
  EXPECT_FALSE(failed[0].metrics);
  EXPECT_FALSE(failed[0].error.empty());
}
