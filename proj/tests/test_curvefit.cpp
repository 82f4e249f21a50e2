#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grokfit/curvefit.hpp"
#include "oracles.hpp"

using namespace grokfit;

namespace {

FitSpec unit_spec() { return FitSpec{}; }

AccuracyCurve synthetic(double s, double t_star, const std::vector<double>& t, const FitSpec& spec = FitSpec{}) {
  auto v = oracle::erf_curve(t, s, t_star, spec.amplitude(), spec.offset());
  for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
  return {t, v, CurveKind::validation};
}

}  // namespace

TEST(AccuracyCurve, Validation) {
  EXPECT_THROW(AccuracyCurve({0, 1}, {0.5}, CurveKind::train), DomainError);
  EXPECT_THROW(AccuracyCurve({0}, {0.5}, CurveKind::train), DomainError);
  EXPECT_THROW(AccuracyCurve({0, 0}, {0.5, 0.6}, CurveKind::train), DomainError);
  EXPECT_THROW(AccuracyCurve({0, 1}, {0.5, 1.1}, CurveKind::train), DomainError);
  EXPECT_THROW(AccuracyCurve({-1, 1}, {0.5, 0.6}, CurveKind::train), DomainError);
  EXPECT_NO_THROW(AccuracyCurve({0, 1}, {0.0, 1.0}, CurveKind::train));
}

TEST(FitSpec, AmplitudeAndOffset) {
  FitSpec s;
  EXPECT_EQ(s.amplitude(), 0.5);
  EXPECT_EQ(s.offset(), 0.5);
  s.baseline_accuracy = 0.5;
  EXPECT_EQ(s.amplitude(), 0.25);
  EXPECT_EQ(s.offset(), 0.75);
  s.max_accuracy = 0.4;
  EXPECT_THROW(s.validate(), DomainError);
}

TEST(ErfModel, Values) {
  ErfFit f{0.01, 500.0, 0.25, 0.75, 0.0, 0};
  EXPECT_EQ(erf_model(f, 500.0), 0.75);
  EXPECT_NEAR(erf_model(f, 1e9), 1.0, 1e-15);
  EXPECT_NEAR(erf_model(f, 500.0 + erfinv(0.5) / 0.01), 0.875, 1e-12);
}

TEST(TransitionWindow, BracketsJump) {
  const auto t = oracle::linspace(0, 1000, 1001);
  const auto c = synthetic(0.01, 500.0, t);
  const auto w = transition_window(c, unit_spec());
  EXPECT_LT(c.epochs()[w.first], 500.0);
  EXPECT_GT(c.epochs()[w.last - 1], 500.0);
  // Band edges 0.05 / 0.95 and one extra sample each side.
  EXPECT_LE(c.values()[w.first], 0.05);
  EXPECT_GE(c.values()[w.last - 1], 0.95);
  EXPECT_GT(c.values()[w.first + 1], 0.05);
  EXPECT_LT(c.values()[w.last - 2], 0.95);
}

TEST(TransitionWindow, ConstantAndStepCurvesFail) {
  const auto t = oracle::linspace(0, 10, 11);
  EXPECT_THROW(transition_window(AccuracyCurve(t, std::vector<double>(11, 0.0), CurveKind::train), unit_spec()),
               InsufficientTransitionError);
  std::vector<double> step(11, 0.0);
  for (std::size_t i = 6; i < 11; ++i) step[i] = 1.0;
  EXPECT_THROW(transition_window(AccuracyCurve(t, step, CurveKind::train), unit_spec()),
               InsufficientTransitionError);
}

TEST(TransitionWindow, PrefersRunHoldingLastMidpointCrossing) {
  // An early blip through the band, then the real (shorter) transition.
  std::vector<double> t, v;
  for (int i = 0; i < 40; ++i) {
    t.push_back(i);
    double x = 0.0;
    if (i >= 2 && i < 12) x = 0.3;        // 10 samples in band, below midpoint
    if (i >= 20 && i < 27) x = 0.2 + 0.1 * (i - 20);  // rises through 0.5
    if (i >= 27) x = 1.0;
    v.push_back(x);
  }
  const auto w = transition_window(AccuracyCurve(t, v, CurveKind::train), unit_spec());
  EXPECT_EQ(w.first, 19u);
  EXPECT_EQ(w.last, 28u);
}

TEST(FitErf, NoiselessRecovery) {
  const auto t = oracle::linspace(0, 1000, 1001);
  const auto f = fit_erf(synthetic(0.01, 500.0, t), unit_spec());
  EXPECT_NEAR(f.s, 0.01, 1e-6 * 0.01);
  EXPECT_NEAR(f.t_star, 500.0, 1e-6 * 500.0);
  EXPECT_EQ(f.a, 0.5);
  EXPECT_EQ(f.b, 0.5);
  EXPECT_LT(f.rmse_window, 1e-9);
}

TEST(FitErf, NoiselessRecoveryParityRange) {
  FitSpec spec;
  spec.baseline_accuracy = 0.5;
  const auto t = oracle::linspace(0, 4000, 2001);
  const auto f = fit_erf(synthetic(0.003, 1700.0, t, spec), spec);
  EXPECT_NEAR(f.s, 0.003, 1e-6 * 0.003);
  EXPECT_NEAR(f.t_star, 1700.0, 1e-6 * 1700.0);
  EXPECT_EQ(f.a, 0.25);
  EXPECT_EQ(f.b, 0.75);
}

TEST(FitErf, NoisyMedianRecovery) {
  const auto t = oracle::linspace(0, 1000, 1001);
  std::vector<double> es, et;
  for (unsigned seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.01);
    auto v = oracle::erf_curve(t, 0.01, 500.0, 0.5, 0.5);
    for (auto& x : v) x = std::clamp(x + nd(rng), 0.0, 1.0);
    const auto f = fit_erf(AccuracyCurve(t, v, CurveKind::train), unit_spec());
    es.push_back(std::abs(f.s / 0.01 - 1.0));
    et.push_back(std::abs(f.t_star / 500.0 - 1.0));
  }
  std::nth_element(es.begin(), es.begin() + 50, es.end());
  std::nth_element(et.begin(), et.begin() + 50, et.end());
  EXPECT_LE(es[50], 0.05);
  EXPECT_LE(et[50], 0.05);
}

TEST(FitErf, TranslationEquivariance) {
  const auto t = oracle::linspace(0, 1000, 801);
  const auto base = synthetic(0.008, 420.0, t);
  const auto f0 = fit_erf(base, unit_spec());
  for (double shift : {37.5, 1000.0, 12345.0}) {
    std::vector<double> ts = t;
    for (auto& x : ts) x += shift;
    const auto f1 = fit_erf(AccuracyCurve(ts, base.values(), CurveKind::validation), unit_spec());
    EXPECT_NEAR(f1.t_star - f0.t_star, shift, 1e-9 * f1.t_star);
    EXPECT_NEAR(f1.s, f0.s, 1e-9 * f0.s);
  }
}

TEST(FitErf, DilationEquivariance) {
  const auto t = oracle::linspace(1, 1000, 801);
  const auto base = synthetic(0.008, 420.0, t);
  const auto f0 = fit_erf(base, unit_spec());
  for (double k : {0.01, 3.0, 1e4}) {
    std::vector<double> ts = t;
    for (auto& x : ts) x *= k;
    const auto f1 = fit_erf(AccuracyCurve(ts, base.values(), CurveKind::validation), unit_spec());
    EXPECT_NEAR(f1.t_star / k, f0.t_star, 1e-9 * f0.t_star);
    EXPECT_NEAR(f1.s * k, f0.s, 1e-9 * f0.s);
  }
}

TEST(FitErf, DecreasingCurveIsDegenerate) {
  const auto t = oracle::linspace(0, 1000, 1001);
  auto v = oracle::erf_curve(t, 0.01, 500.0, 0.5, 0.5);
  std::reverse(v.begin(), v.end());
  for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
  EXPECT_THROW(fit_erf(AccuracyCurve(t, v, CurveKind::train), unit_spec()), FitDegenerateError);
}

TEST(FitErf, Deterministic) {
  const auto t = oracle::linspace(0, 1000, 1001);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.02);
  auto v = oracle::erf_curve(t, 0.01, 500.0, 0.5, 0.5);
  for (auto& x : v) x = std::clamp(x + nd(rng), 0.0, 1.0);
  const AccuracyCurve c(t, v, CurveKind::train);
  const auto a = fit_erf(c, unit_spec());
  const auto b = fit_erf(c, unit_spec());
  EXPECT_EQ(a.s, b.s);
  EXPECT_EQ(a.t_star, b.t_star);
  EXPECT_EQ(a.rmse_window, b.rmse_window);
}

TEST(FitRmse, OwnCurveAndOffset) {
  const auto t = oracle::linspace(0, 1000, 1001);
  const ErfFit f{0.01, 500.0, 0.5, 0.5, 0.0, 0};
  const auto c = synthetic(0.01, 500.0, t);
  const IndexRange w{400, 600};
  EXPECT_NEAR(fit_rmse(f, c, w), 0.0, 1e-9);
  auto shifted = c.values();
  for (auto& x : shifted) x = std::min(1.0, x + 0.1);
  // Model stays below 0.9 on [400, 550], so the +0.1 shift is never clipped there.
  EXPECT_NEAR(fit_rmse(f, AccuracyCurve(t, shifted, CurveKind::train), IndexRange{400, 550}), 0.1, 1e-9);
  EXPECT_THROW(fit_rmse(f, c, IndexRange{5, 5}), DomainError);
}
