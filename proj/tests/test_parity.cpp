#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "grokfit/parity_mlp.hpp"

using namespace grokfit;
using namespace grokfit::parity;

namespace {

ParityConfig small_config() {
  ParityConfig c;
  c.spurious_dims = 5;
  c.train_size = 120;
  c.val_size = 60;
  c.hidden_width = 16;
  c.learning_rate = 0.5;
  c.max_epochs = 300;
  c.saturation_patience = 50;
  return c;
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> v;
  p.for_each([&](double x) { v.push_back(x); });
  return v;
}

}  // namespace

TEST(Parity, Examples) {
  const std::vector<int> a{1, 0, 1}, b{1, 0, 1, 1, 1}, z(6, 0);
  EXPECT_EQ(parity::parity(a, 3), 0);
  EXPECT_EQ(parity::parity(b, 3), 0);
  EXPECT_EQ(parity::parity(b, 4), 1);
  EXPECT_EQ(parity::parity(z, 6), 0);
  EXPECT_THROW(parity::parity(a, 4), DomainError);
}

TEST(MakeDataset, ExhaustiveSmallCase) {
  ParityConfig c;
  c.train_size = 6;
  c.val_size = 2;
  const auto ds = make_dataset(c);
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = ds.inputs.row(i);
    rows.emplace(r.begin(), r.end());
    EXPECT_EQ(ds.labels[i], parity::parity<double>(r, 3));
  }
  EXPECT_EQ(rows.size(), 8u);
  c.val_size = 3;
  EXPECT_THROW(make_dataset(c), DomainError);
}

TEST(MakeDataset, BalanceDisjointnessDeterminism) {
  ParityConfig c;
  c.spurious_dims = 17;
  c.train_size = 1000;
  c.val_size = 200;
  const auto a = make_dataset(c);
  const auto b = make_dataset(c);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  double ones = 0.0;
  for (std::size_t i = 0; i < a.train_size; ++i) ones += a.labels[i];
  EXPECT_GE(ones / a.train_size, 0.4);
  EXPECT_LE(ones / a.train_size, 0.6);
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < a.size(); ++i) rows.emplace(a.inputs.row(i).begin(), a.inputs.row(i).end());
  EXPECT_EQ(rows.size(), a.size());
  c.seed = 1;
  EXPECT_NE(make_dataset(c).inputs, a.inputs);
}

TEST(MakeDataset, SpuriousBitsNeverChangeLabels) {
  ParityConfig c;
  c.spurious_dims = 9;
  c.train_size = 200;
  c.val_size = 50;
  const auto ds = make_dataset(c);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<double> row(ds.inputs.row(i).begin(), ds.inputs.row(i).end());
    for (std::size_t bit = 3; bit < row.size(); ++bit) {
      auto flipped = row;
      flipped[bit] = 1.0 - flipped[bit];
      EXPECT_EQ(parity::parity<double>(flipped, 3), ds.labels[i]);
    }
  }
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 6, hidden = 8, n = 16;
    auto p = MlpParams::he_normal(in, hidden, rng);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& b : p.b1) b = nd(rng);
    Matrix x(n, in);
    std::vector<int> y(n);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < in; ++c) x(i, c) = coin(rng) ? 1.0 : 0.0;
      y[i] = coin(rng) ? 1 : 0;
    }
    MlpParams g;
    loss_and_gradient(p, x, y, 0, n, &g);
    const auto analytic = flatten(g);
    std::vector<double> numeric;
    std::size_t k = 0;
    const double h = 1e-6;
    auto probe = p;
    probe.for_each([&](double& w) {
      const double w0 = w;
      w = w0 + h;
      const double up = loss_and_gradient(probe, x, y, 0, n, nullptr);
      w = w0 - h;
      const double down = loss_and_gradient(probe, x, y, 0, n, nullptr);
      w = w0;
      numeric.push_back((up - down) / (2 * h));
      ++k;
    });
    ASSERT_EQ(numeric.size(), analytic.size());
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (numeric[i] - analytic[i]) * (numeric[i] - analytic[i]);
      norm += analytic[i] * analytic[i];
    }
    EXPECT_LE(std::sqrt(diff / norm), 1e-5) << "trial " << trial;
  }
}

TEST(Mlp, WeightDecayShrinksWeights) {
  std::mt19937_64 rng(1);
  auto p = MlpParams::he_normal(5, 7, rng);
  const auto before = flatten(p);
  gradient_step(p, MlpParams::zeros(5, 7), 1e-3, 0.5);
  const auto after = flatten(p);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_LE(std::abs(after[i]), std::abs(before[i]));
  double nb = 0, na = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    nb += before[i] * before[i];
    na += after[i] * after[i];
  }
  EXPECT_LT(na, nb);
}

TEST(Mlp, SmallStepsDecreaseLossWithoutDecay) {
  std::mt19937_64 rng(2);
  const auto ds = make_dataset(small_config());
  auto p = MlpParams::he_normal(ds.inputs.cols(), 16, rng);
  MlpParams g;
  double prev = loss_and_gradient(p, ds.inputs, ds.labels, 0, ds.train_size, &g);
  for (int i = 0; i < 50; ++i) {
    gradient_step(p, g, 1e-3, 0.0);
    const double l = loss_and_gradient(p, ds.inputs, ds.labels, 0, ds.train_size, &g);
    EXPECT_LE(l, prev);
    prev = l;
  }
}

TEST(Mlp, AccuracyMatchesLossPassCount) {
  std::mt19937_64 rng(3);
  const auto ds = make_dataset(small_config());
  const auto p = MlpParams::he_normal(ds.inputs.cols(), 16, rng);
  std::size_t hits = 0;
  loss_and_gradient(p, ds.inputs, ds.labels, 0, ds.train_size, nullptr, &hits);
  EXPECT_EQ(static_cast<double>(hits) / ds.train_size, accuracy(p, ds.inputs, ds.labels, 0, ds.train_size));
}

TEST(Train, DeterministicAndExactFractions) {
  const auto c = small_config();
  const auto a = train(c);
  const auto b = train(c);
  EXPECT_EQ(a.epochs, b.epochs);
  EXPECT_EQ(a.acc_train, b.acc_train);
  EXPECT_EQ(a.acc_val, b.acc_val);
  ASSERT_EQ(a.acc_train.size(), a.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const double nt = a.acc_train[i] * c.train_size, nv = a.acc_val[i] * c.val_size;
    EXPECT_NEAR(nt, std::round(nt), 1e-9);
    EXPECT_NEAR(nv, std::round(nv), 1e-9);
  }
  EXPECT_EQ(a.epochs.front(), 0.0);
}

TEST(Train, RecordEvery) {
  auto c = small_config();
  c.record_every = 7;
  c.max_epochs = 50;
  const auto r = train(c);
  ASSERT_EQ(r.epochs.size(), 8u);
  for (std::size_t i = 0; i < r.epochs.size(); ++i) EXPECT_EQ(r.epochs[i], 7.0 * i);
}

TEST(Train, NoConcealmentFitsTrainingSet) {
  ParityConfig c;
  c.train_size = 6;
  c.val_size = 2;
  c.max_epochs = 3000;
  c.saturation_patience = 100;
  const auto r = train(c);
  EXPECT_GE(r.acc_train.back(), 0.99);
}

TEST(Train, DivergenceCarriesPartialCurves) {
  auto c = small_config();
  c.learning_rate = 1e200;
  c.weight_decay = 0.0;
  try {
    train(c);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_FALSE(e.partial().epochs.empty());
  }
}

TEST(Sweep, OrderAndSummary) {
  auto c = small_config();
  std::vector<std::size_t> order;
  const auto recs = concealment_sweep(c, {5, 6}, {0}, parity_fit_spec(), 2,
                                      [&](std::size_t i, const RunRecord&) { order.push_back(i); });
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].config.spurious_dims, 5u);
  EXPECT_EQ(recs[1].config.spurious_dims, 6u);
  EXPECT_EQ(order.size(), 2u);
  const auto s = summarize(recs, 1);
  EXPECT_TRUE(s.low_confidence);
  EXPECT_EQ(s.n_runs, 2u);
  EXPECT_THROW(concealment_sweep(c, {}, {0}, parity_fit_spec()), DomainError);
}
