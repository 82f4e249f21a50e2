#pragma once

// Concealed parity prediction: the label is the parity of the first k bits of
// the input, and `spurious_dims` extra Bernoulli(1/2) bits carry no label
// information. A two-layer ReLU MLP is trained by full-batch gradient descent
// on softmax cross-entropy with decoupled weight decay; train and validation
// accuracy are recorded along the way and fitted with the Erf form.

#include <chrono>
#include <functional>
#include <mutex>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "grokfit/curvefit.hpp"
#include "grokfit/error.hpp"
#include "grokfit/matrix.hpp"
#include "grokfit/metrics.hpp"
#include "grokfit/parallel.hpp"

namespace grokfit::parity {

struct ParityConfig {
  std::size_t parity_bits = 3;
  std::size_t spurious_dims = 0;
  std::size_t train_size = 1000;
  std::size_t val_size = 200;
  std::size_t hidden_width = 128;
  double learning_rate = 0.1;
  double weight_decay = 0.01;
  std::size_t max_epochs = 100000;
  std::size_t record_every = 1;
  // Training stops once both accuracies exceed 0.99 for this many consecutive records.
  std::size_t saturation_patience = 500;
  std::uint64_t seed = 0;

  std::size_t input_dim() const noexcept { return parity_bits + spurious_dims; }

  void validate() const {
    if (parity_bits < 1) throw DomainError("ParityConfig: parity_bits must be at least 1");
    if (train_size < 1 || val_size < 1) throw DomainError("ParityConfig: split sizes must be positive");
    if (hidden_width < 1) throw DomainError("ParityConfig: hidden_width must be positive");
    if (!(learning_rate > 0.0)) throw DomainError("ParityConfig: learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw DomainError("ParityConfig: weight_decay must be non-negative");
    if (record_every < 1) throw DomainError("ParityConfig: record_every must be positive");
    if (max_epochs < 1) throw DomainError("ParityConfig: max_epochs must be positive");
    if (input_dim() < 63) {
      const std::uint64_t distinct = std::uint64_t{1} << input_dim();
      if (train_size + val_size > distinct)
        throw DomainError("ParityConfig: more examples requested than distinct inputs exist");
    }
  }
};

/// Rows [0, train_size) are the training split, the rest validation.
struct ParityDataset {
  Matrix inputs;
  std::vector<int> labels;
  std::size_t train_size = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Sum of the first k entries mod 2.
template <class Bit>
int parity(std::span<const Bit> bits, std::size_t k) {
  if (k > bits.size()) throw DomainError("parity: k exceeds the vector length");
  int acc = 0;
  for (std::size_t i = 0; i < k; ++i) acc ^= static_cast<int>(bits[i] != Bit{0});
  return acc;
}

inline int parity(std::span<const int> bits, std::size_t k) { return parity<int>(bits, k); }

inline ParityDataset make_dataset(const ParityConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.input_dim();
  const std::size_t total = cfg.train_size + cfg.val_size;
  std::mt19937_64 rng(cfg.seed);
  ParityDataset ds;
  ds.inputs = Matrix(total, n);
  ds.labels.resize(total);
  ds.train_size = cfg.train_size;

  std::unordered_set<std::string> seen;
  std::string key(n, '0');
  std::uint64_t word = 0;
  int left = 0;
  for (std::size_t row = 0; row < total;) {
    for (std::size_t c = 0; c < n; ++c) {
      if (left == 0) {
        word = rng();
        left = 64;
      }
      key[c] = (word & 1u) ? '1' : '0';
      word >>= 1;
      --left;
    }
    if (!seen.insert(key).second) continue;
    auto r = ds.inputs.row(row);
    for (std::size_t c = 0; c < n; ++c) r[c] = key[c] == '1' ? 1.0 : 0.0;
    ds.labels[row] = parity<double>(r, cfg.parity_bits);
    ++row;
  }
  return ds;
}

/// Input -> ReLU hidden layer -> two logits. w1 is stored input-major:
/// w1(c, j) connects input c to hidden unit j.
struct MlpParams {
  Matrix w1;  // input_dim x hidden
  std::vector<double> b1;
  Matrix w2;  // 2 x hidden
  std::vector<double> b2;

  static MlpParams zeros(std::size_t input_dim, std::size_t hidden) {
    return {Matrix(input_dim, hidden), std::vector<double>(hidden, 0.0), Matrix(2, hidden),
            std::vector<double>(2, 0.0)};
  }

  /// Weights ~ N(0, 2 / fan_in), biases zero.
  static MlpParams he_normal(std::size_t input_dim, std::size_t hidden, std::mt19937_64& rng) {
    auto p = zeros(input_dim, hidden);
    std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(input_dim)));
    std::normal_distribution<double> n2(0.0, std::sqrt(2.0 / static_cast<double>(hidden)));
    for (std::size_t j = 0; j < hidden; ++j)
      for (std::size_t c = 0; c < input_dim; ++c) p.w1(c, j) = n1(rng);
    for (auto& v : p.w2.data()) v = n2(rng);
    return p;
  }

  std::size_t input_dim() const noexcept { return w1.rows(); }
  std::size_t hidden() const noexcept { return w1.cols(); }

  template <class F>
  void for_each(F&& f) {
    for (auto& v : w1.data()) f(v);
    for (auto& v : b1) f(v);
    for (auto& v : w2.data()) f(v);
    for (auto& v : b2) f(v);
  }
  template <class F>
  void for_each(F&& f) const {
    for (double v : w1.data()) f(v);
    for (double v : b1) f(v);
    for (double v : w2.data()) f(v);
    for (double v : b2) f(v);
  }

  bool finite() const {
    bool ok = true;
    for_each([&](double v) { ok = ok && std::isfinite(v); });
    return ok;
  }
};

namespace detail {

inline void hidden_preactivation(const MlpParams& p, std::span<const double> x, std::span<double> z) {
  std::copy(p.b1.begin(), p.b1.end(), z.begin());
  const std::size_t h = p.hidden();
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double xc = x[c];
    if (xc == 0.0) continue;
    const auto w = p.w1.row(c);
    for (std::size_t j = 0; j < h; ++j) z[j] += xc * w[j];
  }
}

}  // namespace detail

/// Mean softmax cross-entropy over rows [begin, end). When grad is given it
/// receives the gradient (same shape as params, overwritten); when correct is
/// given it receives the number of rows classified correctly.
inline double loss_and_gradient(const MlpParams& p, const Matrix& inputs, std::span<const int> labels,
                                std::size_t begin, std::size_t end, MlpParams* grad,
                                std::size_t* correct = nullptr) {
  if (end <= begin || end > labels.size()) throw DomainError("loss_and_gradient: bad row range");
  const std::size_t h = p.hidden();
  if (grad != nullptr) *grad = MlpParams::zeros(p.input_dim(), h);
  std::vector<double> z(h), dh(h);
  const double inv_n = 1.0 / static_cast<double>(end - begin);
  double loss = 0.0;
  std::size_t hits = 0;
  const auto w20 = p.w2.row(0);
  const auto w21 = p.w2.row(1);
  for (std::size_t i = begin; i < end; ++i) {
    const auto x = inputs.row(i);
    detail::hidden_preactivation(p, x, z);
    double l0 = p.b2[0], l1 = p.b2[1];
    for (std::size_t j = 0; j < h; ++j) {
      const double a = z[j] > 0.0 ? z[j] : 0.0;
      l0 += w20[j] * a;
      l1 += w21[j] * a;
    }
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
    const double lse = mx + std::log(e0 + e1);
    const int y = labels[i];
    loss += lse - (y == 0 ? l0 : l1);
    if ((l1 > l0 ? 1 : 0) == y) ++hits;
    if (grad == nullptr) continue;

    const double p0 = e0 / (e0 + e1);
    const double g0 = (p0 - (y == 0 ? 1.0 : 0.0)) * inv_n;
    const double g1 = ((1.0 - p0) - (y == 1 ? 1.0 : 0.0)) * inv_n;
    grad->b2[0] += g0;
    grad->b2[1] += g1;
    auto gw20 = grad->w2.row(0);
    auto gw21 = grad->w2.row(1);
    for (std::size_t j = 0; j < h; ++j) {
      if (z[j] > 0.0) {
        gw20[j] += g0 * z[j];
        gw21[j] += g1 * z[j];
        dh[j] = g0 * w20[j] + g1 * w21[j];
      } else {
        dh[j] = 0.0;
      }
    }
    for (std::size_t j = 0; j < h; ++j) grad->b1[j] += dh[j];
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double xc = x[c];
      if (xc == 0.0) continue;
      auto gw = grad->w1.row(c);
      for (std::size_t j = 0; j < h; ++j) gw[j] += xc * dh[j];
    }
  }
  if (correct != nullptr) *correct = hits;
  return loss * inv_n;
}

/// Fraction of rows in [begin, end) whose argmax logit matches the label.
/// Ties go to class 0.
inline double accuracy(const MlpParams& p, const Matrix& inputs, std::span<const int> labels,
                       std::size_t begin, std::size_t end) {
  if (end <= begin || end > labels.size()) throw DomainError("accuracy: bad row range");
  const std::size_t h = p.hidden();
  std::vector<double> z(h);
  std::size_t correct = 0;
  for (std::size_t i = begin; i < end; ++i) {
    detail::hidden_preactivation(p, inputs.row(i), z);
    double l0 = p.b2[0], l1 = p.b2[1];
    for (std::size_t j = 0; j < h; ++j) {
      const double a = z[j] > 0.0 ? z[j] : 0.0;
      l0 += p.w2(0, j) * a;
      l1 += p.w2(1, j) * a;
    }
    const int pred = l1 > l0 ? 1 : 0;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(end - begin);
}

/// p <- p (1 - lr wd) - lr grad
inline void gradient_step(MlpParams& p, const MlpParams& grad, double lr, double wd) {
  const double shrink = 1.0 - lr * wd;
  auto upd = [&](std::span<double> w, std::span<const double> g) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] * shrink - lr * g[i];
  };
  upd(p.w1.data(), grad.w1.data());
  upd(p.b1, grad.b1);
  upd(p.w2.data(), grad.w2.data());
  upd(p.b2, grad.b2);
}

struct RunRecord {
  ParityConfig config;
  std::vector<double> epochs;
  std::vector<double> acc_train;
  std::vector<double> acc_val;
  std::optional<GrokkingMetrics> metrics;
  std::string fit_error;  // non-empty when fitting failed
  double wall_time = 0.0;  // seconds; not persisted

  AccuracyCurve train_curve() const { return {epochs, acc_train, CurveKind::train}; }
  AccuracyCurve validation_curve() const { return {epochs, acc_val, CurveKind::validation}; }
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, RunRecord partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const RunRecord& partial() const noexcept { return partial_; }

 private:
  RunRecord partial_;
};

/// FitSpec for parity accuracy: chance level 0.5 up to 1.
inline FitSpec parity_fit_spec() {
  FitSpec s;
  s.baseline_accuracy = 0.5;
  s.max_accuracy = 1.0;
  return s;
}

/// Fits both recorded curves; on failure the reason is stored in the record.
inline void fit_record(RunRecord& rec, const FitSpec& spec) {
  try {
    const auto ft = fit_erf(rec.train_curve(), spec);
    const auto fg = fit_erf(rec.validation_curve(), spec);
    rec.metrics = grokking_metrics(ft, fg);
    rec.fit_error.clear();
  } catch (const Error& e) {
    rec.metrics.reset();
    rec.fit_error = e.what();
  }
}

/// Full-batch training run. Accuracies are recorded before the update of
/// every record_every-th epoch, starting at epoch 0.
inline RunRecord train(const ParityConfig& cfg, const FitSpec& spec = parity_fit_spec()) {
  const auto start = std::chrono::steady_clock::now();
  const auto ds = make_dataset(cfg);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x6d6c70u};
  std::mt19937_64 rng(seq);
  auto params = MlpParams::he_normal(cfg.input_dim(), cfg.hidden_width, rng);
  MlpParams grad = MlpParams::zeros(cfg.input_dim(), cfg.hidden_width);

  RunRecord rec;
  rec.config = cfg;
  const std::size_t ntr = ds.train_size;
  const std::size_t nall = ds.size();
  std::size_t saturated = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::size_t hits = 0;
    const double loss = loss_and_gradient(params, ds.inputs, ds.labels, 0, ntr, &grad, &hits);
    if (epoch % cfg.record_every == 0) {
      const double at = static_cast<double>(hits) / static_cast<double>(ntr);
      const double av = accuracy(params, ds.inputs, ds.labels, ntr, nall);
      rec.epochs.push_back(static_cast<double>(epoch));
      rec.acc_train.push_back(at);
      rec.acc_val.push_back(av);
      saturated = (at > 0.99 && av > 0.99) ? saturated + 1 : 0;
      if (saturated >= cfg.saturation_patience) break;
    }
    gradient_step(params, grad, cfg.learning_rate, cfg.weight_decay);
    if (!std::isfinite(loss) || !params.finite()) {
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw DivergenceError("train: parameters became non-finite at epoch " + std::to_string(epoch), rec);
    }
  }
  if (rec.epochs.size() >= 2) {
    fit_record(rec, spec);
  } else {
    rec.fit_error = "too few recorded epochs";
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct SweepUnit {
  std::size_t spurious_dims = 0;
  std::uint64_t seed = 0;
};

/// One record per (spurious, seed) pair, spurious-major, in input order.
/// A run that diverges keeps its partial curves and a fit-error message.
/// on_done, when set, is called (serialised) as each unit finishes.
inline std::vector<RunRecord> concealment_sweep(
    const ParityConfig& base, const std::vector<std::size_t>& spurious_list,
    const std::vector<std::uint64_t>& seeds, const FitSpec& spec, std::size_t workers = 1,
    const std::function<void(std::size_t, const RunRecord&)>& on_done = {}) {
  if (spurious_list.empty() || seeds.empty())
    throw DomainError("concealment_sweep: spurious and seed lists must be non-empty");
  std::vector<SweepUnit> units;
  for (auto sp : spurious_list)
    for (auto seed : seeds) units.push_back({sp, seed});
  std::vector<RunRecord> records(units.size());
  std::mutex mu;
  parallel_for(units.size(), workers, [&](std::size_t i) {
    ParityConfig cfg = base;
    cfg.spurious_dims = units[i].spurious_dims;
    cfg.seed = units[i].seed;
    RunRecord rec;
    try {
      rec = train(cfg, spec);
    } catch (const DivergenceError& e) {
      rec = e.partial();
      rec.fit_error = e.what();
    }
    records[i] = std::move(rec);
    if (on_done) {
      std::lock_guard lock(mu);
      on_done(i, records[i]);
    }
  });
  return records;
}

struct SweepSummary {
  std::size_t n_runs = 0;
  std::size_t n_fitted = 0;
  double rho_spurious_m = 0.0;
  double rho_m_r_rel = 0.0;
  double rho_m_r_abs = 0.0;
  bool low_confidence = false;  // fewer than two seeds per setting or fewer than three fitted runs
};

inline SweepSummary summarize(const std::vector<RunRecord>& records, std::size_t n_seeds) {
  SweepSummary s;
  s.n_runs = records.size();
  std::vector<double> sp, m, rr, ra;
  for (const auto& r : records) {
    if (!r.metrics) continue;
    sp.push_back(static_cast<double>(r.config.spurious_dims));
    m.push_back(r.metrics->m);
    rr.push_back(r.metrics->r_rel);
    ra.push_back(r.metrics->r_abs);
  }
  s.n_fitted = m.size();
  if (m.size() >= 2) {
    s.rho_spurious_m = spearman(sp, m);
    s.rho_m_r_rel = spearman(m, rr);
    s.rho_m_r_abs = spearman(m, ra);
  }
  s.low_confidence = n_seeds < 2 || s.n_fitted < 3;
  return s;
}

}  // namespace grokfit::parity
