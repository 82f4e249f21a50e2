#pragma once

// Numerical kernels shared by the fitting and dynamics code: error function
// and its inverse, tail quadrature, bisection, symmetric eigensolvers and a
// damped Gauss-Newton least-squares driver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grokfit/error.hpp"
#include "grokfit/matrix.hpp"

namespace grokfit {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrtPi = 1.77245385090551602730;

// ---------------------------------------------------------------------------
// Error function

/// Erf(x), odd by construction: erf(-x) is computed as -erf(x).
inline double erf(double x) {
  if (!std::isfinite(x)) throw DomainError("erf: non-finite argument");
  return std::signbit(x) ? -std::erf(-x) : std::erf(x);
}

/// Inverse error function on (-1, 1). A single-precision seed is polished by
/// Newton steps on erf, so erf(erfinv(p)) == p to within a few ulps.
inline double erfinv(double p) {
  if (!(std::abs(p) < 1.0)) throw DomainError("erfinv: argument must lie in (-1, 1)");
  if (p == 0.0) return 0.0;
  if (std::signbit(p)) return -erfinv(-p);

  double w = -std::log((1.0 - p) * (1.0 + p));
  double x;
  if (w < 5.0) {
    w -= 2.5;
    double q = 2.81022636e-08;
    q = 3.43273939e-07 + q * w;
    q = -3.5233877e-06 + q * w;
    q = -4.39150654e-06 + q * w;
    q = 0.00021858087 + q * w;
    q = -0.00125372503 + q * w;
    q = -0.00417768164 + q * w;
    q = 0.246640727 + q * w;
    q = 1.50140941 + q * w;
    x = q * p;
  } else {
    w = std::sqrt(w) - 3.0;
    double q = -0.000200214257;
    q = 0.000100950558 + q * w;
    q = 0.00134934322 + q * w;
    q = -0.00367342844 + q * w;
    q = 0.00573950773 + q * w;
    q = -0.0076224613 + q * w;
    q = 0.00943887047 + q * w;
    q = 1.00167406 + q * w;
    q = 2.83297682 + q * w;
    x = q * p;
  }

  for (int it = 0; it < 8; ++it) {
    const double deriv = 2.0 / kSqrtPi * std::exp(-x * x);
    const double step = (std::erf(x) - p) / deriv;
    x -= step;
    if (std::abs(step) <= 1e-16 * std::abs(x)) break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Quadrature

struct QuadratureResult {
  double value = 0.0;
  double abs_error_estimate = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

struct SimpsonState {
  const std::function<double(double)>* g;
  std::size_t evaluations = 0;
  std::size_t max_evaluations = 0;
  double error = 0.0;
  bool exhausted = false;
};

inline double eval(SimpsonState& st, double x) {
  ++st.evaluations;
  return (*st.g)(x);
}

inline double adaptive_simpson(SimpsonState& st, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = eval(st, lm);
  const double frm = eval(st, rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (st.evaluations > st.max_evaluations) {
    st.exhausted = true;
    st.error += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  if (depth <= 0 || (depth < 58 && std::abs(delta) <= 15.0 * tol)) {
    st.error += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return adaptive_simpson(st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Integrates a positive, eventually decaying g over [t0, inf).
///
/// The half-line is cut into panels whose widths double away from t0, each
/// integrated by adaptive Simpson to rel_tol/10 of its own value. Panels are
/// added until the exponential tail bound g(T)/rate drops below rel_tol/10 of
/// the accumulated integral, where rate is the smaller of decay_hint and the
/// decay rate observed over the last panel.
inline QuadratureResult integrate_tail(const std::function<double(double)>& g, double t0,
                                       double decay_hint, double rel_tol,
                                       std::size_t max_evaluations = 20'000'000) {
  if (!(decay_hint > 0.0) || !std::isfinite(decay_hint))
    throw DomainError("integrate_tail: decay_hint must be positive");
  if (!(rel_tol > 0.0)) throw DomainError("integrate_tail: rel_tol must be positive");
  if (!std::isfinite(t0)) throw DomainError("integrate_tail: t0 must be finite");

  detail::SimpsonState st{&g, 0, max_evaluations, 0.0, false};
  const double scale = 1.0 / decay_hint;
  const double w0 = (t0 > 0.0 ? std::min(scale, t0) : scale) / 8.0;
  const double panel_tol = 0.1 * rel_tol;

  double total = 0.0;
  double a = t0;
  double fa = detail::eval(st, a);
  double width = w0;
  for (int panel = 0; panel < 4000; ++panel) {
    const double b = a + width;
    const double m = 0.5 * (a + b);
    const double fm = detail::eval(st, m);
    const double fb = detail::eval(st, b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += detail::adaptive_simpson(st, a, b, fa, fm, fb, whole, panel_tol * std::abs(whole), 60);
    if (st.exhausted || !std::isfinite(total))
      throw QuadratureError("integrate_tail: evaluation budget exhausted", total, st.error);

    if (fb == 0.0) return {total, st.error, st.evaluations};
    if (fa > fb && fb > 0.0) {
      const double observed_rate = std::log(fa / fb) / (b - a);
      const double rate = std::min(decay_hint, observed_rate);
      const double tail = fb / rate;
      if (tail < panel_tol * std::abs(total))
        return {total, st.error + tail, st.evaluations};
    }
    a = b;
    fa = fb;
    width *= 2.0;
  }
  throw QuadratureError("integrate_tail: tail did not become negligible", total, st.error);
}

// ---------------------------------------------------------------------------
// Root bracketing

/// Finds t in [lo, hi] with h(t) = target for monotone h. The returned point is
/// the midpoint of a final bracket no wider than rel_tol * |t|.
inline double bisect(const std::function<double(double)>& h, double target, double lo, double hi,
                     double rel_tol) {
  if (!(lo < hi)) throw DomainError("bisect: require lo < hi");
  double flo = h(lo) - target;
  const double fhi = h(hi) - target;
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) throw BracketError("bisect: target is not straddled by [lo, hi]");
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= rel_tol * std::abs(mid) || mid == lo || mid == hi) return mid;
    const double fmid = h(mid) - target;
    if (fmid == 0.0) return mid;
    if ((fmid < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Symmetric eigenproblems

/// Eigenvalues in ascending order; column i of eigenvectors pairs with eigenvalues[i].
struct EigenDecomposition {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};

/// Eigenvalues (ascending) and coefficients c_i = q_i . v of a vector v in the eigenbasis.
struct SpectralProjection {
  std::vector<double> eigenvalues;
  std::vector<double> coefficients;
};

namespace detail {

inline void require_symmetric(const Matrix& a) {
  if (!a.square()) throw DomainError("sym_eigen: matrix is not square");
  const double tol = 1e-12 * std::max(1.0, a.max_abs());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (!(std::abs(a(i, j) - a(j, i)) <= tol))
        throw DomainError("sym_eigen: matrix is not symmetric");
}

struct Householder {
  std::vector<double> v;  // acts on indices k+1..n-1, v[0] == 1
  double beta = 0.0;
};

// Reduces a (in place) to tridiagonal form T = Q^T A Q with Q = H_0 H_1 ... H_{n-3}.
inline std::vector<Householder> tridiagonalize(Matrix& a, std::vector<double>& diag,
                                               std::vector<double>& sub) {
  const std::size_t n = a.rows();
  std::vector<Householder> reflectors;
  if (n > 2) reflectors.reserve(n - 2);
  std::vector<double> p, w;
  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t len = n - k - 1;
    Householder h;
    h.v.resize(len);
    for (std::size_t i = 0; i < len; ++i) h.v[i] = a(k + 1 + i, k);
    const double x0 = h.v[0];
    double sigma = 0.0;
    for (std::size_t i = 1; i < len; ++i) sigma += h.v[i] * h.v[i];
    if (sigma == 0.0) {
      h.beta = 0.0;
      h.v.assign(len, 0.0);
      h.v[0] = 1.0;
      reflectors.push_back(std::move(h));
      continue;
    }
    const double mu = std::sqrt(x0 * x0 + sigma);
    const double v0 = x0 <= 0.0 ? x0 - mu : -sigma / (x0 + mu);
    h.beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
    for (std::size_t i = 1; i < len; ++i) h.v[i] /= v0;
    h.v[0] = 1.0;

    // p = beta * A22 v ; w = p - (beta/2)(p.v) v
    p.assign(len, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      const auto row = a.row(k + 1 + i).subspan(k + 1, len);
      double acc = 0.0;
      for (std::size_t j = 0; j < len; ++j) acc += row[j] * h.v[j];
      p[i] = h.beta * acc;
    }
    const double pv = std::inner_product(p.begin(), p.end(), h.v.begin(), 0.0);
    w.resize(len);
    for (std::size_t i = 0; i < len; ++i) w[i] = p[i] - 0.5 * h.beta * pv * h.v[i];
    for (std::size_t i = 0; i < len; ++i) {
      auto row = a.row(k + 1 + i).subspan(k + 1, len);
      const double vi = h.v[i];
      const double wi = w[i];
      for (std::size_t j = 0; j < len; ++j) row[j] -= vi * w[j] + wi * h.v[j];
    }
    a(k + 1, k) = mu;
    a(k, k + 1) = mu;
    for (std::size_t i = 1; i < len; ++i) {
      a(k + 1 + i, k) = 0.0;
      a(k, k + 1 + i) = 0.0;
    }
    reflectors.push_back(std::move(h));
  }
  diag.resize(n);
  sub.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  for (std::size_t i = 0; i + 1 < n; ++i) sub[i] = a(i + 1, i);
  return reflectors;
}

inline void apply_reflector(const Householder& h, std::size_t k, std::span<double> x) {
  if (h.beta == 0.0) return;
  const std::size_t len = h.v.size();
  double dot = 0.0;
  for (std::size_t i = 0; i < len; ++i) dot += h.v[i] * x[k + 1 + i];
  dot *= h.beta;
  for (std::size_t i = 0; i < len; ++i) x[k + 1 + i] -= dot * h.v[i];
}

// Implicit QL with Wilkinson-style shifts on the tridiagonal (diag, sub), sub[i] = T(i+1, i).
// Every rotation applied to columns (i, i+1) of T is also applied to the rows of z.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e, Matrix& z) {
  const long n = static_cast<long>(d.size());
  const long zrows = static_cast<long>(z.rows());
  constexpr double eps = 2.220446049250313e-16;
  // Absolute floor so a cluster of (numerically) zero eigenvalues still deflates.
  double tnorm = 0.0;
  for (long i = 0; i < n; ++i) tnorm = std::max(tnorm, std::abs(d[i]) + (i + 1 < n ? std::abs(e[i]) : 0.0));
  for (long l = 0; l < n; ++l) {
    int iter = 0;
    long m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd || std::abs(e[m]) <= eps * tnorm) break;
      }
      if (m != l) {
        if (++iter > 60) throw NumericError("sym_eigen: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        long i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          e[i + 1] = (r = std::hypot(f, g));
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          d[i + 1] = g + (p = s * r);
          g = c * r - b;
          for (long k = 0; k < zrows; ++k) {
            auto row = z.row(static_cast<std::size_t>(k));
            f = row[i + 1];
            row[i + 1] = s * row[i] + c * f;
            row[i] = c * row[i] - s * f;
          }
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

inline std::vector<std::size_t> ascending_order(const std::vector<double>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  return idx;
}

}  // namespace detail

/// Full eigendecomposition of a dense symmetric matrix (Householder
/// tridiagonalization followed by implicit QL).
inline EigenDecomposition sym_eigen(Matrix a) {
  detail::require_symmetric(a);
  const std::size_t n = a.rows();
  std::vector<double> d, e;
  const auto reflectors = detail::tridiagonalize(a, d, e);

  // Q = H_0 ... H_{n-3}, accumulated backwards onto the identity.
  Matrix q = Matrix::identity(n);
  for (std::size_t r = reflectors.size(); r-- > 0;) {
    const auto& h = reflectors[r];
    if (h.beta == 0.0) continue;
    const std::size_t len = h.v.size();
    std::vector<double> vq(n, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      const auto row = q.row(r + 1 + i);
      for (std::size_t j = 0; j < n; ++j) vq[j] += h.v[i] * row[j];
    }
    for (std::size_t i = 0; i < len; ++i) {
      auto row = q.row(r + 1 + i);
      const double f = h.beta * h.v[i];
      for (std::size_t j = 0; j < n; ++j) row[j] -= f * vq[j];
    }
  }
  detail::tridiagonal_ql(d, e, q);

  const auto order = detail::ascending_order(d);
  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.eigenvalues[c] = d[order[c]];
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = q(r, order[c]);
  }
  return out;
}

/// Eigenvalues of a symmetric matrix together with the coordinates of v in the
/// eigenbasis, without forming the eigenvectors.
inline SpectralProjection sym_eigen_project(Matrix a, std::span<const double> v) {
  detail::require_symmetric(a);
  const std::size_t n = a.rows();
  if (v.size() != n) throw DomainError("sym_eigen_project: vector length mismatch");
  std::vector<double> d, e;
  const auto reflectors = detail::tridiagonalize(a, d, e);

  // Row vector (Q^T v)^T; QL rotations then turn it into (Z^T v)^T.
  Matrix z(1, n);
  std::copy(v.begin(), v.end(), z.row(0).begin());
  for (std::size_t k = 0; k < reflectors.size(); ++k) detail::apply_reflector(reflectors[k], k, z.row(0));
  detail::tridiagonal_ql(d, e, z);

  const auto order = detail::ascending_order(d);
  SpectralProjection out{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.eigenvalues[c] = d[order[c]];
    out.coefficients[c] = z(0, order[c]);
  }
  return out;
}

/// Cyclic Jacobi eigensolver. Slower than sym_eigen but algorithmically
/// independent of it; used as a cross-check.
inline EigenDecomposition sym_eigen_jacobi(Matrix a, int max_sweeps = 100) {
  detail::require_symmetric(a);
  const std::size_t n = a.rows();
  Matrix v = Matrix::identity(n);
  const double scale = std::max(a.max_abs(), 1e-300);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * scale) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::hypot(t, 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) throw NumericError("sym_eigen_jacobi: sweeps exhausted");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i);
  const auto order = detail::ascending_order(d);
  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.eigenvalues[c] = d[order[c]];
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinear least squares

struct GaussNewtonResult {
  std::vector<double> params;
  int iterations = 0;  // accepted steps
  double initial_norm = 0.0;
  double final_norm = 0.0;
  bool converged = false;
};

namespace detail {

inline double norm2(std::span<const double> r) {
  double s = 0.0;
  for (double x : r) s += x * x;
  return std::sqrt(s);
}

// Solves the SPD system in place by Cholesky; throws on a non-positive pivot.
inline std::vector<double> cholesky_solve(Matrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  for (std::size_t j = 0; j < n; ++j) {
    double djj = a(j, j);
    for (std::size_t k = 0; k < j; ++k) djj -= a(j, k) * a(j, k);
    if (!(djj > 1e-13 * max_diag)) throw FitDegenerateError("gauss_newton: singular normal equations");
    const double ljj = std::sqrt(djj);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
    b[i] = s / a(i, i);
  }
  return b;
}

}  // namespace detail

/// Damped Gauss-Newton. Each step solves the column-scaled normal equations;
/// a step that increases the residual norm is halved until it does not.
/// Stops when every parameter's relative change falls below step_tol, when no
/// non-increasing step can be found, or after max_iter accepted steps.
///
/// residual_fn: params -> residual vector (length m)
/// jacobian_fn: params -> Matrix (m x n), d residual_i / d param_j
template <class ResidualFn, class JacobianFn>
GaussNewtonResult gauss_newton(ResidualFn&& residual_fn, JacobianFn&& jacobian_fn,
                               std::vector<double> initial_params, int max_iter, double step_tol) {
  GaussNewtonResult res;
  res.params = std::move(initial_params);
  const std::size_t n = res.params.size();
  std::vector<double> r = residual_fn(res.params);
  double norm = detail::norm2(r);
  res.initial_norm = norm;
  res.final_norm = norm;
  if (!std::isfinite(norm)) throw FitDegenerateError("gauss_newton: non-finite initial residual");
  if (norm == 0.0) {
    res.converged = true;
    return res;
  }

  for (int it = 0; it < max_iter; ++it) {
    const Matrix jac = jacobian_fn(res.params);
    if (jac.cols() != n || jac.rows() != r.size())
      throw DomainError("gauss_newton: Jacobian shape mismatch");

    std::vector<double> colscale(n, 0.0);
    for (std::size_t i = 0; i < jac.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) colscale[j] += jac(i, j) * jac(i, j);
    for (auto& c : colscale) {
      c = std::sqrt(c);
      if (!(c > 0.0) || !std::isfinite(c))
        throw FitDegenerateError("gauss_newton: Jacobian has a zero column");
    }
    Matrix normal(n, n);
    std::vector<double> rhs(n, 0.0);
    for (std::size_t i = 0; i < jac.rows(); ++i) {
      for (std::size_t a = 0; a < n; ++a) {
        const double ja = jac(i, a) / colscale[a];
        rhs[a] -= ja * r[i];
        for (std::size_t b = 0; b <= a; ++b) normal(a, b) += ja * jac(i, b) / colscale[b];
      }
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) normal(a, b) = normal(b, a);
    std::vector<double> step = detail::cholesky_solve(normal, rhs);
    for (std::size_t j = 0; j < n; ++j) step[j] /= colscale[j];

    double alpha = 1.0;
    bool accepted = false;
    std::vector<double> trial(n);
    std::vector<double> trial_r;
    double trial_norm = 0.0;
    for (int halving = 0; halving < 60; ++halving) {
      for (std::size_t j = 0; j < n; ++j) trial[j] = res.params[j] + alpha * step[j];
      trial_r = residual_fn(trial);
      trial_norm = detail::norm2(trial_r);
      if (std::isfinite(trial_norm) && trial_norm <= norm) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.converged = true;
      break;
    }

    double rel_step = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double denom = std::max(std::abs(trial[j]), 1e-300);
      rel_step = std::max(rel_step, std::abs(trial[j] - res.params[j]) / denom);
    }
    res.params = trial;
    r = std::move(trial_r);
    norm = trial_norm;
    res.final_norm = norm;
    ++res.iterations;
    if (rel_step < step_tol || norm == 0.0) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace grokfit
