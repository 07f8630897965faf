#pragma once

// Independent reference computations used by the tests. None of these call
// the library's probability code.

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace oracle {

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Adaptive Gauss-Kronrod over [a, b]; a may be -infinity.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  return gauss_kronrod<double, 61>::integrate(f, a, b, 12, tol, &err);
}

/// P(X <= h, Y <= k) for the standard bivariate normal with correlation rho,
/// by nested quadrature of the density. The outer range is split at the peak
/// so the adaptive rule sees it.
inline double bvn_quadrature(double h, double k, double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  auto density = [&](double x, double y) {
    const double q = (x * x - 2.0 * rho * x * y + y * y) / (s * s);
    return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * s);
  };
  auto inner = [&](double x) {
    auto fy = [&](double y) { return density(x, y); };
    const double peak = rho * x;
    if (k <= peak) return integrate(fy, -std::numeric_limits<double>::infinity(), k);
    return integrate(fy, -std::numeric_limits<double>::infinity(), peak) +
           integrate(fy, peak, k);
  };
  const double inf = std::numeric_limits<double>::infinity();
  if (h <= 0.0) return integrate(inner, -inf, h);
  return integrate(inner, -inf, 0.0) + integrate(inner, 0.0, h);
}

/// Monte Carlo estimate of P(U_chosen is the max) for U = V + L z.
inline double mnp_monte_carlo(std::span<const double> v, std::span<const double> sigma,
                              std::size_t chosen, std::size_t draws, unsigned seed) {
  const std::size_t J = v.size();
  std::vector<double> l(J * J, 0.0);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = sigma[i * J + j];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * J + k] * l[j * J + k];
      l[i * J + j] = i == j ? std::sqrt(sum) : sum / l[j * J + j];
    }
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z01;
  std::vector<double> z(J), u(J);
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (auto& zz : z) zz = z01(eng);
    for (std::size_t i = 0; i < J; ++i) {
      u[i] = v[i];
      for (std::size_t k = 0; k <= i; ++k) u[i] += l[i * J + k] * z[k];
    }
    if (static_cast<std::size_t>(std::max_element(u.begin(), u.end()) - u.begin()) == chosen)
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

/// Closed-form softmax without max subtraction (inputs kept moderate).
inline double logit_prob(std::span<const double> v, std::size_t chosen) {
  double den = 0.0;
  for (double x : v) den += std::exp(x);
  return std::exp(v[chosen]) / den;
}

/// n^-1 sum_i log(sum_s w_s p(i, s)) for column-major p.
inline double loglik(std::span<const double> p, std::size_t n, std::span<const double> w) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t s = 0; s < w.size(); ++s) m += w[s] * p[s * n + i];
    sum += std::log(m);
  }
  return sum / static_cast<double>(n);
}

/// Brute-force maximum of the log-likelihood over the 3-simplex: a grid with
/// spacing `step`, then repeated zooms around the incumbent.
struct SimplexSearch {
  double coarse = -std::numeric_limits<double>::infinity();
  double refined = -std::numeric_limits<double>::infinity();
  std::vector<double> argmax;
};

inline SimplexSearch simplex_search3(std::span<const double> p, std::size_t n, double step) {
  SimplexSearch r;
  const int m = static_cast<int>(std::lround(1.0 / step));
  double best_a = 0.0, best_b = 0.0;
  for (int a = 0; a <= m; ++a)
    for (int b = 0; a + b <= m; ++b) {
      const double wa = a * step, wb = b * step;
      const double w[3] = {wa, wb, std::max(0.0, 1.0 - wa - wb)};
      const double v = loglik(p, n, w);
      if (v > r.coarse) {
        r.coarse = v;
        best_a = wa;
        best_b = wb;
      }
    }
  r.refined = r.coarse;
  double h = step;
  for (int zoom = 0; zoom < 8; ++zoom) {
    const double ca = best_a, cb = best_b;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j) {
        const double wa = ca + i * h / 10.0, wb = cb + j * h / 10.0;
        if (wa < 0.0 || wb < 0.0 || wa + wb > 1.0) continue;
        const double w[3] = {wa, wb, 1.0 - wa - wb};
        const double v = loglik(p, n, w);
        if (v > r.refined) {
          r.refined = v;
          best_a = wa;
          best_b = wb;
        }
      }
    h /= 10.0;
  }
  r.argmax = {best_a, best_b, 1.0 - best_a - best_b};
  return r;
}

/// Golden-section maximization of a unimodal function on [a, b].
inline double golden_max(const std::function<double(double)>& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace oracle
