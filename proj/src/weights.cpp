#include "npmle/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "npmle/error.hpp"
#include "npmle/kernels.hpp"
#include "npmle/mixture.hpp"

namespace npmle {

namespace {

struct State {
  std::vector<double> mixed;
  std::vector<double> ratio;  // n^-1 sum_i P[i,s] / mixed_i = 1 + D_s
  double loglik = 0.0;
};

void evaluate(std::span<const double> p, std::size_t n, std::span<const double> w, State& st) {
  st.mixed.resize(n);
  st.ratio.resize(w.size());
  parallel::mixture_probs(p, n, w, st.mixed);
  parallel::ratio_means(p, n, st.mixed, st.ratio);
  st.loglik = scaled_loglik(st.mixed);
}

bool kkt_holds(std::span<const double> w, std::span<const double> ratio,
               const WeightSolveConfig& cfg) {
  for (std::size_t s = 0; s < w.size(); ++s) {
    const double d = ratio[s] - 1.0;
    if (d > cfg.kkt_tol) return false;
    if (w[s] > cfg.active_tol && std::abs(d) > cfg.kkt_tol) return false;
  }
  return true;
}

void renormalize(std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
}

// First and second derivative of n^-1 sum log(base + t dir) at t.
std::pair<double, double> log_step_derivs(std::span<const double> base,
                                          std::span<const double> dir, double t) {
  double g = 0.0, h = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double m = std::max(base[i] + t * dir[i], kProbFloor);
    const double r = dir[i] / m;
    g += r;
    h -= r * r;
  }
  const double n = static_cast<double>(base.size());
  return {g / n, h / n};
}

double log_step_value(std::span<const double> base, std::span<const double> dir, double t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i)
    sum += std::log(std::max(base[i] + t * dir[i], kProbFloor));
  return sum / static_cast<double>(base.size());
}

// Lawson-Hanson on the quadratic model of ll around the current weights:
// argmin_{x >= 0} |A x - 2|^2 + c^2 (1'x - 1)^2 with A[i, s] = p(i, s) / mixed_i.
// The heavily weighted last row enforces the simplex sum (without it x = 2w is
// an exact but useless fit). Returns x / sum(x), or empty when x = 0.
std::vector<double> nnls_newton_target(std::span<const double> p, std::size_t n,
                                       std::span<const double> mixed) {
  const std::size_t S = p.size() / n;
  const double c = 100.0 * std::sqrt(static_cast<double>(n));
  std::vector<double> x(S, 0.0), grad(S), scaled(n);
  std::vector<char> passive(S, 0), blocked(S, 0);

  auto column = [&](std::size_t s, std::size_t i) { return p[s * n + i] / mixed[i]; };
  auto compute_grad = [&] {
    double sum_x = 0.0;
    for (std::size_t s = 0; s < S; ++s) sum_x += x[s];
    const double r_sum = c * (1.0 - sum_x);
    for (std::size_t i = 0; i < n; ++i) {
      double ax = 0.0;
      for (std::size_t s = 0; s < S; ++s)
        if (x[s] != 0.0) ax += x[s] * column(s, i);
      scaled[i] = (2.0 - ax) / mixed[i];
    }
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < m; ++s) {
      const double* col = p.data() + static_cast<std::size_t>(s) * n;
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += col[i] * scaled[i];
      grad[s] = g + c * r_sum;
    }
  };
  auto solve_passive = [&](std::vector<std::size_t>& idx) {
    idx.clear();
    for (std::size_t s = 0; s < S; ++s)
      if (passive[s]) idx.push_back(s);
    const auto rows = static_cast<Eigen::Index>(n + 1);
    Eigen::MatrixXd a(rows, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t i = 0; i < n; ++i) a(i, k) = column(idx[k], i);
      a(rows - 1, k) = c;
    }
    Eigen::VectorXd b = Eigen::VectorXd::Constant(rows, 2.0);
    b(rows - 1) = c;
    return Eigen::VectorXd(a.colPivHouseholderQr().solve(b));
  };

  const double tol = 1e-10 * static_cast<double>(n);
  std::vector<std::size_t> idx;
  compute_grad();
  for (std::size_t outer = 0; outer < 3 * S + 10; ++outer) {
    std::size_t j = S;
    for (std::size_t s = 0; s < S; ++s)
      if (!passive[s] && !blocked[s] && grad[s] > tol && (j == S || grad[s] > grad[j])) j = s;
    if (j == S) break;
    passive[j] = 1;
    bool added_ok = false;
    for (std::size_t inner = 0; inner < 3 * S + 10; ++inner) {
      const auto z = solve_passive(idx);
      bool feasible = true;
      for (std::size_t c = 0; c < idx.size(); ++c)
        if (!(z[static_cast<Eigen::Index>(c)] > 0.0)) feasible = false;
      if (feasible) {
        for (std::size_t c = 0; c < idx.size(); ++c) x[idx[c]] = z[static_cast<Eigen::Index>(c)];
        added_ok = true;
        break;
      }
      double alpha = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c) {
        const double zc = z[static_cast<Eigen::Index>(c)];
        if (!(zc > 0.0)) {
          const double xc = x[idx[c]];
          alpha = std::min(alpha, xc / (xc - zc));
        }
      }
      for (std::size_t c = 0; c < idx.size(); ++c) {
        const std::size_t s = idx[c];
        x[s] += alpha * (z[static_cast<Eigen::Index>(c)] - x[s]);
        if (x[s] <= 1e-15) {
          x[s] = 0.0;
          passive[s] = 0;
        }
      }
      if (std::none_of(passive.begin(), passive.end(), [](char c) { return c != 0; })) break;
    }
    if (!added_ok || x[j] == 0.0) {
      // Column j could not enter, typically a near-duplicate of a passive
      // column; skip it from now on rather than cycle.
      blocked[j] = 1;
      passive[j] = 0;
      x[j] = 0.0;
    }
    compute_grad();
  }

  double sum = 0.0;
  for (double v : x) sum += v;
  if (!(sum > 0.0)) return {};
  for (double& v : x) v /= sum;
  return x;
}

}  // namespace

void WeightSolveConfig::validate() const {
  if (max_iters == 0) throw Error("weight solver: max_iters must be positive");
  if (!(kkt_tol > 0.0) || !(active_tol > 0.0))
    throw Error("weight solver: tolerances must be positive");
}

double maximize_log_step(std::span<const double> base, std::span<const double> dir,
                         double t_max) {
  if (base.size() != dir.size() || base.empty()) throw Error("line search: size mismatch");
  if (!(t_max > 0.0)) return 0.0;
  auto deriv = [&](double t) { return log_step_derivs(base, dir, t).first; };
  const double g0 = deriv(0.0);
  if (!(g0 > 0.0)) return 0.0;
  const double g1 = deriv(t_max);
  if (g1 >= 0.0) return t_max;

  // g' is decreasing; keep a bracket [lo, hi] with g'(lo) > 0 > g'(hi).
  double lo = 0.0, hi = t_max;
  double t = 0.5 * t_max;
  for (int it = 0; it < 100; ++it) {
    const auto [g, h] = log_step_derivs(base, dir, t);
    if (g > 0.0) lo = t; else hi = t;
    if (g == 0.0 || hi - lo <= 1e-15 * std::max(1.0, t_max)) break;
    double next = h < 0.0 ? t - g / h : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-14 * std::max(1.0, t)) {
      t = next;
      break;
    }
    t = next;
  }
  t = std::clamp(t, 0.0, t_max);
  // Concavity guarantees improvement in exact arithmetic; guard the rounding.
  return log_step_value(base, dir, t) >= log_step_value(base, dir, 0.0) ? t : 0.0;
}

double line_search_alpha(std::span<const double> mixed, std::span<const double> p_new) {
  if (mixed.size() != p_new.size()) throw Error("line search: size mismatch");
  std::vector<double> dir(mixed.size());
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = p_new[i] - mixed[i];
  return maximize_log_step(mixed, dir, 1.0);
}

WeightSolveResult optimize_weights(std::span<const double> p, std::size_t n,
                                   std::span<const double> pi0, const WeightSolveConfig& cfg) {
  cfg.validate();
  const std::size_t S = pi0.size();
  if (S == 0 || n == 0 || p.size() != n * S) throw Error("optimize_weights: size mismatch");
  for (std::size_t k = 0; k < p.size(); ++k)
    if (!std::isfinite(p[k]) || !(p[k] > 0.0))
      throw Error("optimize_weights: non-finite or non-positive probability at observation " +
                  std::to_string(k % n) + ", component " + std::to_string(k / n));
  double total = 0.0;
  for (double v : pi0) {
    if (!(v >= 0.0)) throw Error("optimize_weights: negative initial weight");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-8) throw Error("optimize_weights: initial weights off the simplex");

  WeightSolveResult res;
  std::vector<double> w(pi0.begin(), pi0.end());
  renormalize(w);
  State st;
  evaluate(p, n, w, st);
  if (cfg.record_history) res.history.push_back(st.loglik);

  std::vector<double> next(S);
  std::size_t it = 0;
  bool converged = kkt_holds(w, st.ratio, cfg);
  while (!converged && it < cfg.max_iters) {
    ++it;
    bool moved = false;

    // Newton direction: maximizer of the quadratic model of ll over the
    // simplex, solved as a constrained nonnegative least-squares problem.
    auto target = nnls_newton_target(p, n, st.mixed);
    if (!target.empty()) {
      std::vector<double> dir(S);
      double slope = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        dir[s] = target[s] - w[s];
        slope += dir[s] * st.ratio[s];
      }
      double eta = 1.0;
      for (int k = 0; k < 40 && slope > 0.0; ++k, eta *= 0.5) {
        for (std::size_t s = 0; s < S; ++s) next[s] = std::max(w[s] + eta * dir[s], 0.0);
        renormalize(next);
        State trial;
        evaluate(p, n, next, trial);
        if (trial.loglik >= st.loglik + eta * slope / 3.0) {
          w.swap(next);
          st = std::move(trial);
          moved = true;
          break;
        }
      }
    }
    if (!moved) {
      // Fallback multiplicative step, w_s <- w_s (1 + D_s).
      for (std::size_t s = 0; s < S; ++s) next[s] = w[s] * st.ratio[s];
      renormalize(next);
      State trial;
      evaluate(p, n, next, trial);
      if (trial.loglik > st.loglik) {
        w.swap(next);
        st = std::move(trial);
        moved = true;
      }
    }
    if (cfg.record_history) res.history.push_back(st.loglik);
    converged = kkt_holds(w, st.ratio, cfg);
    if (!moved) break;
  }

  res.weights = std::move(w);
  res.loglik = st.loglik;
  res.gradient.resize(S);
  for (std::size_t s = 0; s < S; ++s) res.gradient[s] = st.ratio[s] - 1.0;
  res.iterations = it;
  res.converged = converged;
  return res;
}

WeightSolveResult optimize_weights(MixingDistribution& q, ProbCache& cache,
                                   const WeightSolveConfig& cfg) {
  auto res = optimize_weights(cache.data(), cache.rows(), q.weights(), cfg);
  q.set_weights(res.weights);
  cache.refresh_mixed(res.weights);
  return res;
}

std::vector<std::size_t> prune(MixingDistribution& q, double eps_tol) {
  if (q.components.empty()) throw Error("prune: empty mixing distribution");
  std::size_t heaviest = 0;
  for (std::size_t s = 1; s < q.size(); ++s)
    if (q.components[s].weight > q.components[heaviest].weight) heaviest = s;
  std::vector<std::size_t> keep;
  std::vector<Component> kept;
  for (std::size_t s = 0; s < q.size(); ++s) {
    if (q.components[s].weight > eps_tol || s == heaviest) {
      keep.push_back(s);
      kept.push_back(q.components[s]);
    }
  }
  q.components = std::move(kept);
  q.normalize();
  return keep;
}

}  // namespace npmle
