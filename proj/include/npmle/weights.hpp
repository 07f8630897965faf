#pragma once

// Maximizing the scaled log-likelihood over the weight simplex for fixed
// components, the one-dimensional line search used when a component is added,
// and pruning of negligible components.

#include <cstddef>
#include <span>
#include <vector>

namespace npmle {

struct MixingDistribution;
class ProbCache;

struct WeightSolveConfig {
  std::size_t max_iters = 2000;
  double kkt_tol = 1e-6;
  double active_tol = 1e-3;       // eps_tol
  bool record_history = false;

  void validate() const;
};

struct WeightSolveResult {
  std::vector<double> weights;
  double loglik = 0.0;
  std::vector<double> gradient;   // D_s at the returned weights
  std::size_t iterations = 0;
  bool converged = false;         // KKT certificate holds
  std::vector<double> history;    // log-likelihood per iteration if requested
};

/// Constrained Newton iterations: each step maximizes the quadratic model of
/// ll over the simplex (a nonnegative least-squares fit of P / mixed to 2 with
/// a weighted sum-to-one row) and backtracks along the segment from the
/// current weights (Armijo, 1/3). A multiplicative step w_s (1 + D_s) is the
/// fallback when the Newton step makes no progress.
/// `p` is column-major n x S with strictly positive entries; `pi0` lies on
/// the simplex (zeros allowed). Never returns a point worse than `pi0`.
WeightSolveResult optimize_weights(std::span<const double> p, std::size_t n,
                                   std::span<const double> pi0, const WeightSolveConfig& cfg);

/// Convenience overload: optimizes the weights of `q` against `cache`,
/// writes them back into both, returns the solver result.
WeightSolveResult optimize_weights(MixingDistribution& q, ProbCache& cache,
                                   const WeightSolveConfig& cfg);

/// argmax over t in [0, t_max] of n^-1 sum_i log(base_i + t dir_i), a concave
/// problem, by safeguarded Newton with bisection. Returns 0 on ties.
double maximize_log_step(std::span<const double> base, std::span<const double> dir,
                         double t_max);

/// argmax over alpha in [0, 1] of n^-1 sum_i log((1-alpha) mixed_i + alpha p_new_i).
double line_search_alpha(std::span<const double> mixed, std::span<const double> p_new);

/// Drops components with weight <= eps_tol (always keeping the heaviest one)
/// and renormalizes. Returns the kept indices in original order.
std::vector<std::size_t> prune(MixingDistribution& q, double eps_tol);

}  // namespace npmle
