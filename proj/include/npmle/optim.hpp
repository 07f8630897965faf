#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace npmle {

struct DirectSearchResult {
  std::vector<double> x;
  double value = 0.0;  // objective at x (maximized)
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead simplex search maximizing `f`, started at `start` with an
/// axis-aligned initial simplex of edge `step`. Stops when the simplex
/// diameter falls below `tol` or after `max_evals` evaluations. The returned
/// point is never worse than `start`.
DirectSearchResult nelder_mead_maximize(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> start, double step,
                                        std::size_t max_evals, double tol);

}  // namespace npmle
