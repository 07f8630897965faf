#include "npmle/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npmle/error.hpp"

namespace npmle {

DirectSearchResult nelder_mead_maximize(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> start, double step,
                                        std::size_t max_evals, double tol) {
  const std::size_t d = start.size();
  if (d == 0) throw Error("nelder_mead: empty start point");
  if (!(step > 0.0) || !(tol > 0.0)) throw Error("nelder_mead: step and tol must be positive");

  // Work on the negated objective (minimization).
  std::size_t evals = 0;
  auto cost = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : -v;
  };

  std::vector<std::vector<double>> pts(d + 1, std::vector<double>(start.begin(), start.end()));
  for (std::size_t k = 0; k < d; ++k) pts[k + 1][k] += step;
  std::vector<double> vals(d + 1);
  for (std::size_t k = 0; k <= d; ++k) vals[k] = cost(pts[k]);

  std::vector<std::size_t> order(d + 1);
  std::vector<double> centroid(d), xr(d), xe(d), xc(d);
  bool converged = false;

  auto diameter = [&] {
    double dm = 0.0;
    for (std::size_t k = 1; k <= d; ++k)
      for (std::size_t j = 0; j < d; ++j) dm = std::max(dm, std::abs(pts[k][j] - pts[0][j]));
    return dm;
  };
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    // Stable: ties keep the earlier vertex (the start point first) as best.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<std::vector<double>> p2;
    std::vector<double> v2;
    for (auto k : order) {
      p2.push_back(pts[k]);
      v2.push_back(vals[k]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };

  while (true) {
    sort_simplex();
    if (diameter() <= tol) {
      converged = true;
      break;
    }
    if (evals >= max_evals) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += pts[k][j] / static_cast<double>(d);
    const auto& worst = pts[d];

    for (std::size_t j = 0; j < d; ++j) xr[j] = centroid[j] + (centroid[j] - worst[j]);
    const double fr = cost(xr);
    if (fr < vals[0]) {
      for (std::size_t j = 0; j < d; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - worst[j]);
      const double fe = cost(xe);
      if (fe < fr) {
        pts[d] = xe;
        vals[d] = fe;
      } else {
        pts[d] = xr;
        vals[d] = fr;
      }
      continue;
    }
    if (fr < vals[d - 1]) {
      pts[d] = xr;
      vals[d] = fr;
      continue;
    }
    const bool outside = fr < vals[d];
    for (std::size_t j = 0; j < d; ++j)
      xc[j] = outside ? centroid[j] + 0.5 * (xr[j] - centroid[j])
                      : centroid[j] + 0.5 * (worst[j] - centroid[j]);
    const double fc = cost(xc);
    if (fc < std::min(fr, vals[d])) {
      pts[d] = xc;
      vals[d] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t k = 1; k <= d; ++k) {
      for (std::size_t j = 0; j < d; ++j) pts[k][j] = pts[0][j] + 0.5 * (pts[k][j] - pts[0][j]);
      vals[k] = cost(pts[k]);
    }
  }

  DirectSearchResult r;
  r.x = pts[0];
  r.value = -vals[0];
  r.evaluations = evals;
  r.converged = converged;
  return r;
}

}  // namespace npmle
