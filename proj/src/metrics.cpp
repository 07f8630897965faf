#include "npmle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "npmle/data.hpp"
#include "npmle/error.hpp"

namespace npmle {

std::vector<double> fitted_probs(const Dataset& data, const MixingDistribution& q) {
  q.validate();
  const auto cache = build_cache(data, q);
  return cache.mixed();
}

namespace {

void require_truth(const Dataset& data) {
  if (!data.has_true_prob()) throw Error("metrics: dataset carries no true probabilities");
}

std::size_t grid_count(double lo, double hi, double step) {
  return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

}  // namespace

double ll_gap(const Dataset& data, const MixingDistribution& q) {
  require_truth(data);
  const auto cache = build_cache(data, q);
  return scaled_loglik(cache) - scaled_loglik(data.true_prob());
}

double prob_mae(const Dataset& data, const MixingDistribution& q) {
  require_truth(data);
  const auto p = fitted_probs(data, q);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - data.true_prob()[i]);
  return sum / static_cast<double>(p.size());
}

double mixture_cdf(const MixingDistribution& q, std::span<const double> z) {
  if (z.size() != q.dim()) throw Error("mixture_cdf: dimension mismatch");
  double total = 0.0;
  for (const auto& c : q.components) {
    double f = c.weight;
    for (std::size_t k = 0; k < z.size() && f > 0.0; ++k) {
      const double v = c.cov_diag[k];
      if (v > 0.0)
        f *= normal_cdf((z[k] - c.location[k]) / std::sqrt(v));
      else if (c.location[k] > z[k])
        f = 0.0;
    }
    total += f;
  }
  return std::min(total, 1.0);
}

CdfDistance cdf_dist(const MixingDistribution& q, const TrueMixing& truth, double step,
                     double lo, double hi) {
  const std::size_t d = q.dim();
  if (truth.dim() != d) throw Error("cdf_dist: estimate and truth differ in dimension");
  if (!(hi > lo)) throw Error("cdf_dist: empty grid box");
  if (step <= 0.0) step = d == 1 ? 0.01 : 0.05;
  // Grid points are computed as integer multiples of the step so that
  // locations on the grid compare exactly.
  const std::size_t m = grid_count(lo, hi, step);
  std::size_t cells = 1;
  for (std::size_t k = 0; k < d; ++k) cells *= m;

  // Fixed-order sum over per-chunk partials keeps the result independent of
  // the thread count.
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (cells + kChunk - 1) / kChunk;
  std::vector<double> l1(chunks, 0.0), sup(chunks, 0.0);
  const std::ptrdiff_t nc = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    std::vector<double> z(d);
    const std::size_t end = std::min(cells, (static_cast<std::size_t>(c) + 1) * kChunk);
    for (std::size_t cell = static_cast<std::size_t>(c) * kChunk; cell < end; ++cell) {
      std::size_t rem = cell;
      for (std::size_t k = d; k-- > 0;) {
        z[k] = (lo / step + static_cast<double>(rem % m)) * step;
        rem /= m;
      }
      const double diff = std::abs(mixture_cdf(q, z) - truth.cdf(z));
      l1[c] += diff;
      sup[c] = std::max(sup[c], diff);
    }
  }
  CdfDistance r;
  r.step = step;
  for (std::size_t c = 0; c < chunks; ++c) {
    r.l1 += l1[c];
    r.sup = std::max(r.sup, sup[c]);
  }
  r.l1 *= std::pow(step, static_cast<double>(d));
  return r;
}

double pct_negative(const MixingDistribution& q, std::size_t k) {
  if (k >= q.dim()) throw Error("pct_negative: coordinate out of range");
  double total = 0.0;
  for (const auto& c : q.components) {
    const double v = c.cov_diag[k];
    if (v > 0.0)
      total += c.weight * normal_cdf(-c.location[k] / std::sqrt(v));
    else if (c.location[k] < 0.0)
      total += c.weight;
  }
  return std::clamp(total, 0.0, 1.0);
}

std::vector<double> mixture_mean(const MixingDistribution& q) {
  std::vector<double> m(q.dim(), 0.0);
  for (const auto& c : q.components)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += c.weight * c.location[k];
  return m;
}

double mean_err_norm(const MixingDistribution& q, const TrueMixing& truth) {
  if (truth.dim() != q.dim()) throw Error("mean_err_norm: dimension mismatch");
  const auto a = mixture_mean(q);
  const auto b = truth.mean();
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

MetricsReport compute_metrics(const Dataset& data, const MixingDistribution& q,
                              const TrueMixing& truth) {
  require_truth(data);
  q.validate();
  MetricsReport r;
  const auto cache = build_cache(data, q);
  r.ll_gap = scaled_loglik(cache) - scaled_loglik(data.true_prob());
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    sum += std::abs(cache.mixed()[i] - data.true_prob()[i]);
  r.prob_mae = sum / static_cast<double>(data.size());
  const auto cd = cdf_dist(q, truth);
  r.cdf_dist = cd.l1;
  r.cdf_ks = cd.sup;
  r.cdf_step = cd.step;
  if (truth.dim() == 1 && truth.labels()[0] == "beta")
    r.pct_neg_err = std::abs(pct_negative(q, 0) - truth.negative_mass(0));
  else
    r.pct_neg_err = std::numeric_limits<double>::quiet_NaN();
  r.mean_err_norm = mean_err_norm(q, truth);
  return r;
}

}  // namespace npmle
