#include "npmle/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/kernels.hpp"

namespace npmle {

Component Component::point(std::vector<double> location, double weight) {
  Component c;
  c.cov_diag.assign(location.size(), 0.0);
  c.location = std::move(location);
  c.weight = weight;
  return c;
}

bool Component::is_point_mass() const {
  return std::all_of(cov_diag.begin(), cov_diag.end(), [](double v) { return v == 0.0; });
}

std::vector<double> MixingDistribution::weights() const {
  std::vector<double> w(components.size());
  for (std::size_t s = 0; s < w.size(); ++s) w[s] = components[s].weight;
  return w;
}

void MixingDistribution::set_weights(std::span<const double> w) {
  if (w.size() != components.size()) throw Error("set_weights: size mismatch");
  for (std::size_t s = 0; s < w.size(); ++s) components[s].weight = w[s];
}

void MixingDistribution::normalize() {
  double total = 0.0;
  for (const auto& c : components) total += c.weight;
  if (!(total > 0.0)) throw Error("mixing distribution has no positive weight");
  for (auto& c : components) c.weight /= total;
}

void MixingDistribution::validate() const {
  if (components.empty()) throw Error("mixing distribution has no components");
  const std::size_t d = dim();
  double total = 0.0;
  for (std::size_t s = 0; s < components.size(); ++s) {
    const auto& c = components[s];
    if (c.location.size() != d || c.cov_diag.size() != d)
      throw Error("component " + std::to_string(s) + " does not match the kernel dimension");
    if (!(c.weight >= 0.0 && c.weight <= 1.0))
      throw Error("component " + std::to_string(s) + " has a weight outside [0, 1]");
    for (double v : c.cov_diag)
      if (!(v >= 0.0)) throw Error("component " + std::to_string(s) + " has a negative variance");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-10) throw Error("mixing weights do not sum to one");
}

bool check_component_cap(const MixingDistribution& q, std::size_t n_obs) {
  if (q.size() > 2 * (n_obs + 1))
    throw Error("mixing distribution has " + std::to_string(q.size()) +
                " components, more than twice the n+1 support bound");
  return q.size() <= n_obs + 1;
}

ProbCache::ProbCache(std::size_t n, std::size_t s)
    : n_(n), s_(s), p_(n * s, 0.0), mixed_(n, kProbFloor) {}

void ProbCache::refresh_mixed(std::span<const double> weights) {
  if (weights.size() != s_) throw Error("ProbCache: weight vector size mismatch");
  floored_ = parallel::mixture_probs(p_, n_, weights, mixed_);
}

void ProbCache::append_column(std::span<const double> probs) {
  if (probs.size() != n_) throw Error("ProbCache: column length mismatch");
  p_.insert(p_.end(), probs.begin(), probs.end());
  ++s_;
}

void ProbCache::keep_columns(std::span<const std::size_t> keep) {
  std::vector<double> next;
  next.reserve(keep.size() * n_);
  for (std::size_t s : keep) {
    if (s >= s_) throw Error("ProbCache: column index out of range");
    const auto col = column(s);
    next.insert(next.end(), col.begin(), col.end());
  }
  p_ = std::move(next);
  s_ = keep.size();
}

ProbCache build_cache(const Dataset& data, const MixingDistribution& q) {
  ProbCache cache(data.size(), q.size());
  parallel::fill_columns(data, q.kernel, q.components, cache.data());
  cache.refresh_mixed(q.weights());
  return cache;
}

void refresh_column(ProbCache& cache, const Dataset& data, const MixingDistribution& q,
                    std::size_t s) {
  parallel::fill_columns(data, q.kernel, std::span(&q.components[s], 1), cache.column(s));
}

double scaled_loglik(std::span<const double> mixed) {
  if (mixed.empty()) throw Error("scaled_loglik: no observations");
  double sum = 0.0;
  for (double m : mixed) sum += std::log(std::max(m, kProbFloor));
  return sum / static_cast<double>(mixed.size());
}

double scaled_loglik(const ProbCache& cache) { return scaled_loglik(cache.mixed()); }

std::vector<double> candidate_probs(const Dataset& data, const KernelSpec& kernel,
                                    const Component& candidate) {
  std::vector<double> probs(data.size());
  serial::fill_columns(data, kernel, std::span(&candidate, 1), probs);
  return probs;
}

double gradient_from_probs(std::span<const double> mixed, std::span<const double> probs) {
  if (mixed.size() != probs.size() || mixed.empty())
    throw Error("gradient: probability vectors disagree in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < mixed.size(); ++i)
    sum += probs[i] / std::max(mixed[i], kProbFloor) - 1.0;
  return sum / static_cast<double>(mixed.size());
}

Gradient gradient_D(const Component& candidate, const MixingDistribution& q,
                    const ProbCache& cache, const Dataset& data) {
  Gradient g;
  g.probs = candidate_probs(data, q.kernel, candidate);
  g.value = gradient_from_probs(cache.mixed(), g.probs);
  return g;
}

std::vector<Gradient> gradient_D_batch(std::span<const Component> candidates,
                                       const MixingDistribution& q, const ProbCache& cache,
                                       const Dataset& data) {
  std::vector<Gradient> out(candidates.size());
  std::string failure;
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < m; ++c) {
    try {
      out[c] = gradient_D(candidates[c], q, cache, data);
    } catch (const std::exception& e) {
#pragma omp critical(npmle_batch_failure)
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw Error(failure);
  return out;
}

OptimalityReport check_optimality(const MixingDistribution& q, const Dataset& data,
                                  std::span<const std::vector<double>> probes,
                                  std::span<const double> probe_cov, double tol,
                                  double active_tol) {
  const auto cache = build_cache(data, q);
  OptimalityReport r;
  r.max_D = -std::numeric_limits<double>::infinity();
  std::vector<Component> cands;
  cands.reserve(probes.size());
  for (const auto& p : probes) {
    Component c;
    c.location = p;
    c.cov_diag.assign(probe_cov.begin(), probe_cov.end());
    cands.push_back(std::move(c));
  }
  const auto grads = gradient_D_batch(cands, q, cache, data);
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (grads[k].value > r.max_D) {
      r.max_D = grads[k].value;
      r.argmax = probes[k];
    }
  r.support_D.resize(q.size());
  for (std::size_t s = 0; s < q.size(); ++s) {
    r.support_D[s] = gradient_from_probs(cache.mixed(), cache.column(s));
    if (q.components[s].weight > active_tol)
      r.max_abs_support_D = std::max(r.max_abs_support_D, std::abs(r.support_D[s]));
  }
  r.ok = r.max_D <= tol && r.max_abs_support_D <= tol;
  return r;
}

std::vector<std::vector<double>> tensor_grid(std::span<const double> lo,
                                             std::span<const double> hi, std::size_t per_axis) {
  if (lo.size() != hi.size() || lo.empty()) throw Error("tensor_grid: bad bounds");
  if (per_axis < 1) throw Error("tensor_grid: need at least one point per axis");
  const std::size_t d = lo.size();
  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= per_axis;
  std::vector<std::vector<double>> pts(total, std::vector<double>(d));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    // Last coordinate varies fastest.
    for (std::size_t k = d; k-- > 0;) {
      const std::size_t a = rem % per_axis;
      rem /= per_axis;
      pts[idx][k] = per_axis == 1 ? 0.5 * (lo[k] + hi[k])
                                  : lo[k] + (hi[k] - lo[k]) * static_cast<double>(a) /
                                                static_cast<double>(per_axis - 1);
    }
  }
  return pts;
}

}  // namespace npmle
