#include "npmle/em.hpp"

#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/kernels.hpp"
#include "npmle/optim.hpp"

namespace npmle {

void EmConfig::validate() const {
  if (n_em == 0 || mstep_max_evals == 0) throw Error("EM: step counts must be positive");
  if (!(mstep_tol > 0.0) || !(mstep_step > 0.0)) throw Error("EM: tolerances must be positive");
}

std::vector<double> e_step(const ProbCache& cache, std::span<const double> weights) {
  if (weights.size() != cache.cols()) throw Error("e_step: weight vector size mismatch");
  std::vector<double> gamma(cache.rows() * cache.cols());
  parallel::responsibilities(cache.data(), cache.rows(), weights, gamma);
  return gamma;
}

LocationUpdate update_location(const ComponentObjective& objective,
                               std::span<const double> start, const EmConfig& cfg) {
  LocationUpdate u;
  u.before = objective(start);
  const auto r = nelder_mead_maximize(objective, start, cfg.mstep_step, cfg.mstep_max_evals,
                                      cfg.mstep_tol);
  u.evaluations = r.evaluations;
  if (r.value >= u.before) {
    u.location = r.x;
    u.after = r.value;
  } else {
    u.location.assign(start.begin(), start.end());
    u.after = u.before;
  }
  return u;
}

MStepReport m_step(const Dataset& data, std::span<const double> gamma, MixingDistribution& q,
                   const EmConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.size();
  const std::size_t S = q.size();
  if (gamma.size() != n * S) throw Error("m_step: responsibility matrix size mismatch");

  MStepReport rep;
  rep.updated.assign(S, false);
  rep.before.assign(S, 0.0);
  rep.after.assign(S, 0.0);
  std::string failure;

  const std::ptrdiff_t comps = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < comps; ++s) {
    try {
      const auto g = gamma.subspan(static_cast<std::size_t>(s) * n, n);
      double total = 0.0;
      for (double v : g) total += v;
      if (total < cfg.min_responsibility) continue;

      auto& comp = q.components[s];
      const auto& cov = comp.cov_diag;
      const KernelSpec& kernel = q.kernel;
      ComponentObjective objective = [&](std::span<const double> loc) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (g[i] == 0.0) continue;
          const double p = component_prob_unchecked(data.regressors(i), data.choice(i), kernel,
                                                    loc, cov);
          sum += g[i] * std::log(std::max(p, kProbFloor));
        }
        return sum / static_cast<double>(n);
      };
      const auto u = update_location(objective, comp.location, cfg);
      rep.before[s] = u.before;
      rep.after[s] = u.after;
      rep.updated[s] = true;
      comp.location = u.location;
    } catch (const std::exception& e) {
#pragma omp critical(npmle_mstep_failure)
      if (failure.empty()) failure = "M-step, component " + std::to_string(s) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw Error(failure);
  return rep;
}

EmResult em_run(const Dataset& data, MixingDistribution q0, const EmConfig& cfg) {
  auto cache = build_cache(data, q0);
  return em_run(data, std::move(q0), std::move(cache), cfg);
}

EmResult em_run(const Dataset& data, MixingDistribution q0, ProbCache cache,
                const EmConfig& cfg) {
  cfg.validate();
  q0.validate();
  if (cache.rows() != data.size() || cache.cols() != q0.size())
    throw Error("em_run: cache does not match the mixing distribution");

  EmResult res{std::move(q0), std::move(cache), {}, true};
  auto& q = res.q;
  const std::size_t n = data.size();
  res.loglik.push_back(scaled_loglik(res.cache));

  for (std::size_t it = 0; it < cfg.n_em; ++it) {
    const auto gamma = e_step(res.cache, q.weights());
    const auto rep = m_step(data, gamma, q, cfg);
    for (std::size_t s = 0; s < q.size(); ++s)
      if (rep.updated[s]) refresh_column(res.cache, data, q, s);

    std::vector<double> w(q.size());
    for (std::size_t s = 0; s < q.size(); ++s) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += gamma[s * n + i];
      w[s] = sum / static_cast<double>(n);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    q.set_weights(w);
    res.cache.refresh_mixed(w);

    const double ll = scaled_loglik(res.cache);
    if (ll < res.loglik.back() - 1e-10) res.ascent_ok = false;
    res.loglik.push_back(ll);
  }
  return res;
}

}  // namespace npmle
