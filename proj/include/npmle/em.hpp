#pragma once

// EM for latent-class / Gaussian-component mixtures of choice kernels.
// E-step: responsibilities. M-step: each component's location maximizes its
// responsibility-weighted log-likelihood (variances stay fixed). Weights take
// the closed-form update pi_s = n^-1 sum_i gamma_is.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "npmle/mixture.hpp"

namespace npmle {

class Dataset;

struct EmConfig {
  std::size_t n_em = 5;
  std::size_t mstep_max_evals = 200;
  double mstep_tol = 1e-6;
  double mstep_step = 0.25;         // initial simplex edge
  double min_responsibility = 1e-8; // skip the M-step below this total

  void validate() const;
};

/// Column-major n x S responsibilities.
std::vector<double> e_step(const ProbCache& cache, std::span<const double> weights);

/// Weighted objective n^-1 sum_i gamma_i log p_i(location) for one component.
using ComponentObjective = std::function<double(std::span<const double> location)>;

struct LocationUpdate {
  std::vector<double> location;
  double before = 0.0;
  double after = 0.0;
  std::size_t evaluations = 0;
};

/// Direct-search update of one location; `after >= before` always.
LocationUpdate update_location(const ComponentObjective& objective,
                               std::span<const double> start, const EmConfig& cfg);

struct MStepReport {
  std::vector<bool> updated;       // component moved (not skipped)
  std::vector<double> before;      // weighted objective per component
  std::vector<double> after;
};

/// Updates every component location of `q` in place; covariances untouched.
MStepReport m_step(const Dataset& data, std::span<const double> gamma, MixingDistribution& q,
                   const EmConfig& cfg);

struct EmResult {
  MixingDistribution q;
  ProbCache cache;
  std::vector<double> loglik;     // ll_n before the first and after each iteration
  bool ascent_ok = true;          // no decrease beyond 1e-10
};

EmResult em_run(const Dataset& data, MixingDistribution q0, const EmConfig& cfg);
/// Same, reusing a cache already matching `q0`.
EmResult em_run(const Dataset& data, MixingDistribution q0, ProbCache cache,
                const EmConfig& cfg);

}  // namespace npmle
