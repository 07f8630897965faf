#pragma once

// Support-point management and the estimation drivers:
//  * the initial tensor grid of Gaussian components,
//  * three-way splitting of Gaussian components,
//  * the adaptive-grid estimator GR (split, keep children with D > 0,
//    re-optimize weights, prune),
//  * Metropolis-Hastings sampling of candidate support points driven by D,
//  * grouped greedy insertion with line search,
//  * the EM-based drivers EM and EM-GR.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "npmle/em.hpp"
#include "npmle/mixture.hpp"
#include "npmle/weights.hpp"

namespace npmle {

class Dataset;

struct AdaptConfig {
  std::size_t n_g = 100;            // MH candidates per round
  std::size_t grid_target = 1000;   // initial grid size target
  std::size_t m_l = 10;             // components split per refinement round
  std::array<double, 3> split_offsets = {-1.18, 0.0, 1.18};  // in parent sd units
  std::array<double, 3> split_weights = {0.24, 0.52, 0.24};
  double split_var_factor = 0.25;   // child variance / parent variance
  std::size_t grid_iters = 15;      // GR refinement rounds
  std::size_t outer_rounds = 5;     // EM-driver rounds
  double eps_tol = 1e-3;            // pruning threshold
  std::vector<double> lower = {-4.0};
  std::vector<double> upper = {4.0};
  double grid_var = 0.25;           // initial GR component variance per coordinate
  double em_var = 0.0;              // component variance in the EM drivers
  std::size_t probe_points = 100;   // probe grid size for MH start and max_D
  std::size_t mh_thin = 5;
  double mh_eps = 1e-6;
  double mh_min_gradient = 1e-6;    // D at or below this counts as non-positive
  double proposal_scale = 0.0;      // 0: 0.5 * range / probe points per axis
  std::size_t groups = 0;           // 0: one group per current support point
  double round_tol = 1e-8;          // early stop on ll improvement per round

  /// Sets lower/upper to [lo, hi]^d.
  void set_box(std::size_t d, double lo, double hi);
  void validate(std::size_t d) const;
};

/// Largest x with x^d <= grid_target.
std::size_t grid_points_per_axis(std::size_t grid_target, std::size_t d);

/// x^d Gaussian components on the tensor grid, variance `cov0` per coordinate,
/// uniform weights. Throws Error when x < 2 or x^d > 1e5.
MixingDistribution init_grid(std::span<const double> lower, std::span<const double> upper,
                             double cov0, std::size_t grid_target, const KernelSpec& kernel);

/// 3^d children: locations b_k + offset * sd_k, variance factor applied per
/// coordinate, weights parent * product of split weights.
std::vector<Component> split_component(const Component& c, const AdaptConfig& cfg);

struct TraceRow {
  std::size_t round = 0;
  std::string step;
  double ll = 0.0;
  std::size_t n_components = 0;
  double max_D = 0.0;
};
using Trace = std::vector<TraceRow>;

void write_trace_csv(const Trace& trace, const std::filesystem::path& path);

struct RefineResult {
  MixingDistribution q;
  Trace trace;
};

/// The GR estimator: grid_iters rounds of split / keep D > 0 / re-optimize /
/// prune. The log-likelihood after each round never falls below the previous
/// round (a round that would lower it is discarded).
RefineResult refine_grid(const Dataset& data, MixingDistribution q, const AdaptConfig& cfg,
                         const WeightSolveConfig& wcfg);

using Criterion = std::function<double(std::span<const double>)>;

/// Random-walk Metropolis-Hastings targeting max(criterion, 0) + eps inside
/// the box, Gaussian proposals reflected at the bounds. Returns n_g states
/// taken every `thin` steps; empty when no start point has criterion above
/// `min_gradient`.
std::vector<std::vector<double>> mh_sample(const Criterion& criterion,
                                           std::span<const std::vector<double>> start_probes,
                                           std::span<const double> lower,
                                           std::span<const double> upper, std::size_t n_g,
                                           double proposal_scale, std::size_t thin, double eps,
                                           double min_gradient, std::uint64_t seed);

/// Candidate locations from the D(. ; Q) landscape of the data.
std::vector<std::vector<double>> mh_sample_support(const Dataset& data,
                                                   const MixingDistribution& q,
                                                   const ProbCache& cache,
                                                   std::span<const double> candidate_cov,
                                                   const AdaptConfig& cfg, std::uint64_t seed);

struct Addition {
  std::size_t group = 0;
  double gradient = 0.0;  // D before the insertion
  double alpha = 0.0;
};

/// Groups candidates by the nearest of the current support points along a
/// randomly drawn coordinate, then inserts the best candidate per group by
/// line search. `q` and `cache` are updated in place.
std::vector<Addition> group_and_add(const Dataset& data, MixingDistribution& q,
                                    ProbCache& cache, std::span<const Component> candidates,
                                    std::size_t m_groups, std::uint64_t seed);

enum class Mode { GR, EM, EM_GR };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct EstimateResult {
  MixingDistribution q;
  Trace trace;
  double loglik = 0.0;
  std::size_t weight_solver_warnings = 0;
  bool over_soft_cap = false;
};

/// Runs the requested driver from `q0`. GR expects init_grid output; EM
/// expects the grid (or any start) with the EM kernel; EM_GR expects the GR
/// estimate re-targeted to the EM kernel.
EstimateResult estimate(const Dataset& data, MixingDistribution q0, const EmConfig& em_cfg,
                        const AdaptConfig& cfg, const WeightSolveConfig& wcfg, Mode mode,
                        std::uint64_t seed);

}  // namespace npmle
