#pragma once

// The mixing distribution Q, the cached n x S matrix of component choice
// probabilities, the scaled log-likelihood ll_n(Q) and the directional
// derivative D(beta; Q) toward a new component.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "npmle/kernel.hpp"

namespace npmle {

class Dataset;

/// Floor applied to probabilities inside logarithms and ratio denominators.
inline constexpr double kProbFloor = 1e-300;

/// Point mass (all cov_diag zero) or diagonal Gaussian over the mixed
/// coefficients.
struct Component {
  std::vector<double> location;
  std::vector<double> cov_diag;
  double weight = 0.0;

  static Component point(std::vector<double> location, double weight = 1.0);
  bool is_point_mass() const;
  bool operator==(const Component&) const = default;
};

struct MixingDistribution {
  std::vector<Component> components;
  KernelSpec kernel;

  std::size_t size() const { return components.size(); }
  std::size_t dim() const { return kernel.mixed_dim(); }
  std::vector<double> weights() const;
  void set_weights(std::span<const double> w);
  /// Rescales weights to sum to one.
  void normalize();
  /// Throws Error on negative weights, weights not summing to one (1e-10),
  /// negative variances or dimension mismatches.
  void validate() const;
  bool operator==(const MixingDistribution&) const = default;
};

/// Soft cap n+1 (returns false, caller warns); throws Error beyond 2(n+1).
bool check_component_cap(const MixingDistribution& q, std::size_t n_obs);

/// Column-major n x S matrix with P[i, s] = p(y_i | X_i; component s) and the
/// mixed probabilities sum_s w_s P[i, s].
class ProbCache {
 public:
  ProbCache() = default;
  ProbCache(std::size_t n, std::size_t s);

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return s_; }
  std::span<const double> column(std::size_t s) const { return {p_.data() + s * n_, n_}; }
  std::span<double> column(std::size_t s) { return {p_.data() + s * n_, n_}; }
  std::span<const double> data() const { return p_; }
  std::span<double> data() { return p_; }
  const std::vector<double>& mixed() const { return mixed_; }
  /// Observations whose mixed probability hit kProbFloor at the last refresh.
  std::size_t floored() const { return floored_; }

  /// Recomputes the mixed probabilities for new weights (P unchanged).
  void refresh_mixed(std::span<const double> weights);
  void append_column(std::span<const double> probs);
  void keep_columns(std::span<const std::size_t> keep);

 private:
  std::size_t n_ = 0;
  std::size_t s_ = 0;
  std::vector<double> p_;
  std::vector<double> mixed_;
  std::size_t floored_ = 0;
};

/// Fills P with kernel probabilities (OpenMP over cells) and the mixture.
ProbCache build_cache(const Dataset& data, const MixingDistribution& q);

/// Recomputes column s after the component's location or covariance changed.
/// The mixed probabilities are left alone; call refresh_mixed afterwards.
void refresh_column(ProbCache& cache, const Dataset& data, const MixingDistribution& q,
                    std::size_t s);

/// (nT)^-1 sum_i log(mixed_i), floored.
double scaled_loglik(const ProbCache& cache);
double scaled_loglik(std::span<const double> mixed);

/// Per-observation probabilities of a candidate component.
std::vector<double> candidate_probs(const Dataset& data, const KernelSpec& kernel,
                                    const Component& candidate);

/// n^-1 sum_i (p_i / mixed_i - 1).
double gradient_from_probs(std::span<const double> mixed, std::span<const double> probs);

struct Gradient {
  double value = 0.0;
  std::vector<double> probs;  // candidate probabilities, reusable by line search
};

/// D(beta; Q) for a candidate component (location with cov_diag).
Gradient gradient_D(const Component& candidate, const MixingDistribution& q,
                    const ProbCache& cache, const Dataset& data);

/// D for many candidates at once; candidates are evaluated in parallel.
std::vector<Gradient> gradient_D_batch(std::span<const Component> candidates,
                                       const MixingDistribution& q, const ProbCache& cache,
                                       const Dataset& data);

struct OptimalityReport {
  double max_D = 0.0;
  std::vector<double> argmax;
  std::vector<double> support_D;       // D(b_s; Q) per component
  double max_abs_support_D = 0.0;      // over components with weight > active_tol
  bool ok = false;
};

/// First-order conditions: max over probes of D <= tol and |D(b_s; Q)| <= tol
/// for every support point with weight > active_tol. Probe points inherit
/// `probe_cov`.
OptimalityReport check_optimality(const MixingDistribution& q, const Dataset& data,
                                  std::span<const std::vector<double>> probes,
                                  std::span<const double> probe_cov, double tol,
                                  double active_tol = 1e-3);

/// Tensor grid with `per_axis` points per coordinate over [lo_k, hi_k].
std::vector<std::vector<double>> tensor_grid(std::span<const double> lo,
                                             std::span<const double> hi, std::size_t per_axis);

}  // namespace npmle
