#pragma once

// Choice-probability kernels p(y = j | X, beta) for the multinomial logit and
// the three-alternative multinomial probit, plus the evaluation of a single
// mixture component (point mass or diagonal Gaussian) for one observation.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace npmle {

class Dataset;
struct Component;

inline constexpr std::size_t kMaxAlternatives = 16;

enum class Family { MNL, MNP };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

/// Either a fixed utility coefficient or a coordinate of the mixed vector.
struct Coefficient {
  bool mixed = false;
  std::size_t index = 0;  // coordinate in Component::location when mixed
  double value = 0.0;     // used when fixed

  static Coefficient fixed(double v) { return {false, 0, v}; }
  static Coefficient mixed_at(std::size_t k) { return {true, k, 0.0}; }

  bool operator==(const Coefficient&) const = default;
};

/// Utility U_j = x_j * slope + asc_j + e_j with e ~ N(0, error_cov) (MNP) or
/// iid extreme value (MNL).
struct KernelSpec {
  Family family = Family::MNP;
  std::size_t alternatives = 3;
  std::vector<double> error_cov;  // alternatives^2, row major; MNP only
  Coefficient slope = Coefficient::fixed(0.0);
  std::vector<Coefficient> asc;   // one per alternative

  /// Number of mixed coordinates.
  std::size_t mixed_dim() const;

  /// Throws Error when the covariance is not symmetric positive-definite or
  /// the mixed map does not cover 0..mixed_dim()-1 exactly once.
  void validate() const;

  bool operator==(const KernelSpec&) const = default;
};

/// Identity error covariance, slope mixed, ASCs fixed at zero.
KernelSpec slope_mixed_kernel(std::vector<double> error_cov, std::size_t alternatives = 3);
/// Slope fixed at `slope`, ASCs 2..J mixed (ASC 1 fixed at zero).
KernelSpec asc_mixed_kernel(std::vector<double> error_cov, double slope = 1.0,
                            std::size_t alternatives = 3);
std::vector<double> identity_cov(std::size_t alternatives, double scale = 1.0);

/// Standard normal CDF.
double normal_cdf(double x);

/// P(Z1 <= h, Z2 <= k) for a standard bivariate normal with correlation rho.
/// Accepts +-infinity for h and k. Throws Error for rho outside [-1, 1].
double bvn_cdf(double h, double k, double rho);

/// Softmax with max subtraction. Throws Error on NaN input.
std::vector<double> mnl_prob(std::span<const double> utilities);

/// P(U_j >= U_k for all k) with U = V + e, e ~ N(0, sigma). Supports two and
/// three alternatives; larger choice sets throw Error ("unsupported").
/// `sigma` is alternatives^2 row major and must be positive-definite.
double mnp_prob(std::span<const double> utilities, std::span<const double> sigma,
                std::size_t chosen);

/// Probability of the observed choice of row `row` under one mixture
/// component. Gaussian components are absorbed into the MNP error covariance;
/// the MNL kernel accepts point masses only.
double component_prob(const Dataset& data, std::size_t row, const KernelSpec& spec,
                      const Component& c);

/// Same as component_prob with explicit regressors/choice, no validation of
/// `spec`. Used in the hot loops.
double component_prob_unchecked(std::span<const double> x, std::size_t chosen,
                                const KernelSpec& spec, std::span<const double> location,
                                std::span<const double> cov_diag);

}  // namespace npmle
