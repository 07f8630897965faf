#pragma once

// Cross-sectional choice data, the five synthetic data-generating cases and
// their ground-truth mixing distributions, and the CSV dataset format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "npmle/kernel.hpp"

namespace npmle {

/// One choice per individual among `alternatives` options, one regressor per
/// alternative. Choices are stored zero-based; files use 1..J.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t alternatives, std::vector<double> x, std::vector<std::size_t> choice,
          std::vector<double> true_prob = {});

  std::size_t size() const { return choice_.size(); }
  std::size_t alternatives() const { return alternatives_; }
  std::span<const double> regressors(std::size_t i) const {
    return {x_.data() + i * alternatives_, alternatives_};
  }
  std::size_t choice(std::size_t i) const { return choice_[i]; }
  bool has_true_prob() const { return !true_prob_.empty(); }
  const std::vector<double>& true_prob() const { return true_prob_; }
  const std::vector<double>& x() const { return x_; }
  const std::vector<std::size_t>& choices() const { return choice_; }

  /// First `n` individuals (n <= size()).
  Dataset head(std::size_t n) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t alternatives_ = 0;
  std::vector<double> x_;
  std::vector<std::size_t> choice_;
  std::vector<double> true_prob_;
};

enum class CaseId { C1a, C1b, C1c, C2a, C2b };

std::string to_string(CaseId c);
/// Throws Error for anything other than 1a, 1b, 1c, 2a, 2b.
CaseId case_from_string(const std::string& s);

/// Ground-truth distribution of the mixed coefficients of one case.
class TrueMixing {
 public:
  enum class Kind { PointMasses, Normal, LogNormal };

  static TrueMixing point_masses(std::vector<std::vector<double>> locations,
                                 std::vector<double> weights, std::vector<std::string> labels);
  static TrueMixing normal(double mean, double sd, std::string label);
  static TrueMixing log_normal(double mu, double sigma, std::string label);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Joint CDF P(B_1 <= z_1, ..., B_d <= z_d).
  double cdf(std::span<const double> z) const;
  std::vector<double> mean() const;
  /// P(B_k < 0).
  double negative_mass(std::size_t k) const;

 private:
  Kind kind_ = Kind::PointMasses;
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> locations_;
  std::vector<double> weights_;
  double p1_ = 0.0;
  double p2_ = 1.0;
};

/// Latent draws behind one simulated dataset, exposed for testing.
struct SimulationDraws {
  std::vector<double> x;       // n x 3 regressors
  std::vector<double> beta;    // n slopes
  std::vector<double> asc;     // n x 3 alternative constants (column 0 is zero)
  std::vector<double> errors;  // n x 3 error terms including any mean shift
  std::vector<int> error_component;  // 2b: which error distribution (0/1)
};

SimulationDraws simulate_draws(CaseId c, std::size_t n, std::uint64_t seed);

struct Simulation {
  Dataset data;
  TrueMixing truth;
};

/// Generates n individuals of case `c`. Individual i depends only on (seed, i),
/// so a larger n extends a smaller one.
Simulation simulate_case(CaseId c, std::size_t n, std::uint64_t seed);
TrueMixing true_mixing(CaseId c);

/// Exact generating probability of the observed choice for row i.
double true_choice_prob(CaseId c, std::span<const double> x, std::size_t chosen);

/// Error covariance of the (first) generating error distribution.
std::vector<double> case_error_cov(CaseId c);
/// Covariance of the second error component of case 2b.
std::vector<double> case2b_shifted_cov();
/// Mixed map of the case: slope for 1a-1c, ASCs 2 and 3 for 2a-2b.
KernelSpec case_kernel(CaseId c, std::vector<double> error_cov);

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace npmle
