#pragma once

// Accuracy measures of an estimated mixing distribution against the
// data-generating process of a simulated dataset.

#include <cstddef>
#include <span>
#include <vector>

#include "npmle/mixture.hpp"

namespace npmle {

class Dataset;
class TrueMixing;

struct MetricsReport {
  double ll_gap = 0.0;         // ll_n(Q_hat) - ll_n(Q0)
  double prob_mae = 0.0;       // mean |p_hat(y_i) - p0(y_i)|
  double cdf_dist = 0.0;       // L1 distance of the CDFs on [-4, 4]^d
  double cdf_ks = 0.0;         // sup distance on the same grid
  double cdf_step = 0.0;       // grid step used for the two above
  double pct_neg_err = 0.0;    // |P_hat(beta < 0) - P0(beta < 0)|; NaN without a slope
  double mean_err_norm = 0.0;  // |E_hat - E0|_2
};

/// Per-observation mixture probability of the observed choice.
std::vector<double> fitted_probs(const Dataset& data, const MixingDistribution& q);

/// Requires true_prob in the dataset.
double ll_gap(const Dataset& data, const MixingDistribution& q);
double prob_mae(const Dataset& data, const MixingDistribution& q);

/// P(B <= z) under q; Gaussian components use products of coordinate CDFs.
double mixture_cdf(const MixingDistribution& q, std::span<const double> z);

struct CdfDistance {
  double l1 = 0.0;
  double sup = 0.0;
  double step = 0.0;
};

/// Riemann sum of |C_q - C_true| over the grid (lo/step + j) * step <= hi per
/// axis, times step^d. step <= 0 picks 0.01 in one dimension, 0.05 otherwise.
CdfDistance cdf_dist(const MixingDistribution& q, const TrueMixing& truth, double step = 0.0,
                     double lo = -4.0, double hi = 4.0);

/// Mass of q with coordinate k below zero.
double pct_negative(const MixingDistribution& q, std::size_t k);

std::vector<double> mixture_mean(const MixingDistribution& q);
double mean_err_norm(const MixingDistribution& q, const TrueMixing& truth);

/// All measures. pct_neg_err is computed only when the mixed coordinate is
/// the slope (labelled "beta").
MetricsReport compute_metrics(const Dataset& data, const MixingDistribution& q,
                              const TrueMixing& truth);

}  // namespace npmle
